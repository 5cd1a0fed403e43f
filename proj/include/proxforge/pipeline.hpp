#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "proxforge/conversation.hpp"
#include "proxforge/eval.hpp"
#include "proxforge/stats.hpp"

namespace proxforge {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kHeaderKey = "proxforge_header";

/// Resolves an image record to its depth/disparity map. Implementations must
/// be safe to call from multiple threads. Returns nullopt when no map exists.
class DepthSource {
public:
    virtual ~DepthSource() = default;
    virtual std::optional<LoadedMap> load(const SceneRecord& record) = 0;
};

/// Looks for <dir>/<image_id>.pfm, .png, .rawf32 (in that order).
class DirectoryDepthSource : public DepthSource {
public:
    explicit DirectoryDepthSource(std::string dir) : dir_(std::move(dir)) {}
    std::optional<LoadedMap> load(const SceneRecord& record) override;

private:
    std::string dir_;
};

/// Computes maps on the fly; used by tests and benchmarks.
class CallbackDepthSource : public DepthSource {
public:
    using Fn = std::function<std::optional<LoadedMap>(const SceneRecord&)>;
    explicit CallbackDepthSource(Fn fn) : fn_(std::move(fn)) {}
    std::optional<LoadedMap> load(const SceneRecord& record) override { return fn_(record); }

private:
    Fn fn_;
};

/// Serialized provenance for every output file: the effective config plus
/// content hashes of the config, template set and lexicon.
std::string file_header_line(std::string_view format_name, const GenConfig& config,
                             const TemplateSet& templates, const Lexicon& lexicon);

struct GenerateResult {
    std::size_t records_in = 0;
    std::size_t conversations = 0;
    std::size_t perception = 0;
    std::size_t reasoning = 0;
    std::vector<SkipEntry> skips;
};

/// records + depth maps -> conversation JSONL (header line first). Output is
/// byte-identical for any `jobs`; records are emitted in input order.
GenerateResult generate_dataset(const std::vector<SceneRecord>& records, DepthSource& depth,
                                const GenConfig& config, std::string& out_jsonl, int jobs = 1,
                                const TemplateSet& templates = TemplateSet::builtin(),
                                const Lexicon& lexicon = Lexicon::builtin());

struct ConvertResult {
    std::size_t perception_items = 0;
    std::size_t proximity_items = 0;
    std::vector<SkipEntry> skips;
};

ConvertResult write_eval_set(const EvalSet& set, const GenConfig& config,
                             const TemplateSet& templates, const Lexicon& lexicon,
                             std::string& eval_jsonl, std::string& key_jsonl);

// ---- JSONL readers (tolerate and skip a header line) ------------------------

std::vector<Conversation> read_conversations_jsonl(const std::string& path);
std::vector<EvalItem> read_eval_jsonl(const std::string& path);
std::vector<KeyEntry> read_key_jsonl(const std::string& path);
std::vector<ModelResponse> read_responses_jsonl(const std::string& path);

std::string responses_to_jsonl(const std::vector<ModelResponse>& responses,
                               const GenConfig& config, const TemplateSet& templates,
                               const Lexicon& lexicon);

/// Streaming stats over a conversation JSONL file.
StatsReport stats_from_file(const std::string& path);

std::string score_report_to_json(const ScoreReport& report, const GenConfig& config,
                                 const TemplateSet& templates, const Lexicon& lexicon);

/// StatsReport::to_json() plus the standard provenance block.
std::string stats_report_to_json(const StatsReport& report, const GenConfig& config,
                                 const TemplateSet& templates, const Lexicon& lexicon);

// ---- small file helpers ------------------------------------------------------

std::string read_file(const std::string& path);            // throws ParseError if unreadable
void write_file(const std::string& path, std::string_view bytes);

std::string rejects_to_jsonl(const std::vector<RecordReject>& rejects,
                             const std::vector<SkipEntry>& skips);

} // namespace proxforge
