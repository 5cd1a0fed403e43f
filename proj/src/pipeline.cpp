#include "proxforge/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "proxforge/errors.hpp"
#include "proxforge/hash.hpp"

namespace proxforge {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::optional<LoadedMap> DirectoryDepthSource::load(const SceneRecord& record) {
    for (const char* ext : {".pfm", ".png", ".rawf32"}) {
        const fs::path path = fs::path(dir_) / (record.image_id + ext);
        std::error_code ec;
        if (fs::exists(path, ec))
            return read_depth_file_path(path.string());
    }
    return std::nullopt;
}

namespace {

ordered_json config_to_json(const GenConfig& config) {
    return ordered_json{{"seed", config.seed},
                        {"max_pairs_per_image", config.max_pairs_per_image},
                        {"perception_cap", config.perception_cap},
                        {"direct_ratio", config.direct_ratio},
                        {"epsilon", config.epsilon},
                        {"median_window", config.median_window},
                        {"equal_tie_rule", "2dp"},
                        {"sqrel_denominator", config.sqrel_denominator},
                        {"audit_threshold", config.audit_threshold},
                        {"system_message", config.system_message}};
}

ordered_json provenance_json(const GenConfig& config, const TemplateSet& templates,
                             const Lexicon& lexicon) {
    const ordered_json cfg = config_to_json(config);
    return ordered_json{{"version", std::string(kToolVersion)},
                        {"config", cfg},
                        {"config_hash", hash_hex(fnv1a64(cfg.dump()))},
                        {"template_hash", hash_hex(templates.content_hash())},
                        {"lexicon_hash", hash_hex(lexicon.content_hash)}};
}

bool is_header_line(const std::string& line) {
    return line.find("\"proxforge_header\"") != std::string::npos && line.find('{') == 0;
}

// Per-record generation shared by the sequential and threaded paths.
struct RecordOutput {
    std::string jsonl;
    std::vector<SkipEntry> skips;
    std::size_t perception = 0;
    std::size_t reasoning = 0;
};

RecordOutput process_record(const SceneRecord& record, DepthSource& depth, const GenConfig& config,
                            const TemplateSet& templates, const Lexicon& lexicon) {
    RecordOutput out;
    std::optional<LoadedMap> loaded;
    try {
        loaded = depth.load(record);
    } catch (const FormatError& e) {
        out.skips.push_back({record.image_id, "depth_read_error", e.what()});
        return out;
    }
    if (!loaded) {
        out.skips.push_back({record.image_id, "missing_depth_map", ""});
        return out;
    }
    if (record.width > 0 && (record.width != loaded->width || record.height != loaded->height)) {
        out.skips.push_back({record.image_id, "depth_size_mismatch",
                             std::to_string(record.width) + "x" + std::to_string(record.height) +
                                 " image vs " + std::to_string(loaded->width) + "x" +
                                 std::to_string(loaded->height) + " map"});
        return out;
    }

    DepthMap map;
    try {
        map = to_normalized_depth(*loaded, config.epsilon);
    } catch (const DegenerateMapError& e) {
        out.skips.push_back({record.image_id, "degenerate_map", e.what()});
        return out;
    }

    SceneRecord labeled = record;
    for (auto& obj : labeled.objects) {
        try {
            obj.depth_label = sample_object_depth(map, obj.cx, obj.cy, config.median_window);
        } catch (const OutOfBoundsError& e) {
            out.skips.push_back(
                {record.image_id, "center_out_of_bounds", obj.object_id + ": " + e.what()});
        }
    }

    BuildResult built = build_conversations(labeled, config, config.seed, templates, lexicon);
    out.skips.insert(out.skips.end(), built.skips.begin(), built.skips.end());
    for (const Conversation& conv : built.conversations) {
        out.jsonl += conversation_to_json(conv);
        out.jsonl += '\n';
        (conv.stage == Stage::Perception ? out.perception : out.reasoning) += 1;
    }
    return out;
}

} // namespace

std::string file_header_line(std::string_view format_name, const GenConfig& config,
                             const TemplateSet& templates, const Lexicon& lexicon) {
    ordered_json header = provenance_json(config, templates, lexicon);
    header["format"] = std::string(format_name);
    return ordered_json{{std::string(kHeaderKey), std::move(header)}}.dump() + "\n";
}

GenerateResult generate_dataset(const std::vector<SceneRecord>& records, DepthSource& depth,
                                const GenConfig& config, std::string& out_jsonl, int jobs,
                                const TemplateSet& templates, const Lexicon& lexicon) {
    config.validate();
    GenerateResult result;
    result.records_in = records.size();

    std::vector<RecordOutput> outputs(records.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < records.size(); ++i)
            outputs[i] = process_record(records[i], depth, config, templates, lexicon);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(static_cast<std::size_t>(jobs));
        for (int t = 0; t < jobs; ++t)
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < records.size();
                     i = next.fetch_add(1))
                    outputs[i] = process_record(records[i], depth, config, templates, lexicon);
            });
        for (auto& w : workers)
            w.join();
    }

    out_jsonl = file_header_line("conversations", config, templates, lexicon);
    for (auto& out : outputs) {
        out_jsonl += out.jsonl;
        result.perception += out.perception;
        result.reasoning += out.reasoning;
        result.skips.insert(result.skips.end(), out.skips.begin(), out.skips.end());
    }
    result.conversations = result.perception + result.reasoning;
    return result;
}

ConvertResult write_eval_set(const EvalSet& set, const GenConfig& config,
                             const TemplateSet& templates, const Lexicon& lexicon,
                             std::string& eval_jsonl, std::string& key_jsonl) {
    ConvertResult result;
    result.skips = set.skips;

    eval_jsonl = file_header_line("eval", config, templates, lexicon);
    key_jsonl = file_header_line("key", config, templates, lexicon);

    for (std::size_t i = 0; i < set.items.size(); ++i) {
        const EvalItem& item = set.items[i];
        const KeyEntry& key = set.keys[i];
        const bool perception = item.stage == EvalStage::Perception;
        (perception ? result.perception_items : result.proximity_items) += 1;

        eval_jsonl += ordered_json{{"item_id", item.item_id},
                                   {"image", item.image},
                                   {"stage", perception ? "perception" : "proximity"},
                                   {"question", item.question}}
                          .dump();
        eval_jsonl += '\n';

        ordered_json gt;
        if (const auto* label = std::get_if<DepthLabel>(&key.gt)) {
            gt = label->str();
        } else {
            const auto& k = std::get<ProximityKey>(key.gt);
            gt = ordered_json{{"relation", std::string(relation_name(k.relation))},
                              {"caption_1", k.caption_1},
                              {"caption_2", k.caption_2},
                              {"depth_1", k.depth_1.str()},
                              {"depth_2", k.depth_2.str()},
                              {"object_1", k.object_1},
                              {"object_2", k.object_2}};
        }
        key_jsonl += ordered_json{{"item_id", key.item_id}, {"gt", std::move(gt)}}.dump();
        key_jsonl += '\n';
    }
    return result;
}

// ---- JSONL reading -------------------------------------------------------------

namespace {

DepthLabel parse_label_string(const std::string& s, const std::string& where) {
    const auto digit = [](char c) { return c >= '0' && c <= '9'; };
    if (s.size() != 4 || s[1] != '.' || !digit(s[0]) || !digit(s[2]) || !digit(s[3]))
        throw ParseError(where + ": malformed depth label '" + s + "'");
    const int centi = (s[0] - '0') * 100 + (s[2] - '0') * 10 + (s[3] - '0');
    if (centi > 100)
        throw ParseError(where + ": depth label out of range '" + s + "'");
    return DepthLabel{centi};
}

template <typename Fn>
void for_each_data_line(const std::string& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        if (line_no == 1 && is_header_line(line))
            continue;
        fn(line, line_no);
    }
}

json parse_line(const std::string& line, const std::string& path, std::size_t line_no) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
}

} // namespace

std::vector<Conversation> read_conversations_jsonl(const std::string& path) {
    std::vector<Conversation> out;
    for_each_data_line(path, [&](const std::string& line, std::size_t line_no) {
        try {
            out.push_back(conversation_from_json(line));
        } catch (const ParseError& e) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    });
    return out;
}

std::vector<EvalItem> read_eval_jsonl(const std::string& path) {
    std::vector<EvalItem> out;
    for_each_data_line(path, [&](const std::string& line, std::size_t line_no) {
        const json doc = parse_line(line, path, line_no);
        EvalItem item;
        try {
            item.item_id = doc.at("item_id").get<std::string>();
            item.image = doc.value("image", std::string{});
            const std::string stage = doc.at("stage").get<std::string>();
            if (stage == "perception")
                item.stage = EvalStage::Perception;
            else if (stage == "proximity")
                item.stage = EvalStage::Proximity;
            else
                throw ParseError("unknown stage '" + stage + "'");
            item.question = doc.at("question").get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(std::move(item));
    });
    return out;
}

std::vector<KeyEntry> read_key_jsonl(const std::string& path) {
    std::vector<KeyEntry> out;
    for_each_data_line(path, [&](const std::string& line, std::size_t line_no) {
        const json doc = parse_line(line, path, line_no);
        const std::string where = path + " line " + std::to_string(line_no);
        KeyEntry key;
        try {
            key.item_id = doc.at("item_id").get<std::string>();
            const auto& gt = doc.at("gt");
            if (gt.is_string()) {
                key.gt = parse_label_string(gt.get<std::string>(), where);
            } else if (gt.is_object()) {
                ProximityKey k;
                k.relation = relation_from_name(gt.at("relation").get<std::string>());
                k.caption_1 = gt.at("caption_1").get<std::string>();
                k.caption_2 = gt.at("caption_2").get<std::string>();
                if (gt.contains("depth_1"))
                    k.depth_1 = parse_label_string(gt["depth_1"].get<std::string>(), where);
                if (gt.contains("depth_2"))
                    k.depth_2 = parse_label_string(gt["depth_2"].get<std::string>(), where);
                k.object_1 = gt.value("object_1", std::string{});
                k.object_2 = gt.value("object_2", std::string{});
                key.gt = std::move(k);
            } else {
                throw ParseError(where + ": gt must be a label string or a relation object");
            }
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        out.push_back(std::move(key));
    });
    return out;
}

std::vector<ModelResponse> read_responses_jsonl(const std::string& path) {
    std::vector<ModelResponse> out;
    for_each_data_line(path, [&](const std::string& line, std::size_t line_no) {
        const json doc = parse_line(line, path, line_no);
        try {
            out.push_back({doc.at("item_id").get<std::string>(), doc.at("text").get<std::string>()});
        } catch (const json::exception& e) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    });
    return out;
}

std::string responses_to_jsonl(const std::vector<ModelResponse>& responses,
                               const GenConfig& config, const TemplateSet& templates,
                               const Lexicon& lexicon) {
    std::string out = file_header_line("responses", config, templates, lexicon);
    for (const auto& r : responses) {
        out += ordered_json{{"item_id", r.item_id}, {"text", r.text}}.dump();
        out += '\n';
    }
    return out;
}

StatsReport stats_from_file(const std::string& path) {
    StatsAccumulator acc;
    for_each_data_line(path, [&](const std::string& line, std::size_t line_no) {
        try {
            acc.add(conversation_from_json(line));
        } catch (const ParseError& e) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    });
    return finalize_stats(acc);
}

namespace {

ordered_json opt_json(const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

} // namespace

std::string score_report_to_json(const ScoreReport& report, const GenConfig& config,
                                 const TemplateSet& templates, const Lexicon& lexicon) {
    ordered_json doc;
    if (report.perception) {
        const auto& m = *report.perception;
        doc["perception"] = ordered_json{{"n_total", m.n_total},
                                         {"n_valid", m.n_valid},
                                         {"valid_answer_ratio", opt_json(m.valid_ratio)},
                                         {"mse", opt_json(m.mse)},
                                         {"rmse", opt_json(m.rmse)},
                                         {"sq_rel", opt_json(m.sq_rel)},
                                         {"delta1", opt_json(m.delta1)},
                                         {"delta2", opt_json(m.delta2)},
                                         {"delta3", opt_json(m.delta3)}};
    } else {
        doc["perception"] = nullptr;
    }
    if (report.proximity) {
        const auto& m = *report.proximity;
        doc["proximity"] = ordered_json{{"n_total", m.n_total},
                                        {"n_valid", m.n_valid},
                                        {"n_correct", m.n_correct},
                                        {"valid_answer_ratio", opt_json(m.valid_ratio)},
                                        {"accuracy", opt_json(m.accuracy)}};
    } else {
        doc["proximity"] = nullptr;
    }
    doc["invalid_reasons"] = ordered_json{{"perception", report.invalid_reasons_perception},
                                          {"proximity", report.invalid_reasons_proximity}};
    doc["counts"] = ordered_json{{"duplicate_responses", report.duplicate_responses},
                                 {"missing_responses", report.missing_responses}};
    doc["policy"] =
        ordered_json{{"sqrel_denominator", config.sqrel_denominator},
                     {"value_floor", PerceptionScorer::kFloor},
                     {"missing_responses", "scored as invalid and incorrect, never dropped"}};
    doc["provenance"] = provenance_json(config, templates, lexicon);
    return doc.dump(2) + "\n";
}

std::string stats_report_to_json(const StatsReport& report, const GenConfig& config,
                                 const TemplateSet& templates, const Lexicon& lexicon) {
    ordered_json doc = ordered_json::parse(report.to_json());
    doc["provenance"] = provenance_json(config, templates, lexicon);
    return doc.dump(2) + "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ParseError("cannot open file for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw ParseError("write failed: " + path);
}

std::string rejects_to_jsonl(const std::vector<RecordReject>& rejects,
                             const std::vector<SkipEntry>& skips) {
    std::string out;
    for (const auto& r : rejects) {
        out += ordered_json{{"kind", "reject"},
                            {"image_id", r.image_id},
                            {"entry_index", r.entry_index},
                            {"reason", r.reason}}
                   .dump();
        out += '\n';
    }
    for (const auto& s : skips) {
        out += ordered_json{
            {"kind", "skip"}, {"image_id", s.image_id}, {"reason", s.reason}, {"detail", s.detail}}
                   .dump();
        out += '\n';
    }
    return out;
}

} // namespace proxforge
