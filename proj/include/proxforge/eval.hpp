#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "proxforge/conversation.hpp"

namespace proxforge {

enum class EvalStage { Perception, Proximity };

struct ProximityKey {
    ProximityRelation relation = ProximityRelation::EquallyClose;
    std::string caption_1;
    std::string caption_2;
    DepthLabel depth_1;
    DepthLabel depth_2;
    std::string object_1;
    std::string object_2;
};

struct EvalItem {
    std::string item_id;
    std::string image;
    EvalStage stage = EvalStage::Perception;
    std::string question;
};

/// Ground truth lives in a separate key file so model runners never see it.
struct KeyEntry {
    std::string item_id;
    std::variant<DepthLabel, ProximityKey> gt;
};

struct ModelResponse {
    std::string item_id;
    std::string text;
};

// ---- response parsing (total over arbitrary UTF-8) --------------------------

enum class InvalidReason { NoNumber, MultipleNumbers, OutOfRange, Ambiguous, NoMatch };
std::string_view invalid_reason_name(InvalidReason r);

struct PerceptionParse {
    std::optional<double> value; // set iff valid
    std::optional<InvalidReason> reason;
    bool valid() const { return value.has_value(); }
};

/// Valid iff the response contains exactly one maximal numeric token
/// (optional sign, digits, optional fraction) and its value is in [0,1].
PerceptionParse parse_perception_response(std::string_view text);

enum class ProximityAnswer { First, Second, Equal };

struct ProximityParse {
    std::optional<ProximityAnswer> answer;
    std::optional<InvalidReason> reason;
    bool valid() const { return answer.has_value(); }
};

/// Extracts the phrase after a trailing "the answer is:" marker when present
/// (quoted or bare), otherwise uses the whole trimmed text; the normalized
/// phrase must equal exactly one normalized caption or "equally close".
ProximityParse parse_proximity_response(std::string_view text, std::string_view caption_1,
                                        std::string_view caption_2);

// ---- metrics ----------------------------------------------------------------

enum class SqRelDenominator { Pred, Gt };

struct PerceptionMetrics {
    std::size_t n_total = 0;
    std::size_t n_valid = 0;
    std::optional<double> valid_ratio;
    std::optional<double> mse;
    std::optional<double> rmse; // sqrt(mse) from the shared sum: rmse^2 == mse
    std::optional<double> sq_rel;
    std::optional<double> delta1;
    std::optional<double> delta2;
    std::optional<double> delta3;
};

struct ProximityMetrics {
    std::size_t n_total = 0;
    std::size_t n_valid = 0;
    std::size_t n_correct = 0;
    std::optional<double> valid_ratio;
    std::optional<double> accuracy; // n_correct / n_total: invalid counts against
};

/// Mergeable perception scorer. Per-item terms are kept and summed in sorted
/// order at finalize time, so sharded accumulation and input permutation give
/// exactly the single-pass result.
class PerceptionScorer {
public:
    void add(const std::optional<double>& pred, DepthLabel gt);
    void merge(const PerceptionScorer& other);
    PerceptionMetrics finalize(SqRelDenominator den = SqRelDenominator::Pred) const;

    static constexpr double kFloor = 1e-6; // denominators and delta ratios

private:
    std::size_t n_total_ = 0;
    std::vector<std::pair<double, double>> valid_; // (pred, gt)
};

class ProximityScorer {
public:
    void add(const std::optional<ProximityAnswer>& pred, ProximityRelation gt);
    void merge(const ProximityScorer& other);
    ProximityMetrics finalize() const;

private:
    std::size_t n_total_ = 0, n_valid_ = 0, n_correct_ = 0;
};

PerceptionMetrics compute_perception_metrics(
    const std::vector<std::pair<std::optional<double>, DepthLabel>>& pairs,
    SqRelDenominator den = SqRelDenominator::Pred);

ProximityMetrics compute_proximity_metrics(
    const std::vector<std::pair<std::optional<ProximityAnswer>, ProximityRelation>>& pairs);

// ---- dataset conversion ------------------------------------------------------

struct EvalSet {
    std::vector<EvalItem> items;
    std::vector<KeyEntry> keys; // same order as items
    std::vector<SkipEntry> skips;
};

class DepthSource; // pipeline.hpp

/// Scene records + depth maps -> perception and proximity eval items plus the
/// hidden answer key, reusing the dataset pipeline's labeling and pairing.
EvalSet convert_scenes_to_eval(const std::vector<SceneRecord>& records, DepthSource& depth,
                               const GenConfig& config, bool perception_items,
                               bool proximity_items,
                               const TemplateSet& templates = TemplateSet::builtin(),
                               const Lexicon& lexicon = Lexicon::builtin());

/// Test fixture: echoes ground truth in canonical answer format.
/// Throws InvalidEvalSetError when ids disagree.
std::vector<ModelResponse> oracle_responder(const std::vector<EvalItem>& items,
                                            const std::vector<KeyEntry>& keys);

struct ScoreReport {
    std::optional<PerceptionMetrics> perception;
    std::optional<ProximityMetrics> proximity;
    std::map<std::string, std::size_t> invalid_reasons_perception;
    std::map<std::string, std::size_t> invalid_reasons_proximity;
    std::size_t duplicate_responses = 0;
    std::size_t missing_responses = 0;
};

/// Join responses to items by id (duplicates: last wins, counted), parse,
/// score. Missing responses are invalid and incorrect, never dropped.
/// Throws InvalidEvalSetError for an empty eval set.
ScoreReport score_responses(const std::vector<EvalItem>& items, const std::vector<KeyEntry>& keys,
                            const std::vector<ModelResponse>& responses,
                            SqRelDenominator den = SqRelDenominator::Pred);

} // namespace proxforge
