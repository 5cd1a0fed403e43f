#include "proxforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_map>

#include "proxforge/pipeline.hpp"
#include "proxforge/rng.hpp"

namespace proxforge {

std::string_view invalid_reason_name(InvalidReason r) {
    switch (r) {
    case InvalidReason::NoNumber: return "no_number";
    case InvalidReason::MultipleNumbers: return "multiple_numbers";
    case InvalidReason::OutOfRange: return "out_of_range";
    case InvalidReason::Ambiguous: return "ambiguous";
    case InvalidReason::NoMatch: return "no_match";
    }
    return "invalid";
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

} // namespace

PerceptionParse parse_perception_response(std::string_view text) {
    // maximal numeric tokens: optional sign, digits, optional fraction
    std::size_t count = 0;
    std::string first_token;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        const bool starts_number =
            is_digit(c) || ((c == '+' || c == '-') && i + 1 < text.size() && is_digit(text[i + 1]));
        if (!starts_number) {
            ++i;
            continue;
        }
        std::size_t j = i;
        if (text[j] == '+' || text[j] == '-')
            ++j;
        while (j < text.size() && is_digit(text[j]))
            ++j;
        if (j + 1 < text.size() && text[j] == '.' && is_digit(text[j + 1])) {
            ++j;
            while (j < text.size() && is_digit(text[j]))
                ++j;
        }
        if (++count == 1)
            first_token = std::string(text.substr(i, j - i));
        i = j;
    }

    PerceptionParse out;
    if (count == 0) {
        out.reason = InvalidReason::NoNumber;
    } else if (count > 1) {
        out.reason = InvalidReason::MultipleNumbers;
    } else {
        const double v = std::strtod(first_token.c_str(), nullptr);
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            out.reason = InvalidReason::OutOfRange;
        else
            out.value = v;
    }
    return out;
}

namespace {

std::string ascii_lower_copy(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z')
            c = static_cast<char>(c - 'A' + 'a');
    return out;
}

bool contains(std::string_view hay, std::string_view needle) {
    return hay.find(needle) != std::string_view::npos;
}

} // namespace

ProximityParse parse_proximity_response(std::string_view text, std::string_view caption_1,
                                        std::string_view caption_2) {
    static constexpr std::string_view kMarker = "the answer is:";

    const std::string lowered = ascii_lower_copy(text);
    std::string phrase;
    const std::size_t marker = lowered.rfind(kMarker);
    if (marker != std::string::npos) {
        std::string tail = lowered.substr(marker + kMarker.size());
        const auto b = tail.find_first_not_of(" \t\r\n");
        tail = (b == std::string::npos) ? std::string{} : tail.substr(b);
        if (!tail.empty() && (tail[0] == '\'' || tail[0] == '"')) {
            // quoted phrase: everything between the first and last quote char,
            // so captions containing apostrophes survive
            const std::size_t last = tail.find_last_of(tail[0]);
            phrase = (last > 0) ? tail.substr(1, last - 1) : tail;
        } else {
            phrase = tail;
        }
    } else {
        phrase = lowered;
    }

    const std::string norm = normalize_phrase(phrase);
    const std::string n1 = normalize_phrase(caption_1);
    const std::string n2 = normalize_phrase(caption_2);

    ProximityParse out;
    if (norm == "equally close") {
        out.answer = ProximityAnswer::Equal;
    } else if (norm == n1) {
        out.answer = ProximityAnswer::First;
    } else if (norm == n2) {
        out.answer = ProximityAnswer::Second;
    } else if (contains(norm, n1) && contains(norm, n2)) {
        out.reason = InvalidReason::Ambiguous;
    } else {
        out.reason = InvalidReason::NoMatch;
    }
    return out;
}

// ---- metrics ----------------------------------------------------------------

void PerceptionScorer::add(const std::optional<double>& pred, DepthLabel gt) {
    ++n_total_;
    if (pred && std::isfinite(*pred))
        valid_.emplace_back(*pred, gt.value());
}

void PerceptionScorer::merge(const PerceptionScorer& other) {
    n_total_ += other.n_total_;
    valid_.insert(valid_.end(), other.valid_.begin(), other.valid_.end());
}

PerceptionMetrics PerceptionScorer::finalize(SqRelDenominator den) const {
    PerceptionMetrics m;
    m.n_total = n_total_;
    m.n_valid = valid_.size();
    if (n_total_ > 0)
        m.valid_ratio = static_cast<double>(m.n_valid) / static_cast<double>(n_total_);
    if (valid_.empty())
        return m;

    // Terms are summed in sorted order so shard merges and input permutations
    // reproduce the single-pass result bit for bit.
    std::vector<std::pair<double, double>> sorted = valid_;
    std::sort(sorted.begin(), sorted.end());

    double sum_sq = 0.0, sum_sqrel = 0.0;
    std::size_t k1 = 0, k2 = 0, k3 = 0;
    for (const auto& [pred, gt] : sorted) {
        const double err = pred - gt;
        const double sq = err * err;
        sum_sq += sq;
        const double d = std::max(den == SqRelDenominator::Pred ? pred : gt, kFloor);
        sum_sqrel += sq / d;
        const double fp = std::max(pred, kFloor);
        const double fg = std::max(gt, kFloor);
        const double ratio = std::max(fp / fg, fg / fp);
        if (ratio < 1.25)
            ++k1;
        if (ratio < 1.25 * 1.25)
            ++k2;
        if (ratio < 1.25 * 1.25 * 1.25)
            ++k3;
    }
    const double n = static_cast<double>(sorted.size());
    m.mse = sum_sq / n;
    m.rmse = std::sqrt(*m.mse);
    m.sq_rel = sum_sqrel / n;
    m.delta1 = static_cast<double>(k1) / n;
    m.delta2 = static_cast<double>(k2) / n;
    m.delta3 = static_cast<double>(k3) / n;
    return m;
}

void ProximityScorer::add(const std::optional<ProximityAnswer>& pred, ProximityRelation gt) {
    ++n_total_;
    if (!pred)
        return;
    ++n_valid_;
    const bool correct = (*pred == ProximityAnswer::First && gt == ProximityRelation::FirstCloser) ||
                         (*pred == ProximityAnswer::Second && gt == ProximityRelation::SecondCloser) ||
                         (*pred == ProximityAnswer::Equal && gt == ProximityRelation::EquallyClose);
    if (correct)
        ++n_correct_;
}

void ProximityScorer::merge(const ProximityScorer& other) {
    n_total_ += other.n_total_;
    n_valid_ += other.n_valid_;
    n_correct_ += other.n_correct_;
}

ProximityMetrics ProximityScorer::finalize() const {
    ProximityMetrics m;
    m.n_total = n_total_;
    m.n_valid = n_valid_;
    m.n_correct = n_correct_;
    if (n_total_ > 0) {
        // all generated responses count in the denominator, invalid included
        m.valid_ratio = static_cast<double>(n_valid_) / static_cast<double>(n_total_);
        m.accuracy = static_cast<double>(n_correct_) / static_cast<double>(n_total_);
    }
    return m;
}

PerceptionMetrics compute_perception_metrics(
    const std::vector<std::pair<std::optional<double>, DepthLabel>>& pairs, SqRelDenominator den) {
    PerceptionScorer scorer;
    for (const auto& [pred, gt] : pairs)
        scorer.add(pred, gt);
    return scorer.finalize(den);
}

ProximityMetrics compute_proximity_metrics(
    const std::vector<std::pair<std::optional<ProximityAnswer>, ProximityRelation>>& pairs) {
    ProximityScorer scorer;
    for (const auto& [pred, gt] : pairs)
        scorer.add(pred, gt);
    return scorer.finalize();
}

// ---- conversion ---------------------------------------------------------------

EvalSet convert_scenes_to_eval(const std::vector<SceneRecord>& records, DepthSource& depth,
                               const GenConfig& config, bool perception_items,
                               bool proximity_items, const TemplateSet& templates,
                               const Lexicon& lexicon) {
    // Eval questions must be answerable with a single word or phrase, so the
    // reasoning pairs are rendered through Direct-mode templates.
    GenConfig eval_config = config;
    eval_config.direct_ratio = 1.0;

    EvalSet set;
    for (const SceneRecord& record : records) {
        auto loaded = depth.load(record);
        if (!loaded) {
            set.skips.push_back({record.image_id, "missing_depth_map", ""});
            continue;
        }
        if (record.width > 0 &&
            (record.width != loaded->width || record.height != loaded->height)) {
            set.skips.push_back(
                {record.image_id, "depth_size_mismatch",
                 std::to_string(record.width) + "x" + std::to_string(record.height) +
                     " image vs " + std::to_string(loaded->width) + "x" +
                     std::to_string(loaded->height) + " map"});
            continue;
        }
        SceneRecord labeled = record;
        DepthMap map;
        try {
            map = to_normalized_depth(*loaded, config.epsilon);
        } catch (const DegenerateMapError& e) {
            set.skips.push_back({record.image_id, "degenerate_map", e.what()});
            continue;
        }
        for (auto& obj : labeled.objects) {
            try {
                obj.depth_label = sample_object_depth(map, obj.cx, obj.cy, config.median_window);
            } catch (const OutOfBoundsError& e) {
                set.skips.push_back({record.image_id, "center_out_of_bounds",
                                     obj.object_id + ": " + e.what()});
            }
        }

        BuildResult built = build_conversations(labeled, eval_config, config.seed, templates, lexicon);
        for (auto& skip : built.skips)
            set.skips.push_back(std::move(skip));
        for (const Conversation& conv : built.conversations) {
            if (conv.stage == Stage::Perception && !perception_items)
                continue;
            if (conv.stage == Stage::Reasoning && !proximity_items)
                continue;

            EvalItem item;
            item.item_id = conv.id;
            item.image = conv.image;
            item.stage = conv.stage == Stage::Perception ? EvalStage::Perception
                                                         : EvalStage::Proximity;
            // the question text without the leading image placeholder token
            std::string_view q = conv.turns[0].text;
            if (q.starts_with("<image>\n"))
                q.remove_prefix(8);
            item.question = std::string(q);

            KeyEntry key;
            key.item_id = conv.id;
            if (conv.stage == Stage::Perception) {
                key.gt = std::get<PerceptionTruth>(conv.truth).label;
            } else {
                const auto& t = std::get<ReasoningTruth>(conv.truth);
                key.gt = ProximityKey{t.relation, t.caption_1, t.caption_2,
                                      t.depth_1,  t.depth_2,  t.object_1, t.object_2};
            }
            set.items.push_back(std::move(item));
            set.keys.push_back(std::move(key));
        }
    }
    return set;
}

std::vector<ModelResponse> oracle_responder(const std::vector<EvalItem>& items,
                                            const std::vector<KeyEntry>& keys) {
    if (items.size() != keys.size())
        throw InvalidEvalSetError("answer key has " + std::to_string(keys.size()) +
                                  " entries for " + std::to_string(items.size()) + " items");
    std::vector<ModelResponse> out;
    out.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].item_id != keys[i].item_id)
            throw InvalidEvalSetError("answer key id mismatch at index " + std::to_string(i) +
                                      ": '" + items[i].item_id + "' vs '" + keys[i].item_id + "'");
        ModelResponse resp;
        resp.item_id = items[i].item_id;
        if (const auto* label = std::get_if<DepthLabel>(&keys[i].gt)) {
            resp.text = label->str();
        } else {
            const auto& k = std::get<ProximityKey>(keys[i].gt);
            resp.text = k.relation == ProximityRelation::FirstCloser    ? k.caption_1
                        : k.relation == ProximityRelation::SecondCloser ? k.caption_2
                                                                        : std::string("equally close");
        }
        out.push_back(std::move(resp));
    }
    return out;
}

ScoreReport score_responses(const std::vector<EvalItem>& items, const std::vector<KeyEntry>& keys,
                            const std::vector<ModelResponse>& responses, SqRelDenominator den) {
    if (items.empty())
        throw InvalidEvalSetError("empty eval set");

    std::unordered_map<std::string_view, const KeyEntry*> key_by_id;
    for (const auto& k : keys)
        key_by_id[k.item_id] = &k;

    ScoreReport report;
    std::unordered_map<std::string_view, std::string_view> response_by_id;
    for (const auto& r : responses) {
        auto [it, inserted] = response_by_id.try_emplace(r.item_id, r.text);
        if (!inserted) {
            it->second = r.text; // last wins
            ++report.duplicate_responses;
        }
    }

    PerceptionScorer perception;
    ProximityScorer proximity;
    bool any_perception = false, any_proximity = false;

    for (const auto& item : items) {
        const auto key_it = key_by_id.find(item.item_id);
        if (key_it == key_by_id.end())
            throw InvalidEvalSetError("answer key missing item '" + item.item_id + "'");
        const KeyEntry& key = *key_it->second;

        const auto resp_it = response_by_id.find(item.item_id);
        const bool missing = resp_it == response_by_id.end();
        if (missing)
            ++report.missing_responses;

        if (item.stage == EvalStage::Perception) {
            any_perception = true;
            const auto* label = std::get_if<DepthLabel>(&key.gt);
            if (!label)
                throw InvalidEvalSetError("item '" + item.item_id +
                                          "' is perception but its key is not a depth label");
            std::optional<double> pred;
            if (missing) {
                ++report.invalid_reasons_perception["missing"];
            } else {
                const PerceptionParse parsed = parse_perception_response(resp_it->second);
                if (parsed.valid())
                    pred = parsed.value;
                else
                    ++report.invalid_reasons_perception[std::string(
                        invalid_reason_name(*parsed.reason))];
            }
            perception.add(pred, *label);
        } else {
            any_proximity = true;
            const auto* k = std::get_if<ProximityKey>(&key.gt);
            if (!k)
                throw InvalidEvalSetError("item '" + item.item_id +
                                          "' is proximity but its key is not a relation");
            std::optional<ProximityAnswer> pred;
            if (missing) {
                ++report.invalid_reasons_proximity["missing"];
            } else {
                const ProximityParse parsed =
                    parse_proximity_response(resp_it->second, k->caption_1, k->caption_2);
                if (parsed.valid())
                    pred = parsed.answer;
                else
                    ++report.invalid_reasons_proximity[std::string(
                        invalid_reason_name(*parsed.reason))];
            }
            proximity.add(pred, k->relation);
        }
    }

    if (any_perception)
        report.perception = perception.finalize(den);
    if (any_proximity)
        report.proximity = proximity.finalize();
    return report;
}

} // namespace proxforge
