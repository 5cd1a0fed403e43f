#include "proxforge/conversation.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "json.hpp"

#include "proxforge/errors.hpp"
#include "proxforge/rng.hpp"

namespace proxforge {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view relation_name(ProximityRelation rel) {
    switch (rel) {
    case ProximityRelation::FirstCloser: return "first_closer";
    case ProximityRelation::SecondCloser: return "second_closer";
    case ProximityRelation::EquallyClose: return "equally_close";
    }
    return "equally_close";
}

ProximityRelation relation_from_name(std::string_view name) {
    if (name == "first_closer") return ProximityRelation::FirstCloser;
    if (name == "second_closer") return ProximityRelation::SecondCloser;
    if (name == "equally_close") return ProximityRelation::EquallyClose;
    throw ParseError("unknown relation '" + std::string(name) + "'");
}

ProximityRelation compare_proximity(DepthLabel d_s, DepthLabel d_t) {
    if (d_s.centi < d_t.centi)
        return ProximityRelation::FirstCloser;
    if (d_s.centi > d_t.centi)
        return ProximityRelation::SecondCloser;
    return ProximityRelation::EquallyClose;
}

void GenConfig::validate() const {
    if (direct_ratio < 0.0 || direct_ratio > 1.0)
        throw std::invalid_argument("direct_ratio must be in [0,1]");
    if (!(epsilon > 0.0))
        throw std::invalid_argument("epsilon must be > 0");
    if (median_window < 1 || median_window % 2 == 0)
        throw std::invalid_argument("median_window must be an odd integer >= 1");
    if (audit_threshold < 0.0)
        throw std::invalid_argument("audit_threshold must be >= 0");
    if (sqrel_denominator != "pred" && sqrel_denominator != "gt")
        throw std::invalid_argument("sqrel_denominator must be 'pred' or 'gt'");
}

namespace {

constexpr std::string_view kImageToken = "<image>\n";

std::string_view stage_str(Stage s) { return s == Stage::Perception ? "perception" : "reasoning"; }

}

Conversation render_perception_qa(const QuestionTemplate& tpl, const SceneObject& object,
                                  const std::string& image, const std::string& id) {
    if (!object.depth_label)
        throw std::invalid_argument("object '" + object.object_id + "' has no depth label");
    Conversation conv;
    conv.id = id;
    conv.image = image;
    conv.stage = Stage::Perception;
    conv.template_id = tpl.id;
    conv.turns[0] = {"human", std::string(kImageToken) + render_template(tpl.text, object.caption)};
    conv.turns[1] = {"gpt", object.depth_label->str()};
    conv.truth = PerceptionTruth{*object.depth_label};
    return conv;
}

Conversation render_reasoning_qa(const QuestionTemplate& tpl, AnswerMode mode,
                                 const SceneObject& o1, const SceneObject& o2,
                                 const std::string& image, const std::string& id) {
    if (!o1.depth_label || !o2.depth_label)
        throw std::invalid_argument("reasoning pair requires two depth labels");
    if (normalize_phrase(o1.caption) == normalize_phrase(o2.caption))
        throw std::invalid_argument("reasoning pair requires distinct captions");

    const DepthLabel d1 = *o1.depth_label;
    const DepthLabel d2 = *o2.depth_label;
    const ProximityRelation rel = compare_proximity(d1, d2);

    Conversation conv;
    conv.id = id;
    conv.image = image;
    conv.stage = Stage::Reasoning;
    conv.template_id = tpl.id;
    conv.turns[0] = {"human",
                     std::string(kImageToken) + render_template(tpl.text, o1.caption, o2.caption)};

    std::string answer;
    if (mode == AnswerMode::Direct) {
        answer = rel == ProximityRelation::FirstCloser    ? o1.caption
                 : rel == ProximityRelation::SecondCloser ? o2.caption
                                                          : std::string("equally close");
    } else {
        // The stated inequality always reads smaller < larger so the emitted
        // chain of thought is arithmetically true of its own numbers.
        answer = "'" + o1.caption + "' corresponds to a relative depth value of " + d1.str() +
                 ", and '" + o2.caption + "' corresponds to a relative depth value of " + d2.str() +
                 ". Since ";
        if (rel == ProximityRelation::EquallyClose) {
            answer += d1.str() + " = " + d2.str() +
                      ", it can be inferred that they are equally close, the answer is: 'equally close'.";
        } else {
            const bool first = rel == ProximityRelation::FirstCloser;
            const std::string& winner = first ? o1.caption : o2.caption;
            const DepthLabel small = first ? d1 : d2;
            const DepthLabel big = first ? d2 : d1;
            answer += small.str() + " < " + big.str() + ", it can be inferred that the object: '" +
                      winner + "' is closer, the answer is: '" + winner + "'.";
        }
    }
    conv.turns[1] = {"gpt", std::move(answer)};
    conv.truth = ReasoningTruth{rel,          o1.caption, o2.caption, d1, d2,
                                o1.object_id, o2.object_id};
    return conv;
}

BuildResult build_conversations(const SceneRecord& record, const GenConfig& config,
                                std::uint64_t seed, const TemplateSet& templates,
                                const Lexicon& lexicon) {
    BuildResult result;

    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < record.objects.size(); ++i)
        if (record.objects[i].depth_label)
            labeled.push_back(i);
    if (labeled.empty()) {
        result.skips.push_back({record.image_id, "no_labeled_objects", ""});
        return result;
    }

    const std::uint64_t record_seed = derive_record_seed(seed, record.image_id);
    SeededRng rng(record_seed);

    // Perception: one conversation per labeled object up to the cap, the
    // template walking a seeded counter through the 3-template family.
    const std::size_t base = rng.below(3);
    const std::size_t cap = config.perception_cap == 0
                                ? labeled.size()
                                : std::min(config.perception_cap, labeled.size());
    for (std::size_t k = 0; k < cap; ++k) {
        const SceneObject& obj = record.objects[labeled[k]];
        const CaptionKind kind = classify_caption(obj.caption, lexicon).kind;
        const auto family = templates.perception(kind);
        const QuestionTemplate& tpl = *family[(base + k) % family.size()];
        Conversation conv = render_perception_qa(
            tpl, obj, record.image_path, record.image_id + "-p" + std::to_string(k));
        conv.seed_trace = record_seed;
        result.conversations.push_back(std::move(conv));
    }

    // Reasoning: unordered pairs with distinct normalized captions,
    // seeded-shuffled, truncated at M.
    std::vector<std::string> norms(record.objects.size());
    for (std::size_t i : labeled)
        norms[i] = normalize_phrase(record.objects[i].caption);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < labeled.size(); ++a)
        for (std::size_t b = a + 1; b < labeled.size(); ++b) {
            const std::size_t i = labeled[a], j = labeled[b];
            if (norms[i] == norms[j]) {
                result.skips.push_back({record.image_id, "skipped_pair_identical_caption",
                                        record.objects[i].object_id + "," +
                                            record.objects[j].object_id + ": '" + norms[i] + "'"});
                continue;
            }
            pairs.emplace_back(i, j);
        }

    rng.shuffle(pairs);
    if (config.max_pairs_per_image > 0 && pairs.size() > config.max_pairs_per_image)
        pairs.resize(config.max_pairs_per_image);

    std::size_t seq = 0;
    for (const auto& [i, j] : pairs) {
        const bool swap = rng.below(2) == 1;
        const SceneObject& first = record.objects[swap ? j : i];
        const SceneObject& second = record.objects[swap ? i : j];
        const AnswerMode mode =
            rng.unit() < config.direct_ratio ? AnswerMode::Direct : AnswerMode::Reasoned;
        const CaptionKind k1 = classify_caption(first.caption, lexicon).kind;
        const CaptionKind k2 = classify_caption(second.caption, lexicon).kind;
        const CaptionKind kind = (k1 == CaptionKind::RegionType || k2 == CaptionKind::RegionType)
                                     ? CaptionKind::RegionType
                                     : CaptionKind::ObjectType;
        const auto family = templates.reasoning(kind, mode);
        const QuestionTemplate& tpl = *family[rng.below(family.size())];
        Conversation conv =
            render_reasoning_qa(tpl, mode, first, second, record.image_path,
                                record.image_id + "-r" + std::to_string(seq++));
        conv.seed_trace = record_seed;
        result.conversations.push_back(std::move(conv));
    }
    return result;
}

namespace {

int pixel_index(double coord, int size) {
    const int idx = static_cast<int>(std::floor(coord + 0.5));
    return std::clamp(idx, 0, size - 1);
}

} // namespace

std::vector<AuditFlag> audit_scene(const SceneRecord& record, const DepthMap& map,
                                   double threshold) {
    std::vector<AuditFlag> flags;

    for (const auto& obj : record.objects) {
        // bbox interior pixel range, clipped to the map
        const int c0 = std::clamp(static_cast<int>(std::floor(obj.bbox.x)), 0, map.width - 1);
        const int c1 = std::clamp(static_cast<int>(std::ceil(obj.bbox.x + obj.bbox.w)) - 1, c0,
                                  map.width - 1);
        const int r0 = std::clamp(static_cast<int>(std::floor(obj.bbox.y)), 0, map.height - 1);
        const int r1 = std::clamp(static_cast<int>(std::ceil(obj.bbox.y + obj.bbox.h)) - 1, r0,
                                  map.height - 1);

        std::vector<double> interior;
        interior.reserve(static_cast<std::size_t>(c1 - c0 + 1) * (r1 - r0 + 1));
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c)
                interior.push_back(map.at(r, c));
        std::sort(interior.begin(), interior.end());
        const std::size_t n = interior.size();
        const double median =
            (n % 2 == 1) ? interior[n / 2] : (interior[n / 2 - 1] + interior[n / 2]) / 2.0;

        const double center =
            map.at(pixel_index(obj.cy, map.height), pixel_index(obj.cx, map.width));
        if (std::abs(center - median) > threshold) {
            AuditFlag f;
            f.kind = AuditKind::CenterOffset;
            f.image_id = record.image_id;
            f.object_ids = {obj.object_id};
            f.center_depth = center;
            f.bbox_median = median;
            flags.push_back(std::move(f));
        }
    }

    std::map<std::string, std::vector<std::string>> by_caption;
    for (const auto& obj : record.objects)
        by_caption[normalize_phrase(obj.caption)].push_back(obj.object_id);
    for (const auto& [caption, ids] : by_caption)
        if (ids.size() >= 2) {
            AuditFlag f;
            f.kind = AuditKind::DuplicateCaption;
            f.image_id = record.image_id;
            f.object_ids = ids;
            f.caption = caption;
            flags.push_back(std::move(f));
        }
    return flags;
}

std::string conversation_to_json(const Conversation& conv) {
    ordered_json meta;
    meta["template_id"] = conv.template_id;
    if (conv.stage == Stage::Perception) {
        meta["ground_truth"] = ordered_json{{"depth", std::get<PerceptionTruth>(conv.truth).label.str()}};
    } else {
        const auto& t = std::get<ReasoningTruth>(conv.truth);
        meta["ground_truth"] = ordered_json{
            {"relation", relation_name(t.relation)}, {"caption_1", t.caption_1},
            {"caption_2", t.caption_2},              {"depth_1", t.depth_1.str()},
            {"depth_2", t.depth_2.str()},            {"object_1", t.object_1},
            {"object_2", t.object_2}};
    }
    meta["seed_trace"] = conv.seed_trace;

    ordered_json doc{{"id", conv.id},
                     {"image", conv.image},
                     {"stage", stage_str(conv.stage)},
                     {"conversations",
                      {ordered_json{{"from", conv.turns[0].role}, {"value", conv.turns[0].text}},
                       ordered_json{{"from", conv.turns[1].role}, {"value", conv.turns[1].text}}}},
                     {"meta", std::move(meta)}};
    return doc.dump();
}

namespace {

DepthLabel label_from_str(const std::string& s) {
    // labels are serialized as exact "d.dd" strings
    const auto digit = [](char c) { return c >= '0' && c <= '9'; };
    if (s.size() != 4 || s[1] != '.' || !digit(s[0]) || !digit(s[2]) || !digit(s[3]))
        throw ParseError("malformed depth label '" + s + "'");
    const int whole = s[0] - '0';
    const int frac = (s[2] - '0') * 10 + (s[3] - '0');
    if (whole < 0 || whole > 1 || frac < 0 || frac > 99 || (whole == 1 && frac != 0))
        throw ParseError("depth label out of range '" + s + "'");
    return DepthLabel{whole * 100 + frac};
}

} // namespace

Conversation conversation_from_json(const std::string& line) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError("conversation JSON parse error at byte " + std::to_string(e.byte) + ": " +
                         e.what());
    }
    Conversation conv;
    try {
        conv.id = doc.at("id").get<std::string>();
        conv.image = doc.at("image").get<std::string>();
        const std::string stage = doc.at("stage").get<std::string>();
        if (stage == "perception")
            conv.stage = Stage::Perception;
        else if (stage == "reasoning")
            conv.stage = Stage::Reasoning;
        else
            throw ParseError("unknown stage '" + stage + "'");
        const auto& turns = doc.at("conversations");
        if (!turns.is_array() || turns.size() != 2)
            throw ParseError("conversation must have exactly 2 turns");
        for (std::size_t i = 0; i < 2; ++i) {
            conv.turns[i].role = turns[i].at("from").get<std::string>();
            conv.turns[i].text = turns[i].at("value").get<std::string>();
        }
        const auto& meta = doc.at("meta");
        conv.template_id = meta.at("template_id").get<std::string>();
        conv.seed_trace = meta.value("seed_trace", std::uint64_t{0});
        const auto& gt = meta.at("ground_truth");
        if (conv.stage == Stage::Perception) {
            conv.truth = PerceptionTruth{label_from_str(gt.at("depth").get<std::string>())};
        } else {
            ReasoningTruth t;
            t.relation = relation_from_name(gt.at("relation").get<std::string>());
            t.caption_1 = gt.at("caption_1").get<std::string>();
            t.caption_2 = gt.at("caption_2").get<std::string>();
            t.depth_1 = label_from_str(gt.at("depth_1").get<std::string>());
            t.depth_2 = label_from_str(gt.at("depth_2").get<std::string>());
            t.object_1 = gt.value("object_1", std::string{});
            t.object_2 = gt.value("object_2", std::string{});
            conv.truth = std::move(t);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed conversation record: ") + e.what());
    }
    return conv;
}

} // namespace proxforge
