#include "proxforge/templates.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "proxforge/errors.hpp"
#include "proxforge/hash.hpp"

namespace proxforge {

using nlohmann::ordered_json;

std::string render_template(std::string_view text, std::string_view r1, std::string_view r2) {
    std::string out;
    out.reserve(text.size() + r1.size() + r2.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t brace = text.find('{', pos);
        if (brace == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, brace - pos));
        if (text.compare(brace, 4, "{R1}") == 0) {
            out.append(r1);
            pos = brace + 4;
        } else if (text.compare(brace, 4, "{R2}") == 0) {
            out.append(r2);
            pos = brace + 4;
        } else {
            out.push_back('{');
            pos = brace + 1;
        }
    }
    return out;
}

namespace {

const char* stage_name(Stage s) { return s == Stage::Perception ? "perception" : "reasoning"; }
const char* mode_name(AnswerMode m) { return m == AnswerMode::Direct ? "direct" : "reasoned"; }
const char* kind_name(CaptionKind k) { return k == CaptionKind::ObjectType ? "object" : "region"; }

Stage stage_from(const std::string& s) {
    if (s == "perception") return Stage::Perception;
    if (s == "reasoning") return Stage::Reasoning;
    throw ParseError("template file: unknown stage '" + s + "'");
}
AnswerMode mode_from(const std::string& s) {
    if (s == "direct") return AnswerMode::Direct;
    if (s == "reasoned") return AnswerMode::Reasoned;
    throw ParseError("template file: unknown answer_mode '" + s + "'");
}
CaptionKind kind_from(const std::string& s) {
    if (s == "object") return CaptionKind::ObjectType;
    if (s == "region") return CaptionKind::RegionType;
    throw ParseError("template file: unknown caption_type '" + s + "'");
}

// The three perception question texts, region phrasing.
const char* kPerception[3] = {
    "What's the relative depth value of region: {R1} in the image?",
    "Please provide me with the relative depth value of region: {R1} in the picture.",
    "Please estimate the relative depth value of region: {R1} in the image.",
};

// The nine proximity question bodies, region phrasing. Direct templates get
// the "single word or phrase" suffix; reasoned templates the "depth
// perception and reasoning" suffix, except Q2-12 which ships with the direct
// suffix in its source inventory and is kept that way.
const char* kProximityBody[9] = {
    "Is Region1: {R1} nearer to us, or Region2: {R2} nearer to us?",
    "Which region is closer, Region1: {R1} or Region2: {R2}?",
    "Is Region1: {R1} closer, or Region2: {R2} closer?",
    "Please tell me which region is closer to me, Region1: {R1} or Region2: {R2}?",
    "Please determine which is closer, Region1: {R1} or Region2: {R2}?",
    "In this image, which is closer to me, Region1: {R1} or Region2: {R2}?",
    "Which region seems more approachable, Region1: {R1} or Region2: {R2}?",
    "Which of the two regions is closer, Region1: {R1} or Region2: {R2}?",
    "In this picture, which region is more approachable, Region1: {R1} or Region2: {R2}?",
};

const char* kDirectSuffix = " Answer the question using a single word or phrase.";
const char* kReasonedSuffix = " Answer the question using depth perception and reasoning.";

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

// Object-type phrasing: drop the "region:" prefix for perception questions
// and replace "RegionN: {Rn}" with the quoted caption for proximity ones.
std::string objectify(const std::string& region_text, Stage stage) {
    if (stage == Stage::Perception)
        return replace_all(region_text, "region: {R1}", "{R1}");
    std::string s = replace_all(region_text, "Region1: {R1}", "'{R1}'");
    return replace_all(s, "Region2: {R2}", "'{R2}'");
}

std::vector<QuestionTemplate> make_builtin() {
    std::vector<QuestionTemplate> all;
    for (CaptionKind kind : {CaptionKind::RegionType, CaptionKind::ObjectType}) {
        const std::string kind_suffix = std::string("-") + kind_name(kind);
        for (int i = 0; i < 3; ++i) {
            std::string text = kPerception[i];
            if (kind == CaptionKind::ObjectType)
                text = objectify(text, Stage::Perception);
            all.push_back({"Q1-" + std::to_string(i + 1) + kind_suffix, Stage::Perception,
                           AnswerMode::Direct, kind, text});
        }
        for (int i = 0; i < 9; ++i) {
            std::string text = std::string(kProximityBody[i]) + kDirectSuffix;
            if (kind == CaptionKind::ObjectType)
                text = objectify(text, Stage::Reasoning);
            all.push_back({"Q2-" + std::to_string(i + 1) + kind_suffix, Stage::Reasoning,
                           AnswerMode::Direct, kind, text});
        }
        for (int i = 0; i < 9; ++i) {
            const bool direct_suffix_anomaly = (i == 2); // Q2-12 ships with the direct suffix
            std::string text = std::string(kProximityBody[i]) +
                               (direct_suffix_anomaly ? kDirectSuffix : kReasonedSuffix);
            if (kind == CaptionKind::ObjectType)
                text = objectify(text, Stage::Reasoning);
            all.push_back({"Q2-" + std::to_string(i + 10) + kind_suffix, Stage::Reasoning,
                           AnswerMode::Reasoned, kind, text});
        }
    }
    return all;
}

bool contains(std::string_view text, std::string_view needle) {
    return text.find(needle) != std::string_view::npos;
}

} // namespace

const TemplateSet& TemplateSet::builtin() {
    static const TemplateSet set = [] {
        TemplateSet s;
        s.all_ = make_builtin();
        s.rehash();
        s.validate();
        return s;
    }();
    return set;
}

TemplateSet TemplateSet::from_json(const std::string& json_text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("template file parse error at byte " + std::to_string(e.byte) + ": " +
                         e.what());
    }
    if (!doc.is_object() || !doc.contains("templates") || !doc["templates"].is_array())
        throw ParseError("template file: expected {\"version\", \"templates\": [...]}");

    TemplateSet set;
    for (const auto& t : doc["templates"]) {
        QuestionTemplate q;
        q.id = t.at("id").get<std::string>();
        q.stage = stage_from(t.at("stage").get<std::string>());
        q.mode = mode_from(t.at("answer_mode").get<std::string>());
        q.kind = kind_from(t.at("caption_type").get<std::string>());
        q.text = t.at("text").get<std::string>();
        set.all_.push_back(std::move(q));
    }
    set.rehash();
    set.validate();
    return set;
}

TemplateSet TemplateSet::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open template file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string TemplateSet::to_json() const {
    ordered_json arr = ordered_json::array();
    for (const auto& t : all_)
        arr.push_back(ordered_json{{"id", t.id},
                                   {"stage", stage_name(t.stage)},
                                   {"answer_mode", mode_name(t.mode)},
                                   {"caption_type", kind_name(t.kind)},
                                   {"text", t.text}});
    ordered_json doc{{"version", 1}, {"templates", std::move(arr)}};
    return doc.dump(2) + "\n";
}

void TemplateSet::rehash() { hash_ = fnv1a64(to_json()); }

std::vector<const QuestionTemplate*> TemplateSet::perception(CaptionKind kind) const {
    std::vector<const QuestionTemplate*> out;
    for (const auto& t : all_)
        if (t.stage == Stage::Perception && t.kind == kind)
            out.push_back(&t);
    return out;
}

std::vector<const QuestionTemplate*> TemplateSet::reasoning(CaptionKind kind,
                                                            AnswerMode mode) const {
    std::vector<const QuestionTemplate*> out;
    for (const auto& t : all_)
        if (t.stage == Stage::Reasoning && t.kind == kind && t.mode == mode)
            out.push_back(&t);
    return out;
}

void TemplateSet::validate() const {
    if (all_.size() != 42)
        throw ParseError("template set must contain exactly 42 templates, has " +
                         std::to_string(all_.size()));
    std::unordered_set<std::string> ids;
    for (const auto& t : all_) {
        if (!ids.insert(t.id).second)
            throw ParseError("duplicate template id '" + t.id + "'");
        const bool has_r1 = contains(t.text, "{R1}");
        const bool has_r2 = contains(t.text, "{R2}");
        if (t.stage == Stage::Perception && (!has_r1 || has_r2))
            throw ParseError("perception template '" + t.id +
                             "' must use exactly the {R1} placeholder");
        if (t.stage == Stage::Reasoning && (!has_r1 || !has_r2))
            throw ParseError("reasoning template '" + t.id + "' must use {R1} and {R2}");
    }
    for (CaptionKind kind : {CaptionKind::ObjectType, CaptionKind::RegionType}) {
        if (perception(kind).size() != 3 || reasoning(kind, AnswerMode::Direct).size() != 9 ||
            reasoning(kind, AnswerMode::Reasoned).size() != 9)
            throw ParseError(std::string("template set must hold 3+9+9 templates for ") +
                             kind_name(kind) + " captions");
    }
}

} // namespace proxforge
