#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "proxforge/caption.hpp"

namespace proxforge {

enum class Stage { Perception, Reasoning };
enum class AnswerMode { Direct, Reasoned };

struct QuestionTemplate {
    std::string id; // e.g. "Q2-14-region"
    Stage stage = Stage::Perception;
    AnswerMode mode = AnswerMode::Direct;
    CaptionKind kind = CaptionKind::RegionType;
    std::string text; // contains {R1}, and {R2} for reasoning templates
};

std::string render_template(std::string_view text, std::string_view r1, std::string_view r2 = {});

/// The shipped inventory: exactly 42 templates, (3 perception + 9 direct +
/// 9 reasoned) per caption type.
class TemplateSet {
public:
    static const TemplateSet& builtin();
    static TemplateSet from_json(const std::string& json_text);
    static TemplateSet from_file(const std::string& path);

    std::string to_json() const; // canonical bytes, what content_hash covers
    std::uint64_t content_hash() const { return hash_; }

    const std::vector<QuestionTemplate>& all() const { return all_; }

    /// 3 templates for a perception question about a caption of this kind.
    std::vector<const QuestionTemplate*> perception(CaptionKind kind) const;
    /// 9 templates for a reasoning question in the given answer mode.
    std::vector<const QuestionTemplate*> reasoning(CaptionKind kind, AnswerMode mode) const;

    /// Counts and placeholder structure; throws ParseError on violation.
    void validate() const;

private:
    std::vector<QuestionTemplate> all_;
    std::uint64_t hash_ = 0;

    void rehash();
};

} // namespace proxforge
