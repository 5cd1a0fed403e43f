#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>

namespace proxforge {

enum class CaptionKind { ObjectType, RegionType };

struct CaptionClass {
    CaptionKind kind = CaptionKind::ObjectType;
    int token_count = 0;   // after leading-article stripping
    std::string trigger;   // which rule fired
};

/// Function-word lexicon: prepositions, conjunctions, relative pronouns,
/// copulas and common -ing verb forms. One token per line, UTF-8, '#' comments.
struct Lexicon {
    std::unordered_set<std::string> words;
    std::uint64_t content_hash = 0;

    bool contains(std::string_view token) const;

    static const Lexicon& builtin();
    static Lexicon from_text(std::string_view text);
    static Lexicon from_file(const std::string& path);
};

/// The versioned lexicon text shipped with the repo (data/function_words.txt).
std::string_view builtin_lexicon_text();

/// Object type iff, after stripping leading articles, <= 3 whitespace tokens
/// remain and none is a function word; otherwise Region type.
/// Case-insensitive and deterministic.
CaptionClass classify_caption(std::string_view caption, const Lexicon& lexicon = Lexicon::builtin());

/// Comparison-time normalization (captions are stored verbatim): lowercase,
/// strip surrounding quotes and trailing '.'/','/'!'/'?', drop leading
/// articles, collapse whitespace runs.
std::string normalize_phrase(std::string_view text);

} // namespace proxforge
