#include "proxforge/caption.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <vector>

#include "proxforge/errors.hpp"
#include "proxforge/hash.hpp"

namespace proxforge {

namespace {

// Shipped verbatim as data/function_words.txt; the file and this string must
// stay byte-identical (enforced by a test) so the published lexicon hash is
// the hash of the file users can read.
constexpr std::string_view kLexiconText = R"(# Function-word lexicon for caption classification.
# A caption whose tokens (after stripping leading articles) include any of
# these words is phrased as a clause or region description rather than a
# bare "subject + attribute" object mention.

# articles (interior occurrences; leading articles are stripped before the check)
a
an
the

# prepositions
aboard
about
above
across
after
against
along
amid
among
around
at
atop
before
behind
below
beneath
beside
besides
between
beyond
by
down
during
for
from
in
inside
into
near
next
of
off
on
onto
out
outside
over
past
through
throughout
to
toward
towards
under
underneath
up
upon
with
within
without

# conjunctions
and
because
but
nor
or
so
while
yet

# relative pronouns / demonstratives
that
these
this
those
which
who
whom
whose

# copulas / auxiliaries
am
are
be
been
being
is
was
were

# common -ing verb forms seen in region captions (nouns such as "building",
# "ceiling" or "painting" are deliberately absent)
carrying
catching
climbing
cooking
crossing
cutting
drinking
driving
eating
facing
flying
grazing
hanging
hitting
holding
jumping
kneeling
laying
leaning
looking
lying
playing
pointing
pulling
pushing
reaching
reading
riding
running
sitting
skating
skiing
sleeping
smiling
standing
surfing
swimming
swinging
talking
throwing
walking
watching
waving
wearing
)";

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
    });
    return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i]))
            ++i;
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j]))
            ++j;
        if (j > i)
            tokens.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return tokens;
}

bool is_article(std::string_view t) { return t == "a" || t == "an" || t == "the"; }

std::string strip_token_punct(std::string_view t) {
    const std::string_view punct = ".,;:!?\"'()[]";
    std::size_t b = 0, e = t.size();
    while (b < e && punct.find(t[b]) != std::string_view::npos)
        ++b;
    while (e > b && punct.find(t[e - 1]) != std::string_view::npos)
        --e;
    return std::string(t.substr(b, e - b));
}

} // namespace

std::string_view builtin_lexicon_text() { return kLexiconText; }

bool Lexicon::contains(std::string_view token) const {
    return words.count(std::string(token)) > 0;
}

Lexicon Lexicon::from_text(std::string_view text) {
    Lexicon lex;
    lex.content_hash = fnv1a64(text);
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        const std::size_t hash = line.find('#');
        if (hash != std::string_view::npos)
            line = line.substr(0, hash);
        for (const auto& tok : split_ws(line))
            lex.words.insert(ascii_lower(tok));
    }
    return lex;
}

Lexicon Lexicon::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open lexicon file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

const Lexicon& Lexicon::builtin() {
    static const Lexicon lex = from_text(kLexiconText);
    return lex;
}

CaptionClass classify_caption(std::string_view caption, const Lexicon& lexicon) {
    const std::string lowered = ascii_lower(caption);
    std::vector<std::string> tokens = split_ws(lowered);

    std::size_t start = 0;
    while (start < tokens.size() && is_article(strip_token_punct(tokens[start])))
        ++start;
    // a caption that is nothing but articles keeps its last token
    if (start == tokens.size() && !tokens.empty())
        --start;

    CaptionClass cls;
    cls.token_count = static_cast<int>(tokens.size() - start);
    if (cls.token_count > 3) {
        cls.kind = CaptionKind::RegionType;
        cls.trigger = "token_count";
        return cls;
    }
    for (std::size_t i = start; i < tokens.size(); ++i) {
        const std::string bare = strip_token_punct(tokens[i]);
        if (!bare.empty() && lexicon.contains(bare)) {
            cls.kind = CaptionKind::RegionType;
            cls.trigger = "function_word:" + bare;
            return cls;
        }
    }
    cls.kind = CaptionKind::ObjectType;
    cls.trigger = "object";
    return cls;
}

std::string normalize_phrase(std::string_view text) {
    std::string s = ascii_lower(text);

    const auto is_quote = [](char c) { return c == '\'' || c == '"' || c == '`'; };
    const auto is_trailing_punct = [&](char c) {
        return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':' || is_quote(c);
    };

    // iteratively peel whitespace, quotes and trailing punctuation
    bool changed = true;
    while (changed && !s.empty()) {
        changed = false;
        std::size_t b = 0, e = s.size();
        while (b < e && is_space(s[b]))
            ++b;
        while (e > b && is_space(s[e - 1]))
            --e;
        if (b < e && is_quote(s[b]))
            ++b, changed = true;
        if (e > b && is_trailing_punct(s[e - 1]))
            --e, changed = true;
        if (b != 0 || e != s.size()) {
            s = s.substr(b, e - b);
            changed = true;
        }
    }

    std::vector<std::string> tokens = split_ws(s);
    std::size_t start = 0;
    while (start < tokens.size() && is_article(tokens[start]))
        ++start;

    std::string out;
    for (std::size_t i = start; i < tokens.size(); ++i) {
        if (!out.empty())
            out += ' ';
        out += tokens[i];
    }
    return out;
}

} // namespace proxforge
