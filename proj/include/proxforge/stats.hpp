#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "proxforge/conversation.hpp"

namespace proxforge {

/// Mergeable partial sums; merging any partition of the input equals the
/// single-pass result exactly (all sums are integers).
struct StatsAccumulator {
    std::uint64_t perception_count = 0;
    std::uint64_t reasoning_count = 0;
    std::uint64_t perception_question_words = 0;
    std::uint64_t perception_answer_words = 0;
    std::uint64_t reasoning_question_words = 0;
    std::uint64_t reasoning_answer_words = 0;
    std::array<std::uint64_t, 10> depth_buckets{}; // [0,0.1) ... [0.9,1.0]
    std::array<std::uint64_t, 3> relation_counts{}; // first/second/equal

    void add(const Conversation& conv);
    void merge(const StatsAccumulator& other);
};

struct StatsReport {
    std::uint64_t perception_count = 0;
    std::uint64_t reasoning_count = 0;
    std::optional<double> mean_question_words_perception;
    std::optional<double> mean_question_words_reasoning;
    std::optional<double> mean_answer_words_perception;
    std::optional<double> mean_answer_words_reasoning;
    std::optional<std::array<double, 10>> depth_histogram; // fractions, sum 1
    std::optional<std::array<double, 3>> relation_distribution;

    std::string to_json() const; // pretty-printed report
    std::string to_text() const; // flat terminal histogram
};

StatsReport finalize_stats(const StatsAccumulator& acc);

/// Single-pass report over an in-memory dataset.
StatsReport compute_stats(const std::vector<Conversation>& dataset);

/// Whitespace tokens; a leading "<image>" placeholder token is not a word.
std::uint64_t word_count(std::string_view text);

} // namespace proxforge
