#include "proxforge/stats.hpp"

#include <cstdio>

#include "json.hpp"

namespace proxforge {

using nlohmann::ordered_json;

std::uint64_t word_count(std::string_view text) {
    std::uint64_t n = 0;
    bool first = true;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' ||
                                   text[i] == '\r'))
            ++i;
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\n' &&
               text[j] != '\r')
            ++j;
        if (j > i) {
            // the image placeholder heads every human turn and is not a word
            if (!(first && text.substr(i, j - i) == "<image>"))
                ++n;
            first = false;
        }
        i = j;
    }
    return n;
}

void StatsAccumulator::add(const Conversation& conv) {
    const std::uint64_t qw = word_count(conv.turns[0].text);
    const std::uint64_t aw = word_count(conv.turns[1].text);
    if (conv.stage == Stage::Perception) {
        ++perception_count;
        perception_question_words += qw;
        perception_answer_words += aw;
        const int centi = std::get<PerceptionTruth>(conv.truth).label.centi;
        // closed top bucket: 1.00 belongs to [0.9, 1.0]
        ++depth_buckets[static_cast<std::size_t>(std::min(centi / 10, 9))];
    } else {
        ++reasoning_count;
        reasoning_question_words += qw;
        reasoning_answer_words += aw;
        const auto& rel = std::get<ReasoningTruth>(conv.truth).relation;
        ++relation_counts[static_cast<std::size_t>(rel)];
    }
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
    perception_count += other.perception_count;
    reasoning_count += other.reasoning_count;
    perception_question_words += other.perception_question_words;
    perception_answer_words += other.perception_answer_words;
    reasoning_question_words += other.reasoning_question_words;
    reasoning_answer_words += other.reasoning_answer_words;
    for (std::size_t i = 0; i < depth_buckets.size(); ++i)
        depth_buckets[i] += other.depth_buckets[i];
    for (std::size_t i = 0; i < relation_counts.size(); ++i)
        relation_counts[i] += other.relation_counts[i];
}

StatsReport finalize_stats(const StatsAccumulator& acc) {
    StatsReport rep;
    rep.perception_count = acc.perception_count;
    rep.reasoning_count = acc.reasoning_count;
    if (acc.perception_count > 0) {
        rep.mean_question_words_perception =
            static_cast<double>(acc.perception_question_words) / acc.perception_count;
        rep.mean_answer_words_perception =
            static_cast<double>(acc.perception_answer_words) / acc.perception_count;
        std::array<double, 10> hist{};
        for (std::size_t i = 0; i < hist.size(); ++i)
            hist[i] = static_cast<double>(acc.depth_buckets[i]) / acc.perception_count;
        rep.depth_histogram = hist;
    }
    if (acc.reasoning_count > 0) {
        rep.mean_question_words_reasoning =
            static_cast<double>(acc.reasoning_question_words) / acc.reasoning_count;
        rep.mean_answer_words_reasoning =
            static_cast<double>(acc.reasoning_answer_words) / acc.reasoning_count;
        std::array<double, 3> rel{};
        for (std::size_t i = 0; i < rel.size(); ++i)
            rel[i] = static_cast<double>(acc.relation_counts[i]) / acc.reasoning_count;
        rep.relation_distribution = rel;
    }
    return rep;
}

StatsReport compute_stats(const std::vector<Conversation>& dataset) {
    StatsAccumulator acc;
    for (const auto& conv : dataset)
        acc.add(conv);
    return finalize_stats(acc);
}

namespace {

ordered_json opt(const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

} // namespace

std::string StatsReport::to_json() const {
    ordered_json doc;
    doc["counts"] = ordered_json{{"perception", perception_count},
                                 {"reasoning", reasoning_count},
                                 {"total", perception_count + reasoning_count}};
    doc["mean_question_words"] = ordered_json{{"perception", opt(mean_question_words_perception)},
                                              {"reasoning", opt(mean_question_words_reasoning)}};
    doc["mean_answer_words"] = ordered_json{{"perception", opt(mean_answer_words_perception)},
                                            {"reasoning", opt(mean_answer_words_reasoning)}};
    if (depth_histogram) {
        ordered_json hist = ordered_json::array();
        for (double f : *depth_histogram)
            hist.push_back(f);
        doc["depth_histogram"] = std::move(hist);
    } else {
        doc["depth_histogram"] = nullptr;
    }
    if (relation_distribution) {
        doc["relation_distribution"] =
            ordered_json{{"first_closer", (*relation_distribution)[0]},
                         {"second_closer", (*relation_distribution)[1]},
                         {"equally_close", (*relation_distribution)[2]}};
    } else {
        doc["relation_distribution"] = nullptr;
    }
    doc["meta"] = ordered_json{
        {"word_rule", "whitespace tokens; a leading <image> placeholder is not counted"},
        {"histogram_edges", "[0,0.1) x 9 buckets, top bucket closed [0.9,1.0]"}};
    return doc.dump(2) + "\n";
}

std::string StatsReport::to_text() const {
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "perception: %llu   reasoning: %llu\n",
                  static_cast<unsigned long long>(perception_count),
                  static_cast<unsigned long long>(reasoning_count));
    out += buf;
    if (depth_histogram) {
        out += "depth histogram (perception ground truth):\n";
        for (std::size_t i = 0; i < depth_histogram->size(); ++i) {
            const double f = (*depth_histogram)[i];
            std::snprintf(buf, sizeof(buf), "  [%.1f,%.1f%s %6.2f%% ", i / 10.0, (i + 1) / 10.0,
                          i == 9 ? "]" : ")", f * 100.0);
            out += buf;
            out.append(static_cast<std::size_t>(f * 50.0 + 0.5), '#');
            out += '\n';
        }
    }
    if (relation_distribution) {
        std::snprintf(buf, sizeof(buf),
                      "relations: first_closer %.2f%%  second_closer %.2f%%  equally_close %.2f%%\n",
                      (*relation_distribution)[0] * 100.0, (*relation_distribution)[1] * 100.0,
                      (*relation_distribution)[2] * 100.0);
        out += buf;
    }
    return out;
}

} // namespace proxforge
