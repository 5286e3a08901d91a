#pragma once

#include "fe/gateway.hpp"
#include "fe/model.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fe {

struct MCQuestion {
    std::string question;
    std::vector<std::string> choices;
    std::string answer;

    bool operator==(const MCQuestion&) const = default;
};

struct TifaQuestions {
    std::vector<MCQuestion> questions;
    bool low_coverage = false;
};

inline constexpr std::size_t tifa_min_questions = 3;
inline constexpr std::size_t tifa_max_questions = 10;

std::vector<ChatMessage> build_tifa_prompt(std::string_view caption);

// Question:/Choices:/Answer: blocks. Tuples whose answer is not among the
// choices, or whose choices repeat, are dropped. Throws Parse when nothing
// usable remains.
std::vector<MCQuestion> parse_tifa_reply(std::string_view llm_text);

// Keeps at most tifa_max_questions; fewer than tifa_min_questions sets low_coverage.
TifaQuestions tifa_generate(std::string_view caption, Gateway& gateway);

// Fraction of questions whose VQA answer, normalized, equals the correct choice.
double tifa_score_image(const WireImage& image, std::span<const MCQuestion> questions, Gateway& gateway);

struct SystemOutputs {
    std::string name;
    std::map<std::string, std::filesystem::path> images;  // record id -> output image
};

struct TifaSystemReport {
    std::string name;
    std::map<std::string, double> per_image;
    double mean = 0.0;
    std::vector<std::string> missing;
};

struct TifaReport {
    std::vector<TifaSystemReport> systems;
    std::vector<std::string> low_coverage;
    json to_json() const;
};

// Questions come from each test record's edited caption (caption when the
// edited caption is empty). Each system is scored on the records it has
// outputs for; an empty intersection is an error.
TifaReport tifa_corpus(const Manifest& manifest, std::span<const SystemOutputs> systems, Gateway& gateway);

enum class Judgment { No, Partially, Yes };
Judgment parse_judgment(std::string_view label);
std::string_view to_string(Judgment j);

struct Rating {
    std::string item;
    std::string rater;
    Judgment label = Judgment::No;
    std::string justification;
};

struct JudgmentTable {
    std::vector<Rating> ratings;

    std::vector<std::string> items() const;
    std::vector<std::string> raters() const;
};

// CSV with header item_id,rater_id,label,justification; fields may be quoted.
JudgmentTable parse_ratings_csv(std::string_view csv);
JudgmentTable load_ratings(const std::filesystem::path& path);

// Mean of Yes=1, Partially=1/2, No=0 over every rating.
double h_score(const JudgmentTable& table);

enum class AlphaMetric { Nominal, Ordinal };
AlphaMetric parse_alpha_metric(std::string_view s);

// Coincidence-matrix Krippendorff's alpha; single-rating items are not
// pairable. Returns 1 when expected disagreement is zero.
double krippendorff_alpha(const JudgmentTable& table, AlphaMetric metric);

json human_eval_report(const JudgmentTable& table);

} // namespace fe
