#include "fe/eval.hpp"

#include "fe/image.hpp"
#include "fe/prompt_assets.hpp"
#include "fe/text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

namespace fe {

namespace {

std::string render_tifa_block(const MCQuestion& q) {
    std::string choices;
    for (std::size_t i = 0; i < q.choices.size(); ++i) {
        if (i) choices += ", ";
        choices += q.choices[i];
    }
    return "Question: " + q.question + "\nChoices: " + choices + "\nAnswer: " + q.answer;
}

bool valid_question(const MCQuestion& q) {
    if (q.question.empty() || q.choices.size() < 2) return false;
    std::set<std::string> seen;
    for (const auto& c : q.choices) {
        if (!seen.insert(text::normalize(c)).second) return false;
    }
    return seen.contains(text::normalize(q.answer));
}

} // namespace

std::vector<ChatMessage> build_tifa_prompt(std::string_view caption) {
    static const json tmpl = json::parse(assets::tifa_prompt());
    std::vector<ChatMessage> out;
    out.push_back({"system", tmpl.at("preamble").get<std::string>()});
    for (const auto& ex : tmpl.at("exemplars")) {
        out.push_back({"user", "Caption: " + ex.at("caption").get<std::string>()});
        std::string reply;
        for (const auto& q : ex.at("questions")) {
            MCQuestion mc{q.at("question").get<std::string>(), q.at("choices").get<std::vector<std::string>>(),
                          q.at("answer").get<std::string>()};
            if (!reply.empty()) reply += "\n\n";
            reply += render_tifa_block(mc);
        }
        out.push_back({"assistant", reply});
    }
    out.push_back({"user", "Caption: " + std::string(caption)});
    return out;
}

std::vector<MCQuestion> parse_tifa_reply(std::string_view llm_text) {
    std::vector<MCQuestion> out;
    std::optional<MCQuestion> cur;
    auto finish = [&] {
        if (cur) {
            // The answer is stored in the spelling used by the choices.
            for (const auto& c : cur->choices) {
                if (text::normalize(c) == text::normalize(cur->answer)) {
                    cur->answer = c;
                    break;
                }
            }
            if (valid_question(*cur)) out.push_back(*cur);
        }
        cur.reset();
    };
    for (const auto& raw : text::split_lines(llm_text)) {
        auto line = text::trim(raw);
        if (text::starts_with_ci(line, "Question:")) {
            finish();
            cur = MCQuestion{text::trim(std::string_view(line).substr(9)), {}, {}};
        } else if (text::starts_with_ci(line, "Choices:") && cur) {
            cur->choices.clear();
            for (auto& c : text::split(std::string_view(line).substr(8), ',')) {
                auto t = text::trim(c);
                if (!t.empty()) cur->choices.push_back(t);
            }
        } else if (text::starts_with_ci(line, "Answer:") && cur) {
            cur->answer = text::trim(std::string_view(line).substr(7));
            finish();
        }
    }
    finish();
    if (out.empty()) throw Error(ErrorCode::Parse, "no usable Question/Choices/Answer tuples in reply");
    return out;
}

TifaQuestions tifa_generate(std::string_view caption, Gateway& gateway) {
    if (text::trim(caption).empty()) throw Error(ErrorCode::InvalidArgument, "TIFA caption is empty");
    auto messages = build_tifa_prompt(caption);
    std::string failure;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto reply = gateway.chat(messages, 0.0, 1024, attempt == 0 ? "" : "retry-" + std::to_string(attempt));
        try {
            TifaQuestions out;
            out.questions = parse_tifa_reply(reply);
            if (out.questions.size() > tifa_max_questions) out.questions.resize(tifa_max_questions);
            out.low_coverage = out.questions.size() < tifa_min_questions;
            return out;
        } catch (const Error& e) {
            failure = e.what();
        }
    }
    throw Error(ErrorCode::Parse, "TIFA question generation failed for '" + std::string(caption) + "': " + failure);
}

double tifa_score_image(const WireImage& image, std::span<const MCQuestion> questions, Gateway& gateway) {
    if (questions.empty()) throw Error(ErrorCode::InvalidArgument, "TIFA scoring needs at least one question");
    std::size_t correct = 0;
    for (const auto& q : questions) {
        auto answer = text::normalize(gateway.vqa(image, q.question));
        auto match = std::find_if(q.choices.begin(), q.choices.end(),
                                  [&](const std::string& c) { return text::normalize(c) == answer; });
        if (match != q.choices.end() && text::normalize(*match) == text::normalize(q.answer)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(questions.size());
}

json TifaReport::to_json() const {
    json systems_json = json::array();
    json comparison = json::array();
    for (const auto& s : systems) {
        systems_json.push_back({{"name", s.name},
                                {"mean", s.mean},
                                {"images", s.per_image.size()},
                                {"per_image", s.per_image},
                                {"missing", s.missing}});
        comparison.push_back({{"system", s.name}, {"mean", s.mean}, {"images", s.per_image.size()}});
    }
    std::stable_sort(comparison.begin(), comparison.end(),
                     [](const json& a, const json& b) { return a["mean"].get<double>() > b["mean"].get<double>(); });
    return {{"systems", systems_json}, {"comparison", comparison}, {"low_coverage", low_coverage}};
}

TifaReport tifa_corpus(const Manifest& manifest, std::span<const SystemOutputs> systems, Gateway& gateway) {
    std::vector<const EditSample*> records;
    for (const auto& r : manifest.records) {
        if (!r.rejected()) records.push_back(&r);
    }

    std::map<std::string, TifaQuestions> questions;
    TifaReport report;
    auto questions_for = [&](const EditSample& r) -> const TifaQuestions& {
        auto it = questions.find(r.id);
        if (it != questions.end()) return it->second;
        const auto& caption = r.edited_caption.empty() ? r.caption : r.edited_caption;
        auto q = tifa_generate(caption, gateway);
        if (q.low_coverage) report.low_coverage.push_back(r.id);
        return questions.emplace(r.id, std::move(q)).first->second;
    };

    for (const auto& sys : systems) {
        TifaSystemReport sr;
        sr.name = sys.name;
        for (const auto* r : records) {
            auto it = sys.images.find(r->id);
            if (it == sys.images.end()) {
                sr.missing.push_back(r->id);
                continue;
            }
            const auto& q = questions_for(*r);
            sr.per_image[r->id] = tifa_score_image(WireImage::from_file(it->second), q.questions, gateway);
        }
        if (sr.per_image.empty()) {
            throw Error(ErrorCode::InvalidArgument, "system '" + sys.name + "' has no outputs for any test record");
        }
        double sum = 0.0;
        for (const auto& [id, s] : sr.per_image) sum += s;
        sr.mean = sum / static_cast<double>(sr.per_image.size());
        report.systems.push_back(std::move(sr));
    }
    return report;
}

Judgment parse_judgment(std::string_view label) {
    auto n = text::normalize(label);
    if (n == "yes") return Judgment::Yes;
    if (n == "partially" || n == "partially yes" || n == "partial") return Judgment::Partially;
    if (n == "no") return Judgment::No;
    throw Error(ErrorCode::Parse, "unknown judgment label '" + std::string(label) + "'");
}

std::string_view to_string(Judgment j) {
    switch (j) {
    case Judgment::Yes: return "Yes";
    case Judgment::Partially: return "Partially";
    case Judgment::No: return "No";
    }
    return "No";
}

std::vector<std::string> JudgmentTable::items() const {
    std::vector<std::string> out;
    for (const auto& r : ratings) {
        if (std::find(out.begin(), out.end(), r.item) == out.end()) out.push_back(r.item);
    }
    return out;
}

std::vector<std::string> JudgmentTable::raters() const {
    std::vector<std::string> out;
    for (const auto& r : ratings) {
        if (std::find(out.begin(), out.end(), r.rater) == out.end()) out.push_back(r.rater);
    }
    return out;
}

JudgmentTable parse_ratings_csv(std::string_view csv) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < csv.size(); ++i) {
        char c = csv[i];
        if (quoted) {
            if (c == '"' && i + 1 < csv.size() && csv[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < csv.size() && csv[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field.push_back(c);
            any = true;
        }
    }
    if (quoted) throw Error(ErrorCode::Parse, "ratings: unterminated quoted field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorCode::Parse, "ratings: missing header");

    static const std::array<std::string, 4> header = {"item_id", "rater_id", "label", "justification"};
    const auto& h = rows.front();
    if (h.size() < 3 || text::trim(h[0]) != header[0] || text::trim(h[1]) != header[1] || text::trim(h[2]) != header[2] ||
        (h.size() > 3 && text::trim(h[3]) != header[3])) {
        throw Error(ErrorCode::Parse, "ratings: header must be item_id,rater_id,label,justification");
    }
    JudgmentTable t;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 3) throw Error(ErrorCode::Parse, "ratings row " + std::to_string(i + 1) + ": too few fields");
        Rating rating;
        rating.item = text::trim(r[0]);
        rating.rater = text::trim(r[1]);
        try {
            rating.label = parse_judgment(r[2]);
        } catch (const Error& e) {
            throw Error(ErrorCode::Parse, "ratings row " + std::to_string(i + 1) + ": " + e.what());
        }
        if (r.size() > 3) rating.justification = r[3];
        if (rating.item.empty() || rating.rater.empty()) {
            throw Error(ErrorCode::Parse, "ratings row " + std::to_string(i + 1) + ": empty item or rater id");
        }
        t.ratings.push_back(std::move(rating));
    }
    return t;
}

JudgmentTable load_ratings(const std::filesystem::path& path) { return parse_ratings_csv(read_text_file(path)); }

double h_score(const JudgmentTable& table) {
    if (table.ratings.empty()) throw Error(ErrorCode::InvalidArgument, "h_score of an empty table");
    double sum = 0.0;
    for (const auto& r : table.ratings) sum += static_cast<double>(static_cast<int>(r.label)) / 2.0;
    return sum / static_cast<double>(table.ratings.size());
}

AlphaMetric parse_alpha_metric(std::string_view s) {
    auto n = text::lower(text::trim(s));
    if (n == "nominal") return AlphaMetric::Nominal;
    if (n == "ordinal") return AlphaMetric::Ordinal;
    throw Error(ErrorCode::InvalidArgument, "unknown metric '" + std::string(s) + "'");
}

double krippendorff_alpha(const JudgmentTable& table, AlphaMetric metric) {
    constexpr int labels = 3;
    std::map<std::string, std::array<double, labels>> per_item;
    for (const auto& r : table.ratings) per_item[r.item][static_cast<int>(r.label)] += 1.0;

    std::array<std::array<double, labels>, labels> o{};
    bool pairable = false;
    for (const auto& [item, counts] : per_item) {
        double m = counts[0] + counts[1] + counts[2];
        if (m < 2) continue;
        pairable = true;
        for (int c = 0; c < labels; ++c) {
            for (int k = 0; k < labels; ++k) {
                double pairs = c == k ? counts[c] * (counts[c] - 1) : counts[c] * counts[k];
                o[c][k] += pairs / (m - 1);
            }
        }
    }
    if (!pairable) throw Error(ErrorCode::InvalidArgument, "alpha needs an item rated at least twice");

    std::array<double, labels> n_c{};
    double n = 0.0;
    for (int c = 0; c < labels; ++c) {
        for (int k = 0; k < labels; ++k) n_c[c] += o[c][k];
        n += n_c[c];
    }

    auto delta2 = [&](int c, int k) -> double {
        if (c == k) return 0.0;
        if (metric == AlphaMetric::Nominal) return 1.0;
        int lo = std::min(c, k), hi = std::max(c, k);
        double s = 0.0;
        for (int g = lo; g <= hi; ++g) s += n_c[g];
        s -= (n_c[c] + n_c[k]) / 2.0;
        return s * s;
    };

    double observed = 0.0;
    double expected = 0.0;
    for (int c = 0; c < labels; ++c) {
        for (int k = 0; k < labels; ++k) {
            double d = delta2(c, k);
            observed += o[c][k] * d;
            expected += n_c[c] * n_c[k] * d;
        }
    }
    if (expected == 0.0) return 1.0;
    return 1.0 - (n - 1.0) * observed / expected;
}

json human_eval_report(const JudgmentTable& table) {
    json by_label = {{"Yes", 0}, {"Partially", 0}, {"No", 0}};
    for (const auto& r : table.ratings) {
        auto& v = by_label[std::string(to_string(r.label))];
        v = v.get<int>() + 1;
    }
    json j = {{"ratings", table.ratings.size()},
              {"items", table.items().size()},
              {"raters", table.raters().size()},
              {"labels", by_label},
              {"h_score", h_score(table)}};
    try {
        j["alpha_nominal"] = krippendorff_alpha(table, AlphaMetric::Nominal);
        j["alpha_ordinal"] = krippendorff_alpha(table, AlphaMetric::Ordinal);
    } catch (const Error& e) {
        j["alpha_nominal"] = nullptr;
        j["alpha_ordinal"] = nullptr;
        j["alpha_error"] = e.what();
    }
    return j;
}

} // namespace fe
