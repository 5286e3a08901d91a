#pragma once

// Hand-rolled generators and independent oracles shared by the unit and
// acceptance tests.

#include "fe/eval.hpp"
#include "fe/grounding.hpp"
#include "fe/text.hpp"
#include "fe/verdict.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fe::testing {

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
    return v[pick(rng, v.size())];
}

// --- verdict replies -------------------------------------------------------

// Assistant turns exactly as printed in the appendix table, typographic quotes included.
inline const char* const appendix_barn_reply =
    "The resulting image would show a castle in the mountains, which is a sensible image.\n"
    "{ \"verdict\": \xE2\x80\x9Ctrue\xE2\x80\x9D,\n\"entity\": \xE2\x80\x9C" "barn\xE2\x80\x9D}";
inline const char* const appendix_bridge_reply =
    "The resulting image would show a ship up in the air which does not make logical sense.\n"
    "{ \"verdict\": \xE2\x80\x9C" "false\xE2\x80\x9D,\n\"entity\": \xE2\x80\x9Cnone\xE2\x80\x9D}";

struct VerdictCase {
    std::string reply;
    // Empty when the reply must be rejected.
    std::optional<Verdict> expected;
};

inline VerdictCase fuzz_verdict_reply(std::mt19937_64& rng) {
    static const std::vector<std::string> prefixes = {
        "",
        "The resulting image would show a dog on the beach.",
        "The resulting image would show {not json here",
        "Reasoning: a decoy {\"verdict\": \"false\"} came first.\n",
        "   \n\t",
        "Sure! Here is my answer:\n",
        "The resulting image would show a \"quoted\" thing.",
        "}}} stray closers first",
    };
    static const std::vector<std::string> suffixes = {"", "\n", "  Hope that helps.", "\nThanks"};
    struct Val {
        std::string text;
        int meaning;  // 1 true, 0 false, -1 invalid
    };
    static const std::vector<Val> verdicts = {
        {"\"true\"", 1},  {"\"false\"", 0},      {"true", 1},      {"false", 0},     {"\"TRUE\"", 1},
        {"\" False \"", 0}, {"\xE2\x80\x9Ctrue\xE2\x80\x9D", 1}, {"\xE2\x80\x9C" "false\xE2\x80\x9D", 0},
        {"\"maybe\"", -1}, {"1", -1},            {"null", -1},     {"[true]", -1},   {"\"\"", -1}};
    struct Ent {
        std::string text;
        std::optional<std::string> value;  // nullopt: absent, non-string or unusable
    };
    static const std::vector<Ent> entities = {
        {"\"barn\"", "barn"},       {"\" red car \"", "red car"}, {"\"none\"", std::nullopt},
        {"\"None\"", std::nullopt}, {"\"\"", std::nullopt},       {"42", std::nullopt},
        {"null", std::nullopt},     {"", std::nullopt},           {"\xE2\x80\x9C" "bridge\xE2\x80\x9D", "bridge"}};

    VerdictCase c;
    int shape = static_cast<int>(pick(rng, 10));
    auto prefix = pick(rng, prefixes);
    auto suffix = pick(rng, suffixes);
    if (shape == 0) {
        c.reply = prefix + suffix;
        if (prefix.find("{\"verdict\"") != std::string::npos) {
            // Only the decoy object is well formed.
            c.expected = Verdict{false, std::nullopt, text::trim(prefix.substr(0, prefix.find("{\"verdict\"")))};
        }
        return c;
    }
    if (shape == 1) {
        c.reply = prefix + "{\"verdict\": \"true\", \"entity\": \"barn\"" + suffix;  // truncated
        if (prefix.find("{\"verdict\"") != std::string::npos) {
            c.expected = Verdict{false, std::nullopt, text::trim(prefix.substr(0, prefix.find("{\"verdict\"")))};
        }
        return c;
    }
    const auto& v = pick(rng, verdicts);
    const auto& e = pick(rng, entities);
    std::string obj = "{";
    bool has_verdict = shape != 2;
    if (has_verdict) obj += "\"verdict\": " + v.text;
    if (!e.text.empty()) {
        if (has_verdict) obj += ", ";
        obj += "\"entity\": " + e.text;
    }
    if (pick(rng, 3) == 0) obj += std::string(obj.size() > 1 ? ", " : "") + "\"extra\": {\"nested\": [1, 2]}";
    obj += "}";
    c.reply = prefix + obj + suffix;
    if (!has_verdict || v.meaning < 0) return c;
    Verdict out;
    out.possible = v.meaning == 1;
    out.reasoning = text::trim(text::straighten_quotes(prefix));
    if (out.possible) {
        if (!e.value) return c;
        out.entity = e.value;
    }
    c.expected = out;
    return c;
}

inline bool verdict_invariants_hold(const Verdict& v) {
    if (v.possible) {
        return v.entity && !text::trim(*v.entity).empty() && !text::iequals(text::trim(*v.entity), "none");
    }
    return !v.entity.has_value();
}

// --- compositing -----------------------------------------------------------

inline BBox random_box(std::mt19937_64& rng, int w, int h) {
    int x0 = static_cast<int>(pick(rng, static_cast<std::size_t>(w)));
    int y0 = static_cast<int>(pick(rng, static_cast<std::size_t>(h)));
    int x1 = x0 + 1 + static_cast<int>(pick(rng, static_cast<std::size_t>(w - x0)));
    int y1 = y0 + 1 + static_cast<int>(pick(rng, static_cast<std::size_t>(h - y0)));
    return BBox{x0, y0, x1, y1, 1.0};
}

// Analytic band: inside the box and closer than stroke to one of its edges.
inline bool band_oracle(const BBox& b, int stroke, int x, int y) {
    if (x < b.x0 || x >= b.x1 || y < b.y0 || y >= b.y1) return false;
    int d = std::min({x - b.x0, b.x1 - 1 - x, y - b.y0, b.y1 - 1 - y});
    return d < stroke;
}

inline bool pixel_differs(const Raster& a, const Raster& b, int x, int y) {
    for (int c = 0; c < a.channels; ++c) {
        if (a.at(x, y)[c] != b.at(x, y)[c]) return true;
    }
    return false;
}

// Image whose pixels are never pure red, so every band pixel must change.
inline Raster random_non_red_image(std::mt19937_64& rng, int w, int h) {
    Raster r(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            auto* p = r.at(x, y);
            for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>(rng());
            if (p[0] == 255 && p[1] == 0 && p[2] == 0) p[1] = 1;
        }
    }
    return r;
}

struct LocalityResult {
    bool bbox_exact = true;
    bool noise_exact = true;
    std::string detail;
};

inline LocalityResult check_locality(std::mt19937_64& rng) {
    LocalityResult res;
    int w = 1 + static_cast<int>(pick(rng, 64));
    int h = 1 + static_cast<int>(pick(rng, 64));
    auto img = random_non_red_image(rng, w, h);
    auto box = random_box(rng, w, h);
    int stroke = 1 + static_cast<int>(pick(rng, 8));
    auto drawn = draw_bbox(img, box, stroke, Rgb{255, 0, 0});
    std::bernoulli_distribution coin(0.05 + 0.9 * static_cast<double>(pick(rng, 100)) / 100.0);
    Mask mask(w, h);
    for (auto& b : mask.bits) b = coin(rng) ? 1 : 0;
    auto noisy = apply_mask_noise(img, mask, NoiseParams{rng()});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool band = band_oracle(box, stroke, x, y);
            if (pixel_differs(img, drawn, x, y) != band) {
                res.bbox_exact = false;
                res.detail = "bbox pixel (" + std::to_string(x) + "," + std::to_string(y) + ")";
            }
            if (band && !(drawn.at(x, y)[0] == 255 && drawn.at(x, y)[1] == 0 && drawn.at(x, y)[2] == 0)) {
                res.bbox_exact = false;
                res.detail = "band pixel not stroke colour";
            }
            if (pixel_differs(img, noisy, x, y) != static_cast<bool>(mask.get(x, y))) {
                res.noise_exact = false;
                res.detail = "noise pixel (" + std::to_string(x) + "," + std::to_string(y) + ")";
            }
        }
    }
    return res;
}

// --- agreement -------------------------------------------------------------

inline JudgmentTable random_table(std::mt19937_64& rng, std::size_t max_items = 12, std::size_t max_raters = 6) {
    JudgmentTable t;
    std::size_t items = 1 + pick(rng, max_items);
    std::size_t raters = 2 + pick(rng, max_raters - 1);
    // Skewed label distribution so agreement varies across tables.
    std::discrete_distribution<int> labels({1.0 + static_cast<double>(pick(rng, 5)), 1.0 + static_cast<double>(pick(rng, 5)),
                                            1.0 + static_cast<double>(pick(rng, 5))});
    bool guaranteed = false;
    for (std::size_t i = 0; i < items; ++i) {
        for (std::size_t r = 0; r < raters; ++r) {
            bool rated = pick(rng, 4) != 0 || (!guaranteed && r < 2);
            if (!rated) continue;
            if (r >= 1) guaranteed = true;
            t.ratings.push_back(Rating{"item" + std::to_string(i), "rater" + std::to_string(r),
                                       static_cast<Judgment>(labels(rng)), ""});
        }
    }
    return t;
}

// Pairwise definition: D_o averages delta over ordered pairs of values within
// a unit (weighted 1/(m_u - 1)); D_e averages delta over all ordered pairs of
// pairable values regardless of unit.
inline double alpha_oracle(const JudgmentTable& t, AlphaMetric metric) {
    std::map<std::string, std::vector<int>> units;
    for (const auto& r : t.ratings) units[r.item].push_back(static_cast<int>(r.label));
    std::vector<int> pool;
    for (const auto& [item, vals] : units) {
        if (vals.size() >= 2) pool.insert(pool.end(), vals.begin(), vals.end());
    }
    const double n = static_cast<double>(pool.size());
    std::vector<double> freq(3, 0.0);
    for (int v : pool) freq[static_cast<std::size_t>(v)] += 1.0;
    auto delta = [&](int c, int k) -> double {
        if (c == k) return 0.0;
        if (metric == AlphaMetric::Nominal) return 1.0;
        double s = 0.0;
        for (int g = std::min(c, k); g <= std::max(c, k); ++g) s += freq[static_cast<std::size_t>(g)];
        s -= (freq[static_cast<std::size_t>(c)] + freq[static_cast<std::size_t>(k)]) / 2.0;
        return s * s;
    };
    double d_o = 0.0;
    for (const auto& [item, vals] : units) {
        if (vals.size() < 2) continue;
        double sum = 0.0;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            for (std::size_t j = 0; j < vals.size(); ++j) {
                if (i != j) sum += delta(vals[i], vals[j]);
            }
        }
        d_o += sum / static_cast<double>(vals.size() - 1);
    }
    d_o /= n;
    double d_e = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (std::size_t j = 0; j < pool.size(); ++j) {
            if (i != j) d_e += delta(pool[i], pool[j]);
        }
    }
    d_e /= n * (n - 1.0);
    if (d_e == 0.0) return 1.0;
    return 1.0 - d_o / d_e;
}

inline JudgmentTable permute_labels(const JudgmentTable& t, const std::array<int, 3>& perm) {
    JudgmentTable out = t;
    for (auto& r : out.ratings) r.label = static_cast<Judgment>(perm[static_cast<std::size_t>(r.label)]);
    return out;
}

// Reference H-score: sum of weights over count, with Yes=2, Partially=1, No=0 halves.
inline double h_score_oracle(const JudgmentTable& t) {
    long long halves = 0;
    for (const auto& r : t.ratings) halves += r.label == Judgment::Yes ? 2 : (r.label == Judgment::Partially ? 1 : 0);
    return static_cast<double>(halves) / (2.0 * static_cast<double>(t.ratings.size()));
}

// --- re-ranking ------------------------------------------------------------

// Exhaustive reference: the index whose score no other index beats, and
// which every strictly-earlier index falls short of.
inline std::size_t select_oracle(const std::vector<int>& scores) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool best = true;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (scores[j] > scores[i] || (j < i && scores[j] == scores[i])) best = false;
        }
        if (best) return i;
    }
    return scores.size();
}

} // namespace fe::testing
