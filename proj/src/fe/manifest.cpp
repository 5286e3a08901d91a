#include "fe/manifest.hpp"

#include "fe/image.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

namespace fe {

namespace fs = std::filesystem;

namespace {

constexpr std::array known_fields = {
    "id",        "input_path", "input_digest", "caption", "instruction", "edited_caption",
    "edit_kind", "stage",      "rejection",    "verdict", "bbox",        "mask_path",
    "mask_area_fraction",      "candidates",   "qa_pairs", "scores",     "selected",
    "split",
};

bool is_known(const std::string& key) {
    for (auto f : known_fields) {
        if (key == f) return true;
    }
    return false;
}

std::string rel(const fs::path& p, const fs::path& base) {
    if (p.empty()) return {};
    if (base.empty() || p.is_relative()) return p.generic_string();
    return p.lexically_relative(base).generic_string();
}

fs::path resolve(const std::string& s, const fs::path& base) {
    fs::path p(s);
    if (s.empty() || base.empty() || p.is_absolute()) return p;
    return (base / p).lexically_normal();
}

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorCode::Parse, std::string("missing field '") + key + "'");
    return *it;
}

std::string get_string(const json& j, const char* key, std::string fallback = {}) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    if (!it->is_string()) throw Error(ErrorCode::Parse, std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

} // namespace

json to_json(const EditSample& s, const fs::path& base_dir) {
    json j = s.extra.is_object() ? s.extra : json::object();
    j["id"] = s.id;
    j["input_path"] = rel(s.input.path, base_dir);
    j["input_digest"] = s.input.digest;
    j["caption"] = s.caption;
    j["instruction"] = s.instruction;
    j["edited_caption"] = s.edited_caption;
    if (s.edit_kind) j["edit_kind"] = to_string(*s.edit_kind);
    j["stage"] = to_string(s.stage);
    if (s.rejection) {
        j["rejection"] = {{"stage", to_string(s.rejection->stage)},
                          {"reason", s.rejection->reason},
                          {"detail", s.rejection->detail}};
    }
    if (s.verdict) {
        json v = {{"possible", s.verdict->possible}, {"reasoning", s.verdict->reasoning}};
        if (s.verdict->entity) v["entity"] = *s.verdict->entity;
        j["verdict"] = std::move(v);
    }
    if (s.bbox) {
        j["bbox"] = {{"x0", s.bbox->x0}, {"y0", s.bbox->y0}, {"x1", s.bbox->x1},
                     {"y1", s.bbox->y1}, {"confidence", s.bbox->confidence}};
    }
    if (s.mask_path) j["mask_path"] = rel(*s.mask_path, base_dir);
    if (s.mask_area_fraction) j["mask_area_fraction"] = *s.mask_area_fraction;
    if (!s.candidates.empty()) {
        json c = json::array();
        for (const auto& ref : s.candidates) c.push_back({{"path", rel(ref.path, base_dir)}, {"digest", ref.digest}});
        j["candidates"] = std::move(c);
    }
    if (!s.qa_pairs.empty()) {
        json q = json::array();
        for (const auto& p : s.qa_pairs) {
            q.push_back({{"entity", p.entity}, {"question", p.question}, {"expected", to_string(p.expected)}});
        }
        j["qa_pairs"] = std::move(q);
    }
    if (!s.scores.empty()) j["scores"] = s.scores;
    if (s.selected) j["selected"] = *s.selected;
    if (s.split) j["split"] = to_string(*s.split);
    return j;
}

EditSample from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw Error(ErrorCode::Parse, "record is not an object");
    EditSample s;
    s.id = require(j, "id").get<std::string>();
    if (s.id.empty()) throw Error(ErrorCode::Parse, "empty id");
    s.input.path = resolve(get_string(j, "input_path"), base_dir);
    s.input.digest = get_string(j, "input_digest");
    s.caption = get_string(j, "caption");
    s.instruction = get_string(j, "instruction");
    s.edited_caption = get_string(j, "edited_caption");
    if (j.contains("edit_kind")) s.edit_kind = parse_edit_kind(j["edit_kind"].get<std::string>());
    s.stage = j.contains("stage") ? parse_stage(j["stage"].get<std::string>()) : Stage::Raw;
    if (auto it = j.find("rejection"); it != j.end() && !it->is_null()) {
        s.rejection = Rejection{parse_stage(require(*it, "stage").get<std::string>()),
                                require(*it, "reason").get<std::string>(), get_string(*it, "detail")};
    }
    if (auto it = j.find("verdict"); it != j.end() && !it->is_null()) {
        Verdict v;
        v.possible = require(*it, "possible").get<bool>();
        if (it->contains("entity")) v.entity = (*it)["entity"].get<std::string>();
        v.reasoning = get_string(*it, "reasoning");
        s.verdict = std::move(v);
    }
    if (auto it = j.find("bbox"); it != j.end() && !it->is_null()) {
        s.bbox = BBox{require(*it, "x0").get<int>(), require(*it, "y0").get<int>(),
                      require(*it, "x1").get<int>(), require(*it, "y1").get<int>(),
                      it->value("confidence", 0.0)};
    }
    if (auto p = get_string(j, "mask_path"); !p.empty()) s.mask_path = resolve(p, base_dir);
    if (auto it = j.find("mask_area_fraction"); it != j.end() && !it->is_null()) {
        s.mask_area_fraction = it->get<double>();
    }
    if (auto it = j.find("candidates"); it != j.end()) {
        for (const auto& c : *it) {
            s.candidates.push_back(ImageRef{resolve(require(c, "path").get<std::string>(), base_dir),
                                            get_string(c, "digest")});
        }
    }
    if (auto it = j.find("qa_pairs"); it != j.end()) {
        for (const auto& q : *it) {
            s.qa_pairs.push_back(QAPair{require(q, "entity").get<std::string>(),
                                        require(q, "question").get<std::string>(),
                                        parse_answer(require(q, "expected").get<std::string>())});
        }
    }
    if (auto it = j.find("scores"); it != j.end()) s.scores = it->get<std::vector<int>>();
    if (auto it = j.find("selected"); it != j.end() && !it->is_null()) s.selected = it->get<std::size_t>();
    if (auto it = j.find("split"); it != j.end() && !it->is_null()) s.split = parse_split(it->get<std::string>());

    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!is_known(it.key())) s.extra[it.key()] = it.value();
    }
    return s;
}

Manifest parse_manifest(std::string_view text, const fs::path& base_dir) {
    Manifest m;
    std::unordered_map<std::string, std::size_t> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

        EditSample s;
        try {
            s = from_json(json::parse(line), base_dir);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
        auto [it, inserted] = seen.emplace(s.id, line_no);
        if (!inserted) {
            throw Error(ErrorCode::DuplicateId, "duplicate id '" + s.id + "' on lines " +
                                                    std::to_string(it->second) + " and " +
                                                    std::to_string(line_no));
        }
        m.records.push_back(std::move(s));
    }
    return m;
}

std::string serialize_manifest(const Manifest& manifest, const fs::path& base_dir) {
    std::string out;
    for (const auto& r : manifest.records) {
        out += to_json(r, base_dir).dump();
        out += '\n';
    }
    return out;
}

Manifest load_manifest(const fs::path& path) {
    auto abs = fs::absolute(path);
    if (!fs::exists(abs)) throw Error(ErrorCode::Io, "manifest not found: " + path.string());
    return parse_manifest(read_text_file(abs), abs.parent_path());
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
    auto abs = fs::absolute(path);
    write_file_atomic(abs, serialize_manifest(manifest, abs.parent_path()));
}

SplitCounts split_counts(std::size_t n, const SplitRatios& r) {
    if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
        throw Error(ErrorCode::InvalidArgument, "split ratios must be non-negative and sum to 1");
    }
    auto floor_of = [n](double ratio) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
    };
    SplitCounts c;
    c.val = floor_of(r.val);
    c.test = floor_of(r.test);
    c.train = n - c.val - c.test;
    return c;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        // Unbiased draw in [0, i) by rejection.
        const std::uint64_t bound = i;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t r;
        do {
            r = rng();
        } while (r >= limit);
        std::swap(idx[i - 1], idx[r % bound]);
    }
    return idx;
}

Manifest assign_splits(Manifest manifest, const SplitRatios& ratios, std::uint64_t seed) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        if (!r.rejected() && r.stage == Stage::Selected) eligible.push_back(i);
    }
    if (eligible.empty()) throw Error(ErrorCode::NoEligibleRecords, "no Selected records to split");
    auto counts = split_counts(eligible.size(), ratios);
    auto order = seeded_permutation(eligible.size(), seed);
    for (std::size_t k = 0; k < order.size(); ++k) {
        Split s = k < counts.train ? Split::Train : (k < counts.train + counts.val ? Split::Val : Split::Test);
        manifest.records[eligible[order[k]]].split = s;
    }
    return manifest;
}

} // namespace fe
