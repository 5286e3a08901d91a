#include "fe/testset.hpp"

#include "fe/grounding.hpp"
#include "fe/manifest.hpp"
#include "fe/stage.hpp"
#include "fe/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

namespace fe {

namespace {

std::string format_embedding_line(const std::string& digest, const Embedding& v) {
    std::string line = digest + "," + std::to_string(v.size());
    char buf[64];
    for (double x : v) {
        std::snprintf(buf, sizeof buf, ",%.12f", x);
        line += buf;
    }
    return line;
}

Embedding unit(Embedding v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw Error(ErrorCode::InvalidArgument, "zero or non-finite embedding");
    if (std::abs(norm - 1.0) > 1e-9) {
        for (double& x : v) x /= norm;
    }
    return v;
}

} // namespace

EmbeddingCache EmbeddingCache::parse(std::string_view text) {
    EmbeddingCache cache;
    std::size_t line_no = 0;
    for (const auto& raw : text::split_lines(text)) {
        ++line_no;
        auto line = text::trim(raw);
        if (line.empty()) continue;
        auto fields = text::split(line, ',');
        auto bad = [&](const std::string& why) {
            return Error(ErrorCode::Parse, "embedding cache line " + std::to_string(line_no) + ": " + why);
        };
        if (fields.size() < 2) throw bad("expected digest,dim,values");
        auto digest = text::trim(fields[0]);
        char* end = nullptr;
        auto dim_text = text::trim(fields[1]);
        unsigned long dim = std::strtoul(dim_text.c_str(), &end, 10);
        if (dim_text.empty() || *end != '\0' || dim == 0) throw bad("bad dimension '" + dim_text + "'");
        if (fields.size() != dim + 2) throw bad("dimension " + std::to_string(dim) + " but " +
                                                std::to_string(fields.size() - 2) + " values");
        Embedding v(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            auto f = text::trim(fields[i + 2]);
            v[i] = std::strtod(f.c_str(), &end);
            if (f.empty() || *end != '\0' || !std::isfinite(v[i])) throw bad("bad value '" + f + "'");
        }
        cache.vectors_[digest] = std::move(v);
    }
    return cache;
}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    return parse(read_text_file(path));
}

std::string EmbeddingCache::serialize() const {
    std::string out;
    for (const auto& [digest, v] : vectors_) {
        out += format_embedding_line(digest, v);
        out += '\n';
    }
    return out;
}

void EmbeddingCache::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

const Embedding* EmbeddingCache::find(const std::string& digest) const {
    auto it = vectors_.find(digest);
    return it == vectors_.end() ? nullptr : &it->second;
}

const Embedding& EmbeddingCache::put(const std::string& digest, const Embedding& v) {
    auto parsed = parse(format_embedding_line(digest, v));
    return vectors_[digest] = *parsed.find(digest);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::InvalidArgument, "embedding dimensions differ: " + std::to_string(a.size()) + " vs " +
                                                    std::to_string(b.size()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
}

double max_similarity(std::span<const double> v, std::span<const Embedding> training) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& t : training) best = std::max(best, cosine(v, t));
    return best;
}

std::vector<Embedding> embed_inputs(std::span<const EditSample> records, Gateway& gateway, EmbeddingCache& cache,
                                    std::vector<std::string>* warnings) {
    std::vector<std::optional<Embedding>> slots(records.size());
    std::vector<std::string> errors(records.size());
    std::vector<EditSample> copies(records.begin(), records.end());
    std::mutex mu;
    parallel_for(copies.size(), gateway.config().max_parallel, [&](std::size_t i) {
        auto& r = copies[i];
        try {
            if (!r.input.digest.empty()) {
                std::lock_guard lock(mu);
                if (auto* hit = cache.find(r.input.digest)) {
                    slots[i] = *hit;
                    return;
                }
            }
            auto image = load_input(r);
            {
                std::lock_guard lock(mu);
                if (auto* hit = cache.find(r.input.digest)) {
                    slots[i] = *hit;
                    return;
                }
            }
            auto v = gateway.embed(image);
            std::lock_guard lock(mu);
            slots[i] = cache.put(r.input.digest, v);
        } catch (const std::exception& e) {
            errors[i] = "embedding failed for '" + r.id + "': " + e.what();
        }
    });
    std::vector<Embedding> out;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            out.push_back(std::move(*slots[i]));
        } else if (warnings) {
            warnings->push_back(errors[i]);
        }
    }
    return out;
}

DedupResult dedup_filter(std::span<const EditSample> candidates, std::span<const Embedding> training_embeddings,
                         Gateway& gateway, double threshold, EmbeddingCache* cache) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "similarity threshold must be in (0, 1]");
    }
    if (training_embeddings.empty()) throw Error(ErrorCode::InvalidArgument, "training embeddings are empty");
    std::vector<Embedding> training;
    training.reserve(training_embeddings.size());
    for (const auto& t : training_embeddings) training.push_back(unit(t));

    DedupResult result;
    EmbeddingCache local;
    EmbeddingCache& c = cache ? *cache : local;
    for (const auto& cand : candidates) {
        std::vector<std::string> warnings;
        auto v = embed_inputs(std::span(&cand, 1), gateway, c, &warnings);
        if (v.empty()) {
            for (auto& w : warnings) result.warnings.push_back(std::move(w));
            continue;
        }
        if (max_similarity(v.front(), training) < threshold) result.kept.push_back(cand);
    }
    return result;
}

SampleResult stratified_sample(std::span<const EditSample> pool, std::span<const std::string> verbs,
                               std::size_t per_verb, std::uint64_t seed) {
    if (pool.empty()) throw Error(ErrorCode::InvalidArgument, "stratified_sample: empty pool");
    if (per_verb < 1) throw Error(ErrorCode::InvalidArgument, "stratified_sample: per_verb must be at least 1");
    if (verbs.empty()) throw Error(ErrorCode::InvalidArgument, "stratified_sample: no verbs");

    SampleResult result;
    std::set<std::string> taken;
    for (std::size_t b = 0; b < verbs.size(); ++b) {
        VerbBucket bucket;
        bucket.verb = verbs[b];
        bucket.quota = per_verb;
        auto want = text::normalize(verbs[b]);
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (text::leading_verb(pool[i].instruction) == want && !taken.contains(pool[i].id)) members.push_back(i);
        }
        if (members.size() < per_verb) {
            result.warnings.push_back("verb '" + bucket.verb + "': " + std::to_string(members.size()) +
                                      " items, quota " + std::to_string(per_verb));
        }
        auto perm = seeded_permutation(members.size(), seed + b);
        std::vector<std::size_t> chosen;
        for (std::size_t j = 0; j < std::min(per_verb, members.size()); ++j) chosen.push_back(members[perm[j]]);
        std::sort(chosen.begin(), chosen.end());
        for (auto i : chosen) {
            taken.insert(pool[i].id);
            bucket.samples.push_back(pool[i].id);
            result.samples.push_back(pool[i]);
        }
        result.buckets.push_back(std::move(bucket));
    }
    return result;
}

bool is_change_action(std::string_view instruction, std::span<const std::string> blocklist) {
    auto norm = text::normalize(instruction);
    for (const auto& phrase : blocklist) {
        auto p = text::normalize(phrase);
        if (!p.empty() && (norm == p || norm.starts_with(p + " "))) return true;
    }
    static const std::set<std::string> articles = {"the", "a", "an", "this", "that", "his", "her", "their"};
    static const std::set<std::string> beings = {
        "person", "man",   "woman", "boy",   "girl",  "child", "kid",   "people", "men",   "women", "baby",
        "player", "guy",   "lady",  "dog",   "cat",   "horse", "bird",  "cow",    "sheep", "bear",  "elephant",
        "giraffe", "zebra", "puppy", "kitten", "animal", "animals", "dogs", "cats", "birds", "monkey"};
    static const std::set<std::string> actions = {
        "jump", "run",   "walk",  "look",  "sit",   "stand", "smile", "dance", "fly",   "swim",  "eat",
        "sleep", "laugh", "cry",   "wave",  "turn",  "lie",   "kneel", "bark",  "climb", "hold",  "raise",
        "open", "close", "point", "play",  "ride",  "kick",  "throw", "frown", "wink",  "face",  "move"};
    auto w = text::words(norm);
    if (w.size() < 3 || w[0] != "make") return false;
    std::size_t i = 1;
    if (articles.contains(w[i])) ++i;
    if (i + 1 >= w.size() || !beings.contains(w[i])) return false;
    return actions.contains(w[i + 1]);
}

std::vector<EditSample> magicbrush_filter(std::span<const EditSample> records, std::span<const std::string> blocklist) {
    std::vector<EditSample> kept;
    for (const auto& r : records) {
        if (r.extra.contains("turns")) {
            const auto& t = r.extra["turns"];
            if (!t.is_number_integer() || t.get<long long>() != 1) continue;
        }
        if (is_change_action(r.instruction, blocklist)) continue;
        kept.push_back(r);
    }
    return kept;
}

} // namespace fe
