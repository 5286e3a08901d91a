#pragma once

#include "fe/gateway.hpp"
#include "fe/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fe {

using Embedding = std::vector<double>;

// digest -> unit vector, persisted one record per line as "digest,dim,v1,...,vd".
class EmbeddingCache {
public:
    static EmbeddingCache load(const std::filesystem::path& path);
    static EmbeddingCache parse(std::string_view text);
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

    const Embedding* find(const std::string& digest) const;
    // Stores the vector as it reads back from the text format.
    const Embedding& put(const std::string& digest, const Embedding& v);
    std::size_t size() const { return vectors_.size(); }

private:
    std::map<std::string, Embedding> vectors_;
};

double cosine(std::span<const double> a, std::span<const double> b);
double max_similarity(std::span<const double> v, std::span<const Embedding> training);

// Embeds every record's input image, reusing and filling `cache`.
std::vector<Embedding> embed_inputs(std::span<const EditSample> records, Gateway& gateway, EmbeddingCache& cache,
                                    std::vector<std::string>* warnings = nullptr);

struct DedupResult {
    std::vector<EditSample> kept;
    std::vector<std::string> warnings;
};

// Keeps a candidate iff its max cosine similarity to the training set is
// strictly below threshold. Candidates that fail to embed are dropped.
DedupResult dedup_filter(std::span<const EditSample> candidates, std::span<const Embedding> training_embeddings,
                         Gateway& gateway, double threshold, EmbeddingCache* cache = nullptr);

inline const std::vector<std::string> default_verbs = {"Replace", "Swap", "Add", "Turn", "Change"};
inline constexpr std::size_t default_per_verb = 20;

struct VerbBucket {
    std::string verb;
    std::vector<std::string> samples;
    std::size_t quota = 0;
};

struct SampleResult {
    std::vector<EditSample> samples;
    std::vector<VerbBucket> buckets;
    std::vector<std::string> warnings;
};

// Seeded per-verb sample. Buckets smaller than per_verb are taken whole.
SampleResult stratified_sample(std::span<const EditSample> pool, std::span<const std::string> verbs,
                               std::size_t per_verb, std::uint64_t seed);

inline const std::vector<std::string> default_change_action_blocklist = {"make the person jump",
                                                                         "make the dog look away"};

// Multi-turn records (extra "turns" != 1) and change-action instructions are
// dropped. Records without "turns" are treated as single-turn.
std::vector<EditSample> magicbrush_filter(std::span<const EditSample> records,
                                          std::span<const std::string> blocklist = default_change_action_blocklist);

// make [article] <person/animal noun> <action verb> ...
bool is_change_action(std::string_view instruction, std::span<const std::string> blocklist);

} // namespace fe
