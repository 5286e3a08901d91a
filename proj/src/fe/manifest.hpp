#pragma once

#include "fe/model.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

namespace fe {

// Record <-> JSON. Paths are written relative to `base_dir` and resolved
// against it on read, so a manifest directory can be moved as a unit.
json to_json(const EditSample& sample, const std::filesystem::path& base_dir);
EditSample from_json(const json& j, const std::filesystem::path& base_dir);

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
std::string serialize_manifest(const Manifest& manifest, const std::filesystem::path& base_dir);

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct SplitCounts {
    std::size_t train = 0, val = 0, test = 0;
};

// Floor allocation per ratio, remainder to Train.
SplitCounts split_counts(std::size_t n, const SplitRatios& ratios);

// Assigns a split to every non-rejected Selected record.
Manifest assign_splits(Manifest manifest, const SplitRatios& ratios, std::uint64_t seed);

// Deterministic Fisher-Yates permutation of [0, n) independent of the
// standard library's distribution implementations.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

} // namespace fe
