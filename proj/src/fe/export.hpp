#pragma once

#include "fe/image.hpp"
#include "fe/manifest.hpp"
#include "fe/model.hpp"
#include "fe/stage.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fe {

struct ExportOptions {
    SplitRatios ratios;
    std::uint64_t seed = 0;
    int stroke_px = 4;
    Rgb color{255, 0, 0};
};

// Writes {out_dir}/{split}/{id}.cond.png and {id}.target.png for every
// record with a split, plus {out_dir}/index.jsonl. Mode None copies the input
// file byte for byte.
std::vector<TrainingRecord> export_training_records(const Manifest& manifest, SupervisionMode mode,
                                                    const std::filesystem::path& out_dir,
                                                    const ExportOptions& opts = {});

// Selected -> Exported: assign_splits, then export_training_records.
Manifest run_export_stage(const Manifest& in, SupervisionMode mode, const std::filesystem::path& out_dir,
                          const ExportOptions& opts = {}, StageReport* report = nullptr,
                          std::vector<TrainingRecord>* records = nullptr);

// Noise seed for a record's mask supervision image.
std::uint64_t noise_seed_for(std::string_view id, std::uint64_t seed);

} // namespace fe
