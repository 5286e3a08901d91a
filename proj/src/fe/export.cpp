#include "fe/export.hpp"

#include "fe/grounding.hpp"

namespace fe {

namespace fs = std::filesystem;

std::uint64_t noise_seed_for(std::string_view id, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : id) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h ^ seed;
}

std::vector<TrainingRecord> export_training_records(const Manifest& manifest, SupervisionMode mode,
                                                    const fs::path& out_dir, const ExportOptions& opts) {
    std::vector<TrainingRecord> records;
    std::string index;
    for (const auto& r : manifest.records) {
        if (r.rejected() || !r.split) continue;
        if (r.stage < Stage::Selected || !r.selected || *r.selected >= r.candidates.size()) {
            throw Error(ErrorCode::StageMismatch, "record '" + r.id + "' has no selected candidate");
        }
        if (mode != SupervisionMode::None && (!r.bbox || !r.mask_path)) {
            throw Error(ErrorCode::InvalidArgument, "record '" + r.id + "' has no grounding for " +
                                                        std::string(to_string(mode)) + " supervision");
        }
        const auto split_dir = out_dir / std::string(to_string(*r.split));
        const auto cond_path = split_dir / (r.id + ".cond.png");
        const auto target_path = split_dir / (r.id + ".target.png");

        auto input_bytes = read_file(r.input.path);
        if (!r.input.digest.empty() && sha256_hex(input_bytes) != r.input.digest) {
            throw Error(ErrorCode::Io, "digest mismatch for " + r.input.path.string());
        }
        TrainingRecord t;
        t.instruction = r.instruction;
        t.supervision_mode = mode;
        t.split = *r.split;

        Raster input;
        if (mode == SupervisionMode::None) {
            write_file_atomic(cond_path, input_bytes);
            t.conditioning_image = ImageRef{cond_path, sha256_hex(input_bytes)};
            input = decode_png_rgb(input_bytes);
        } else {
            input = decode_png_rgb(input_bytes);
            Raster cond = mode == SupervisionMode::BBox
                              ? draw_bbox(input, *r.bbox, opts.stroke_px, opts.color)
                              : apply_mask_noise(input, load_mask(*r.mask_path),
                                                 NoiseParams{noise_seed_for(r.id, opts.seed)});
            t.conditioning_image = ImageRef{cond_path, save_png(cond_path, cond)};
        }
        t.conditioning_image.width = input.width;
        t.conditioning_image.height = input.height;

        const auto& chosen = r.candidates[*r.selected];
        auto target_bytes = read_file(chosen.path);
        auto target = decode_png(target_bytes);
        if (target.width != input.width || target.height != input.height) {
            throw Error(ErrorCode::InvalidArgument, "record '" + r.id + "': target and conditioning sizes differ");
        }
        write_file_atomic(target_path, target_bytes);
        t.target_image = ImageRef{target_path, sha256_hex(target_bytes), target.width, target.height};

        json line = {{"conditioning_path", cond_path.lexically_relative(out_dir).generic_string()},
                     {"instruction", t.instruction},
                     {"target_path", target_path.lexically_relative(out_dir).generic_string()},
                     {"supervision_mode", to_string(mode)},
                     {"split", to_string(t.split)}};
        index += line.dump();
        index += '\n';
        records.push_back(std::move(t));
    }
    write_file_atomic(out_dir / "index.jsonl", index);
    return records;
}

Manifest run_export_stage(const Manifest& in, SupervisionMode mode, const fs::path& out_dir,
                          const ExportOptions& opts, StageReport* report, std::vector<TrainingRecord>* records) {
    require_stage(in, Stage::Selected, "export");
    Manifest out = assign_splits(in, opts.ratios, opts.seed);
    auto exported = export_training_records(out, mode, fs::absolute(out_dir).lexically_normal(), opts);
    for (auto& r : out.records) {
        if (!r.rejected() && r.split) Manifest::advance(r, Stage::Exported);
    }
    if (report) {
        *report = summarize(in, out, "export");
        json splits = {{"train", 0}, {"val", 0}, {"test", 0}};
        for (const auto& t : exported) {
            auto& n = splits[std::string(to_string(t.split))];
            n = n.get<int>() + 1;
        }
        report->details["splits"] = std::move(splits);
        report->details["supervision_mode"] = to_string(mode);
    }
    if (records) *records = std::move(exported);
    return out;
}

} // namespace fe
