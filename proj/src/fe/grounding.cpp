#include "fe/grounding.hpp"

#include <algorithm>

namespace fe {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void require_same_size(const Raster& image, const Mask& mask) {
    if (image.width != mask.width || image.height != mask.height) {
        throw Error(ErrorCode::InvalidArgument,
                    "mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                        " does not match image " + std::to_string(image.width) + "x" + std::to_string(image.height));
    }
}

} // namespace

GroundingResult ground_entity(const WireImage& image, std::string_view entity, Gateway& gateway,
                              double box_threshold, const AreaBounds& bounds) {
    if (entity.empty()) throw Error(ErrorCode::InvalidArgument, "entity must be non-empty");
    auto boxes = gateway.detect(image, entity, box_threshold);
    if (boxes.empty()) {
        throw RecordError("no_grounding", "no detection for '" + std::string(entity) + "' at threshold " +
                                              std::to_string(box_threshold));
    }
    const BBox box = boxes.front();

    GroundingResult g;
    g.entity = entity;
    g.box = box;
    g.mask = gateway.segment(image, box);
    g.mask_area_fraction = g.mask.area_fraction();
    if (g.mask_area_fraction < bounds.min || g.mask_area_fraction > bounds.max) {
        throw RecordError("degenerate_mask", "mask area fraction " + std::to_string(g.mask_area_fraction) +
                                                 " outside [" + std::to_string(bounds.min) + ", " +
                                                 std::to_string(bounds.max) + "]");
    }
    std::size_t inside = 0;
    for (int y = box.y0; y < box.y1; ++y) {
        for (int x = box.x0; x < box.x1; ++x) inside += g.mask.get(x, y);
    }
    if (2 * inside < g.mask.area()) {
        throw RecordError("degenerate_mask", "box encloses less than half of the mask");
    }
    return g;
}

bool in_border_band(const BBox& box, int stroke_px, int x, int y) {
    if (!box.contains(x, y)) return false;
    int d = std::min({x - box.x0, box.x1 - 1 - x, y - box.y0, box.y1 - 1 - y});
    return d < stroke_px;
}

Raster draw_bbox(const Raster& image, const BBox& box, int stroke_px, Rgb color) {
    if (stroke_px < 1) throw Error(ErrorCode::InvalidArgument, "stroke must be at least 1 px");
    if (!box.valid_for(image.width, image.height)) throw Error(ErrorCode::InvalidArgument, "box outside image");
    if (image.channels < 3) throw Error(ErrorCode::InvalidArgument, "draw_bbox needs an RGB image");
    Raster out = image;
    for (int y = box.y0; y < box.y1; ++y) {
        for (int x = box.x0; x < box.x1; ++x) {
            if (!in_border_band(box, stroke_px, x, y)) continue;
            auto* p = out.at(x, y);
            p[0] = color.r;
            p[1] = color.g;
            p[2] = color.b;
        }
    }
    return out;
}

Raster apply_mask_noise(const Raster& image, const Mask& mask, const NoiseParams& noise) {
    require_same_size(image, mask);
    Raster out = image;
    const auto channels = static_cast<std::size_t>(image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            if (!mask.get(x, y)) continue;
            const auto px = static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(image.width) +
                            static_cast<std::uint64_t>(x);
            const auto bits = splitmix64(noise.seed ^ splitmix64(px));
            auto* p = out.at(x, y);
            const auto* orig = image.at(x, y);
            bool same = true;
            for (std::size_t c = 0; c < channels; ++c) {
                p[c] = static_cast<std::uint8_t>(bits >> (8 * (c % 8)));
                same = same && p[c] == orig[c];
            }
            if (same) p[0] ^= 0x80;
        }
    }
    return out;
}

Mask dilate(const Mask& mask, int radius) {
    if (radius < 0) throw Error(ErrorCode::InvalidArgument, "dilation radius must be >= 0");
    if (radius == 0) return mask;
    Mask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.get(x, y)) continue;
            for (int yy = std::max(0, y - radius); yy <= std::min(mask.height - 1, y + radius); ++yy) {
                for (int xx = std::max(0, x - radius); xx <= std::min(mask.width - 1, x + radius); ++xx) {
                    out.set(xx, yy, 1);
                }
            }
        }
    }
    return out;
}

std::pair<Raster, Mask> make_inpaint_input(const Raster& image, const Mask& mask, int dilation_radius) {
    require_same_size(image, mask);
    return {image, dilate(mask, dilation_radius)};
}

WireImage load_input(EditSample& sample) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file(sample.input.path);
    } catch (const Error& e) {
        throw RecordError("input", e.what());
    }
    auto digest = sha256_hex(bytes);
    if (sample.input.digest.empty()) {
        sample.input.digest = digest;
    } else if (sample.input.digest != digest) {
        throw RecordError("input", "digest mismatch for " + sample.input.path.string());
    }
    WireImage w;
    try {
        auto r = decode_png(bytes);
        w.width = r.width;
        w.height = r.height;
    } catch (const Error& e) {
        throw RecordError("input", e.what());
    }
    w.png = std::move(bytes);
    sample.input.width = w.width;
    sample.input.height = w.height;
    return w;
}

Manifest run_ground_stage(const Manifest& in, Gateway& gateway, const std::filesystem::path& mask_dir,
                          const GroundOptions& opts, StageReport* report) {
    require_stage(in, Stage::Verdicted, "ground");
    Manifest out = in;
    parallel_for(out.records.size(), gateway.config().max_parallel, [&](std::size_t i) {
        auto& r = out.records[i];
        if (r.rejected()) return;
        try {
            if (!r.verdict || !r.verdict->entity) throw RecordError("no_grounding", "record has no edit entity");
            auto image = load_input(r);
            auto g = ground_entity(image, *r.verdict->entity, gateway, opts.box_threshold, opts.area_bounds);
            auto path = mask_dir / (r.id + ".mask.png");
            save_png(path, mask_to_raster(g.mask));
            r.bbox = g.box;
            r.mask_path = path;
            r.mask_area_fraction = g.mask_area_fraction;
            Manifest::advance(r, Stage::Grounded);
        } catch (const RecordError& e) {
            reject(r, Stage::Grounded, e.reason(), e.what());
        } catch (const Error& e) {
            reject(r, Stage::Grounded, "backend", e.what());
        }
    });
    if (report) *report = summarize(in, out, "ground");
    return out;
}

} // namespace fe
