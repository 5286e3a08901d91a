#pragma once

#include "fe/gateway.hpp"
#include "fe/image.hpp"
#include "fe/model.hpp"
#include "fe/stage.hpp"

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <utility>

namespace fe {

struct GroundingResult {
    std::string entity;
    BBox box;
    Mask mask;
    double mask_area_fraction = 0.0;
};

struct AreaBounds {
    double min = 0.001;
    double max = 0.95;
};

inline constexpr double default_box_threshold = 0.35;

// Top-1 detection above threshold, segmented with that box. Throws
// RecordError with reason "no_grounding" or "degenerate_mask".
GroundingResult ground_entity(const WireImage& image, std::string_view entity, Gateway& gateway,
                              double box_threshold = default_box_threshold, const AreaBounds& bounds = {});

// Pixels whose distance to the box edge is below stroke_px, i.e. the band
// [x0, x1) x [y0, y1) minus [x0+s, x1-s) x [y0+s, y1-s).
bool in_border_band(const BBox& box, int stroke_px, int x, int y);

Raster draw_bbox(const Raster& image, const BBox& box, int stroke_px = 4, Rgb color = {255, 0, 0});

enum class NoiseDistribution { UniformPerChannel };

struct NoiseParams {
    std::uint64_t seed = 0;
    NoiseDistribution distribution = NoiseDistribution::UniformPerChannel;
};

// Masked pixels get seeded uniform noise in [0, 255] per channel; a draw that
// happens to reproduce the original pixel is nudged so every masked pixel
// changes. Unmasked pixels are untouched.
Raster apply_mask_noise(const Raster& image, const Mask& mask, const NoiseParams& noise);

// Square structuring element of side 2r+1.
Mask dilate(const Mask& mask, int radius);

// Image and mask as handed to the inpainter. Radius 0 passes the mask through.
std::pair<Raster, Mask> make_inpaint_input(const Raster& image, const Mask& mask, int dilation_radius = 0);

struct GroundOptions {
    double box_threshold = default_box_threshold;
    AreaBounds area_bounds;
};

// Verdicted -> Grounded. Masks are written to `mask_dir` as {id}.mask.png.
Manifest run_ground_stage(const Manifest& in, Gateway& gateway, const std::filesystem::path& mask_dir,
                          const GroundOptions& opts = {}, StageReport* report = nullptr);

// Reads the record's input file and checks (or fills) its digest. Throws
// RecordError with reason "input".
WireImage load_input(EditSample& sample);

} // namespace fe
