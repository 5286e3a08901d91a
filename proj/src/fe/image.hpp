#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fe {

// 8-bit interleaved raster. Images are RGB (3 channels), masks are single channel.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    Raster() = default;
    Raster(int w, int h, int c, std::uint8_t fill = 0);

    std::size_t index(int x, int y) const {
        return (static_cast<std::size_t>(y) * width + x) * channels;
    }
    std::uint8_t* at(int x, int y) { return pixels.data() + index(x, y); }
    const std::uint8_t* at(int x, int y) const { return pixels.data() + index(x, y); }

    bool operator==(const Raster&) const = default;
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// Binary mask; bits are exactly 0 or 1.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t get(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    void set(int x, int y, std::uint8_t v) { bits[static_cast<std::size_t>(y) * width + x] = v; }
    std::size_t area() const;
    double area_fraction() const;

    bool operator==(const Mask&) const = default;
};

// Any wire value >= 128 becomes 1.
Mask binarize(const Raster& gray);
Raster mask_to_raster(const Mask& mask);

std::vector<std::uint8_t> encode_png(const Raster& raster);
Raster decode_png(std::span<const std::uint8_t> bytes);
// Decodes to RGB regardless of the stored colour type.
Raster decode_png_rgb(std::span<const std::uint8_t> bytes);
Raster decode_png_gray(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

Raster load_image(const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);
// Returns the digest of the written bytes.
std::string save_png(const std::filesystem::path& path, const Raster& raster);

} // namespace fe
