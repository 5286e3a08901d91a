#include "fe/image.hpp"

#include "fe/error.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <fstream>
#include <iterator>
#include <random>

namespace fe {

namespace fs = std::filesystem;

Raster::Raster(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 1 || h < 1 || c < 1) {
        throw Error(ErrorCode::InvalidArgument, "raster dimensions must be positive");
    }
}

std::size_t Mask::area() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

double Mask::area_fraction() const {
    if (bits.empty()) return 0.0;
    return static_cast<double>(area()) / static_cast<double>(bits.size());
}

Mask binarize(const Raster& gray) {
    if (gray.channels != 1) {
        throw Error(ErrorCode::InvalidArgument, "mask raster must be single channel");
    }
    Mask m(gray.width, gray.height);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
        m.bits[i] = gray.pixels[i] >= 128 ? 1 : 0;
    }
    return m;
}

Raster mask_to_raster(const Mask& mask) {
    Raster r(mask.width, mask.height, 1);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        r.pixels[i] = mask.bits[i] ? 255 : 0;
    }
    return r;
}

namespace {

png_uint_32 format_for_channels(int channels) {
    switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default: throw Error(ErrorCode::InvalidArgument, "unsupported channel count " + std::to_string(channels));
    }
}

Raster decode_as(std::span<const std::uint8_t> bytes, png_uint_32 format, int channels) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorCode::Parse, "png decode failed: " + msg);
    }
    image.format = format;
    Raster out(static_cast<int>(image.width), static_cast<int>(image.height), channels);
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorCode::Parse, "png decode failed: " + msg);
    }
    return out;
}

} // namespace

std::vector<std::uint8_t> encode_png(const Raster& raster) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raster.width);
    image.height = static_cast<png_uint_32>(raster.height);
    image.format = format_for_channels(raster.channels);

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, raster.pixels.data(), 0, nullptr)) {
        throw Error(ErrorCode::Io, std::string("png encode failed: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, raster.pixels.data(), 0, nullptr)) {
        throw Error(ErrorCode::Io, std::string("png encode failed: ") + image.message);
    }
    out.resize(size);
    return out;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorCode::Parse, "png decode failed: " + msg);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    const bool alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
    png_image_free(&image);
    if (!color && !alpha) return decode_as(bytes, PNG_FORMAT_GRAY, 1);
    if (alpha) return decode_as(bytes, PNG_FORMAT_RGBA, 4);
    return decode_as(bytes, PNG_FORMAT_RGB, 3);
}

Raster decode_png_rgb(std::span<const std::uint8_t> bytes) { return decode_as(bytes, PNG_FORMAT_RGB, 3); }

Raster decode_png_gray(std::span<const std::uint8_t> bytes) { return decode_as(bytes, PNG_FORMAT_GRAY, 1); }

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void write_file_atomic(const fs::path& path, std::string_view text) {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    auto tmp = path;
    tmp += ".tmp" + std::to_string(rng() % 1000000007ULL);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw Error(ErrorCode::Io, "short write to " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorCode::Io, "cannot rename into " + path.string());
    }
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr)) {
        throw Error(ErrorCode::Internal, "sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                            static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw Error(ErrorCode::Protocol, "base64 length not a multiple of 4");
    std::vector<std::uint8_t> out(3 * (text.size() / 4));
    int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                            static_cast<int>(text.size()));
    if (n < 0) throw Error(ErrorCode::Protocol, "invalid base64");
    // EVP_DecodeBlock keeps the padding bytes.
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

Raster load_image(const fs::path& path) { return decode_png_rgb(read_file(path)); }

Mask load_mask(const fs::path& path) { return binarize(decode_png_gray(read_file(path))); }

std::string save_png(const fs::path& path, const Raster& raster) {
    auto bytes = encode_png(raster);
    write_file_atomic(path, bytes);
    return sha256_hex(bytes);
}

} // namespace fe
