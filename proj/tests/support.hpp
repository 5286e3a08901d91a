#pragma once

#include "fe/gateway.hpp"
#include "fe/image.hpp"
#include "fe/manifest.hpp"
#include "fe/mock_backend.hpp"

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace fe::testing {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "fe_test_XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const fs::path& p) const { return path_ / p; }

private:
    fs::path path_;
};

// Smooth scene with no pure red pixels and a constant blue channel of 90, so
// it never contains a scripted inpainter seed colour for seeds 0..4.
inline Raster scene(int w, int h, int variant) {
    Raster r(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            auto* p = r.at(x, y);
            p[0] = static_cast<std::uint8_t>(40 + (x + variant * 7) % 48);
            p[1] = static_cast<std::uint8_t>(60 + (y + variant * 11) % 48);
            p[2] = 90;
        }
    }
    return r;
}

inline Raster random_image(std::mt19937_64& rng, int w, int h) {
    Raster r(w, h, 3);
    for (auto& v : r.pixels) v = static_cast<std::uint8_t>(rng() & 0xFF);
    return r;
}

inline Mask random_mask(std::mt19937_64& rng, int w, int h, double density) {
    Mask m(w, h);
    std::bernoulli_distribution d(density);
    for (auto& b : m.bits) b = d(rng) ? 1 : 0;
    return m;
}

inline std::shared_ptr<ScriptedBackend> scripted(json script) {
    return std::make_shared<ScriptedBackend>(std::move(script));
}

inline BackendConfig fast_config(int max_parallel = 4) {
    BackendConfig c;
    c.max_parallel = max_parallel;
    c.backoff_s = 0.0;
    return c;
}

// Gateway that never sleeps between retries and records the requested delays.
inline std::unique_ptr<Gateway> make_gateway(std::shared_ptr<Transport> t, BackendConfig c = fast_config()) {
    return std::make_unique<Gateway>(std::move(c), std::move(t), [](double) {});
}

inline EditSample sample(std::string id, std::string caption, std::string instruction, std::string edited_caption) {
    EditSample s;
    s.id = std::move(id);
    s.caption = std::move(caption);
    s.instruction = std::move(instruction);
    s.edited_caption = std::move(edited_caption);
    return s;
}

inline std::string source_dir() { return FE_SOURCE_DIR; }

inline fs::path fixture_dir(const std::string& name) { return fs::path(FE_SOURCE_DIR) / "tests" / "fixtures" / name; }

// Copies a checked-in fixture into `dest` and renders its input images.
inline void stage_e2e_fixture(const fs::path& dest) {
    fs::create_directories(dest);
    fs::copy(fixture_dir("e2e"), dest, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    for (int i = 1; i <= 5; ++i) {
        save_png(dest / "inputs" / ("r" + std::to_string(i) + ".png"), scene(48, 48, i));
    }
}

// Relative path -> bytes for every regular file under root.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    if (!fs::exists(root)) return out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        out[fs::relative(e.path(), root).generic_string()] = read_text_file(e.path());
    }
    return out;
}

} // namespace fe::testing
