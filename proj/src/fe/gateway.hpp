#pragma once

#include "fe/image.hpp"
#include "fe/model.hpp"

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fe {

enum class Capability { Chat, Detect, Segment, Inpaint, Vqa, Embed };
inline constexpr std::array all_capabilities = {Capability::Chat,    Capability::Detect, Capability::Segment,
                                                Capability::Inpaint, Capability::Vqa,    Capability::Embed};

std::string_view to_string(Capability c);
// "/v1/<capability>"
std::string endpoint_path(Capability c);
std::optional<Capability> capability_from_path(std::string_view path);

struct HttpResponse {
    int status = 0;
    std::string body;
};

// Connection-level failure (no HTTP status available).
class TransportError : public Error {
public:
    explicit TransportError(const std::string& what) : Error(ErrorCode::Backend, what) {}
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(Capability cap, const std::string& body) = 0;
};

struct BackendConfig {
    std::map<Capability, std::string> base_url;
    std::string api_key;
    double timeout_s = 120.0;
    int max_retries = 2;
    double backoff_s = 0.5;
    int max_parallel = 4;
    std::string cache_dir;

    // Reads FE_API_KEY, FE_CACHE_DIR and FE_<CAP>_URL.
    static BackendConfig from_env();
    void validate() const;
};

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct Guidance {
    double text = 7.5;
    double image = 1.5;
};

// PNG bytes as they go on the wire, plus the dimensions they decode to.
struct WireImage {
    std::vector<std::uint8_t> png;
    int width = 0;
    int height = 0;

    static WireImage from_raster(const Raster& raster);
    // File bytes are forwarded untouched.
    static WireImage from_file(const std::filesystem::path& path);
};

// sha256 over the canonical (sorted keys, compact) serialization of
// {"capability": ..., "request": ...}.
std::string cache_key(std::string_view capability, const json& request_body);

struct CacheEntry {
    std::string key;
    std::string body;
    std::int64_t created_at = 0;
};

// In-memory map backed by an optional directory of one file per key.
class ResponseCache {
public:
    explicit ResponseCache(std::string dir = {});

    std::optional<std::string> get(const std::string& key);
    void put(const std::string& key, const std::string& body);
    std::size_t size() const;

private:
    std::filesystem::path file_for(const std::string& key) const;

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::string> memory_;
};

class Semaphore {
public:
    explicit Semaphore(int count) : count_(count) {}
    void acquire();
    void release();

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int count_;
};

struct GatewayStats {
    std::size_t attempts = 0;
    std::size_t backend_successes = 0;
    std::size_t cache_hits = 0;
    std::vector<double> backoff_delays;
};

class Gateway {
public:
    using Sleeper = std::function<void(double seconds)>;

    Gateway(BackendConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper = {});

    std::string chat(std::span<const ChatMessage> messages, double temperature, int max_tokens,
                     std::string_view cache_salt = {});
    // Boxes at or above threshold, clamped to the image, by descending confidence.
    std::vector<BBox> detect(const WireImage& image, std::string_view query, double box_threshold);
    Mask segment(const WireImage& image, const BBox& box);
    Raster inpaint(const WireImage& image, const Mask& mask, std::string_view caption, std::uint64_t seed,
                   const Guidance& guidance);
    std::string vqa(const WireImage& image, std::string_view question);
    std::vector<double> embed(const WireImage& image);

    GatewayStats stats() const;
    const BackendConfig& config() const { return config_; }

private:
    template <class Parse>
    auto call(Capability cap, const json& body, Parse&& parse) -> decltype(parse(std::string{}));
    std::string fetch(Capability cap, const std::string& body);

    BackendConfig config_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
    ResponseCache cache_;
    Semaphore slots_;

    std::mutex inflight_mu_;
    std::unordered_map<std::string, std::shared_future<std::string>> inflight_;

    mutable std::mutex stats_mu_;
    GatewayStats stats_;
};

} // namespace fe
