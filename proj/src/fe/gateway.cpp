#include "fe/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace fe {

namespace fs = std::filesystem;

std::string_view to_string(Capability c) {
    switch (c) {
    case Capability::Chat: return "chat";
    case Capability::Detect: return "detect";
    case Capability::Segment: return "segment";
    case Capability::Inpaint: return "inpaint";
    case Capability::Vqa: return "vqa";
    case Capability::Embed: return "embed";
    }
    return "chat";
}

std::string endpoint_path(Capability c) { return "/v1/" + std::string(to_string(c)); }

std::optional<Capability> capability_from_path(std::string_view path) {
    for (auto c : all_capabilities) {
        if (path == endpoint_path(c)) return c;
    }
    return std::nullopt;
}

BackendConfig BackendConfig::from_env() {
    BackendConfig cfg;
    if (const char* key = std::getenv("FE_API_KEY")) cfg.api_key = key;
    if (const char* dir = std::getenv("FE_CACHE_DIR")) cfg.cache_dir = dir;
    for (auto c : all_capabilities) {
        std::string var = "FE_";
        for (char ch : to_string(c)) var.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
        var += "_URL";
        if (const char* url = std::getenv(var.c_str())) cfg.base_url[c] = url;
    }
    return cfg;
}

void BackendConfig::validate() const {
    if (max_parallel < 1) throw Error(ErrorCode::InvalidArgument, "max_parallel must be >= 1");
    if (max_retries < 0) throw Error(ErrorCode::InvalidArgument, "max_retries must be >= 0");
    if (timeout_s <= 0) throw Error(ErrorCode::InvalidArgument, "timeout must be positive");
    if (backoff_s < 0) throw Error(ErrorCode::InvalidArgument, "backoff must be >= 0");
}

WireImage WireImage::from_raster(const Raster& raster) {
    return WireImage{encode_png(raster), raster.width, raster.height};
}

WireImage WireImage::from_file(const fs::path& path) {
    WireImage w;
    w.png = read_file(path);
    auto r = decode_png(w.png);
    w.width = r.width;
    w.height = r.height;
    return w;
}

std::string cache_key(std::string_view capability, const json& request_body) {
    // nlohmann::json keeps object keys in a std::map, so dump() is already sorted and compact.
    json envelope = {{"capability", capability}, {"request", request_body}};
    return sha256_hex(envelope.dump());
}

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) fs::create_directories(dir_);
}

fs::path ResponseCache::file_for(const std::string& key) const { return dir_ / key.substr(0, 2) / (key + ".json"); }

std::optional<std::string> ResponseCache::get(const std::string& key) {
    {
        std::lock_guard lock(mu_);
        if (auto it = memory_.find(key); it != memory_.end()) return it->second;
    }
    if (dir_.empty()) return std::nullopt;
    auto path = file_for(key);
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    try {
        auto entry = json::parse(read_text_file(path));
        if (entry.value("key", "") != key) return std::nullopt;
        auto body = entry.at("body").get<std::string>();
        std::lock_guard lock(mu_);
        memory_.emplace(key, body);
        return body;
    } catch (const std::exception&) {
        // Torn or foreign file: treat as a miss and let put() overwrite it.
        return std::nullopt;
    }
}

void ResponseCache::put(const std::string& key, const std::string& body) {
    {
        std::lock_guard lock(mu_);
        memory_[key] = body;
    }
    if (dir_.empty()) return;
    auto now = std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
    json entry = {{"key", key}, {"created_at", now}, {"body", body}};
    write_file_atomic(file_for(key), entry.dump());
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mu_);
    return memory_.size();
}

void Semaphore::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return count_ > 0; });
    --count_;
}

void Semaphore::release() {
    {
        std::lock_guard lock(mu_);
        ++count_;
    }
    cv_.notify_one();
}

namespace {

std::string encode(const WireImage& img) { return base64_encode(img.png); }

json parse_body(Capability cap, const std::string& raw) {
    try {
        auto j = json::parse(raw);
        if (!j.is_object()) throw Error(ErrorCode::Protocol, "response is not an object");
        return j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Protocol, std::string(to_string(cap)) + ": malformed response: " + e.what());
    }
}

const json& field(Capability cap, const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw Error(ErrorCode::Protocol, std::string(to_string(cap)) + ": response missing '" + key + "'");
    }
    return *it;
}

bool retryable(int status) { return status == 429 || status >= 500; }

std::string size_str(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }

} // namespace

Gateway::Gateway(BackendConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      cache_(config_.cache_dir),
      slots_(std::max(1, config_.max_parallel)) {
    config_.validate();
    if (!transport_) throw Error(ErrorCode::InvalidArgument, "gateway needs a transport");
    if (!sleeper_) {
        sleeper_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
    }
}

std::string Gateway::fetch(Capability cap, const std::string& body) {
    struct SlotGuard {
        Semaphore& s;
        explicit SlotGuard(Semaphore& sem) : s(sem) { s.acquire(); }
        ~SlotGuard() { s.release(); }
    };

    double delay = config_.backoff_s;
    for (int attempt = 0;; ++attempt) {
        std::string failure;
        bool can_retry = false;
        {
            std::lock_guard lock(stats_mu_);
            ++stats_.attempts;
        }
        std::optional<HttpResponse> resp;
        try {
            SlotGuard slot(slots_);
            resp = transport_->post(cap, body);
        } catch (const TransportError& e) {
            failure = std::string(to_string(cap)) + ": " + e.what();
            can_retry = true;
        }
        if (resp) {
            if (resp->status >= 200 && resp->status < 300) return std::move(resp->body);
            std::string msg = resp->body;
            try {
                auto j = json::parse(resp->body);
                if (j.is_object() && j.contains("error") && j["error"].is_string()) msg = j["error"];
            } catch (const json::exception&) {
            }
            failure = std::string(to_string(cap)) + ": HTTP " + std::to_string(resp->status) + ": " + msg;
            can_retry = retryable(resp->status);
        }
        if (!can_retry || attempt >= config_.max_retries) {
            throw Error(ErrorCode::Backend, failure + " (after " + std::to_string(attempt + 1) + " attempt" +
                                                (attempt == 0 ? "" : "s") + ")");
        }
        {
            std::lock_guard lock(stats_mu_);
            stats_.backoff_delays.push_back(delay);
        }
        sleeper_(delay);
        delay *= 2.0;
    }
}

template <class Parse>
auto Gateway::call(Capability cap, const json& body, Parse&& parse) -> decltype(parse(std::string{})) {
    const auto key = cache_key(to_string(cap), body);
    if (auto hit = cache_.get(key)) {
        {
            std::lock_guard lock(stats_mu_);
            ++stats_.cache_hits;
        }
        return parse(*hit);
    }

    std::promise<std::string> promise;
    std::shared_future<std::string> pending;
    bool leader = false;
    {
        std::lock_guard lock(inflight_mu_);
        if (auto it = inflight_.find(key); it != inflight_.end()) {
            pending = it->second;
        } else {
            pending = promise.get_future().share();
            inflight_.emplace(key, pending);
            leader = true;
        }
    }
    if (!leader) {
        auto raw = pending.get();
        std::lock_guard lock(stats_mu_);
        ++stats_.cache_hits;
        return parse(raw);
    }

    auto finish = [&] {
        std::lock_guard lock(inflight_mu_);
        inflight_.erase(key);
    };
    try {
        auto raw = fetch(cap, body.dump());
        auto value = parse(raw);
        // Only responses that satisfy the shape contract are cached.
        cache_.put(key, raw);
        {
            std::lock_guard lock(stats_mu_);
            ++stats_.backend_successes;
        }
        promise.set_value(raw);
        finish();
        return value;
    } catch (...) {
        promise.set_exception(std::current_exception());
        finish();
        throw;
    }
}

std::string Gateway::chat(std::span<const ChatMessage> messages, double temperature, int max_tokens,
                          std::string_view cache_salt) {
    if (messages.empty()) throw Error(ErrorCode::InvalidArgument, "chat needs at least one message");
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    json body = {{"messages", std::move(msgs)}, {"temperature", temperature}, {"max_tokens", max_tokens}};
    if (!cache_salt.empty()) body["cache_salt"] = cache_salt;
    return call(Capability::Chat, body, [](const std::string& raw) {
        auto j = parse_body(Capability::Chat, raw);
        const auto& text = field(Capability::Chat, j, "text");
        if (!text.is_string()) throw Error(ErrorCode::Protocol, "chat: 'text' must be a string");
        return text.get<std::string>();
    });
}

std::vector<BBox> Gateway::detect(const WireImage& image, std::string_view query, double box_threshold) {
    if (query.empty()) throw Error(ErrorCode::InvalidArgument, "detect query must be non-empty");
    json body = {{"image_b64", encode(image)}, {"query", query}, {"box_threshold", box_threshold}};
    auto boxes = call(Capability::Detect, body, [&](const std::string& raw) {
        auto j = parse_body(Capability::Detect, raw);
        const auto& arr = field(Capability::Detect, j, "boxes");
        if (!arr.is_array()) throw Error(ErrorCode::Protocol, "detect: 'boxes' must be an array");
        std::vector<BBox> out;
        for (const auto& b : arr) {
            for (const char* k : {"x0", "y0", "x1", "y1", "confidence"}) {
                if (!b.contains(k) || !b[k].is_number()) {
                    throw Error(ErrorCode::Protocol, std::string("detect: box field '") + k + "' missing or not a number");
                }
            }
            BBox box;
            box.x0 = std::clamp(static_cast<int>(std::floor(b["x0"].get<double>())), 0, image.width);
            box.y0 = std::clamp(static_cast<int>(std::floor(b["y0"].get<double>())), 0, image.height);
            box.x1 = std::clamp(static_cast<int>(std::ceil(b["x1"].get<double>())), 0, image.width);
            box.y1 = std::clamp(static_cast<int>(std::ceil(b["y1"].get<double>())), 0, image.height);
            box.confidence = std::clamp(b["confidence"].get<double>(), 0.0, 1.0);
            if (box.x0 >= box.x1 || box.y0 >= box.y1) continue;
            out.push_back(box);
        }
        return out;
    });
    std::erase_if(boxes, [&](const BBox& b) { return b.confidence < box_threshold; });
    std::stable_sort(boxes.begin(), boxes.end(),
                     [](const BBox& a, const BBox& b) { return a.confidence > b.confidence; });
    return boxes;
}

Mask Gateway::segment(const WireImage& image, const BBox& box) {
    if (!box.valid_for(image.width, image.height)) {
        throw Error(ErrorCode::InvalidArgument, "segment box outside image bounds");
    }
    json body = {{"image_b64", encode(image)},
                 {"box", {{"x0", box.x0}, {"y0", box.y0}, {"x1", box.x1}, {"y1", box.y1}}}};
    return call(Capability::Segment, body, [&](const std::string& raw) {
        auto j = parse_body(Capability::Segment, raw);
        const auto& b64 = field(Capability::Segment, j, "mask_b64");
        if (!b64.is_string()) throw Error(ErrorCode::Protocol, "segment: 'mask_b64' must be a string");
        auto gray = decode_png_gray(base64_decode(b64.get<std::string>()));
        if (gray.width != image.width || gray.height != image.height) {
            throw Error(ErrorCode::Protocol, "segment: backend mask " + size_str(gray.width, gray.height) +
                                                 " does not match image " + size_str(image.width, image.height));
        }
        return binarize(gray);
    });
}

Raster Gateway::inpaint(const WireImage& image, const Mask& mask, std::string_view caption, std::uint64_t seed,
                        const Guidance& guidance) {
    if (mask.width != image.width || mask.height != image.height) {
        throw Error(ErrorCode::InvalidArgument, "inpaint mask " + size_str(mask.width, mask.height) +
                                                    " does not match image " + size_str(image.width, image.height));
    }
    json body = {{"image_b64", encode(image)},
                 {"mask_b64", base64_encode(encode_png(mask_to_raster(mask)))},
                 {"prompt", caption},
                 {"seed", seed},
                 {"guidance", {{"text", guidance.text}, {"image", guidance.image}}}};
    return call(Capability::Inpaint, body, [&](const std::string& raw) {
        auto j = parse_body(Capability::Inpaint, raw);
        const auto& b64 = field(Capability::Inpaint, j, "image_b64");
        if (!b64.is_string()) throw Error(ErrorCode::Protocol, "inpaint: 'image_b64' must be a string");
        auto out = decode_png_rgb(base64_decode(b64.get<std::string>()));
        if (out.width != image.width || out.height != image.height) {
            throw Error(ErrorCode::Protocol, "inpaint: backend image " + size_str(out.width, out.height) +
                                                 " does not match input " + size_str(image.width, image.height));
        }
        return out;
    });
}

std::string Gateway::vqa(const WireImage& image, std::string_view question) {
    if (question.empty()) throw Error(ErrorCode::InvalidArgument, "vqa question must be non-empty");
    json body = {{"image_b64", encode(image)}, {"question", question}};
    return call(Capability::Vqa, body, [](const std::string& raw) {
        auto j = parse_body(Capability::Vqa, raw);
        const auto& a = field(Capability::Vqa, j, "answer");
        if (!a.is_string()) throw Error(ErrorCode::Protocol, "vqa: 'answer' must be a string");
        return a.get<std::string>();
    });
}

std::vector<double> Gateway::embed(const WireImage& image) {
    json body = {{"image_b64", encode(image)}};
    return call(Capability::Embed, body, [](const std::string& raw) {
        auto j = parse_body(Capability::Embed, raw);
        const auto& e = field(Capability::Embed, j, "embedding");
        if (!e.is_array() || e.empty()) throw Error(ErrorCode::Protocol, "embed: 'embedding' must be a non-empty array");
        std::vector<double> v;
        v.reserve(e.size());
        for (const auto& x : e) {
            if (!x.is_number()) throw Error(ErrorCode::Protocol, "embed: non-numeric component");
            v.push_back(x.get<double>());
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm)) throw Error(ErrorCode::Protocol, "embed: zero or non-finite vector");
        if (std::abs(norm - 1.0) > 1e-9) {
            for (double& x : v) x /= norm;
        }
        return v;
    });
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(stats_mu_);
    return stats_;
}

} // namespace fe
