#pragma once

#include "fe/gateway.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>

namespace fe {

// Colour the scripted inpainter paints into the mask region for `seed`.
Rgb seed_color(std::uint64_t seed);

// Deterministic in-process implementation of the six /v1 endpoints, driven
// by a JSON script:
//
//   {
//     "strict": true,
//     "latency_ms": 0,
//     "fail_first": {"chat": 2},
//     "chat":   [{"match": "...", "system": "...", "replies": ["...", "..."]}],
//     "detect": [{"query": "barn", "boxes": [[x0, y0, x1, y1, conf], ...]}],
//     "segment": {"mode": "box" | "full" | "empty" | "wrong_size"},
//     "inpaint": {"mode": "seed_fill" | "identity"},
//     "vqa":    [{"question": "...", "answer": "yes", "by_seed": {"101": "no"}}],
//     "embed":  {"mode": "color_grid", "vectors": {"<png sha256>": [..]}}
//   }
//
// A chat rule matches when `match` occurs in the last user message and
// `system` (if given) occurs in the system message. The reply index is the
// number in the request's cache_salt ("retry-1" -> 1), clamped to the last
// reply. A vqa rule answers `by_seed[s]` when the image contains
// seed_color(s), otherwise `answer`.
class ScriptedBackend : public Transport {
public:
    explicit ScriptedBackend(json script = json::object());
    static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

    HttpResponse post(Capability cap, const std::string& body) override;
    // Same as post() without counters or latency; used by the HTTP mock server.
    HttpResponse handle(Capability cap, const std::string& body);

    std::size_t calls(Capability cap) const;
    std::size_t total_calls() const;
    int max_in_flight() const { return high_water_.load(); }
    std::vector<std::uint64_t> inpaint_seeds() const;
    std::vector<std::string> questions() const;

private:
    HttpResponse chat(const json& req);
    HttpResponse detect(const json& req);
    HttpResponse segment(const json& req);
    HttpResponse inpaint(const json& req);
    HttpResponse vqa(const json& req);
    HttpResponse embed(const json& req);

    json script_;
    bool strict_ = true;
    int latency_ms_ = 0;

    mutable std::mutex mu_;
    std::map<Capability, std::size_t> calls_;
    std::map<Capability, int> failures_left_;
    std::vector<std::uint64_t> seeds_;
    std::vector<std::string> questions_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> high_water_{0};
};

// Transport that forwards to a callable; for tests that need bespoke behaviour.
class FunctionTransport : public Transport {
public:
    using Handler = std::function<HttpResponse(Capability, const json&)>;
    explicit FunctionTransport(Handler h) : handler_(std::move(h)) {}

    HttpResponse post(Capability cap, const std::string& body) override;
    std::size_t calls() const { return calls_.load(); }

private:
    Handler handler_;
    std::atomic<std::size_t> calls_{0};
};

HttpResponse json_response(int status, const json& body);

} // namespace fe
