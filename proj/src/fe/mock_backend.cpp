#include "fe/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <thread>

namespace fe {

Rgb seed_color(std::uint64_t seed) {
    return Rgb{static_cast<std::uint8_t>((seed * 97 + 31) % 251),
               static_cast<std::uint8_t>((seed * 57 + 101) % 241),
               static_cast<std::uint8_t>((seed * 29 + 211) % 239)};
}

HttpResponse json_response(int status, const json& body) { return HttpResponse{status, body.dump()}; }

namespace {

HttpResponse bad_request(const std::string& msg) { return json_response(400, {{"error", msg}}); }

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool is_string_field(const json& j, const char* key) { return j.contains(key) && j[key].is_string(); }

Raster decode_image_field(const json& req, const char* key) {
    return decode_png(base64_decode(req.at(key).get<std::string>()));
}

bool contains_color(const Raster& img, Rgb c) {
    if (img.channels < 3) return false;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const auto* p = img.at(x, y);
            if (p[0] == c.r && p[1] == c.g && p[2] == c.b) return true;
        }
    }
    return false;
}

int salt_index(const json& req) {
    if (!is_string_field(req, "cache_salt")) return 0;
    auto salt = req["cache_salt"].get<std::string>();
    auto pos = salt.find_last_not_of("0123456789");
    auto digits = pos == std::string::npos ? salt : salt.substr(pos + 1);
    return digits.empty() ? 0 : std::stoi(digits);
}

} // namespace

ScriptedBackend::ScriptedBackend(json script) : script_(std::move(script)) {
    if (!script_.is_object()) throw Error(ErrorCode::InvalidArgument, "mock script must be a JSON object");
    strict_ = script_.value("strict", true);
    latency_ms_ = script_.value("latency_ms", 0);
    if (auto it = script_.find("fail_first"); it != script_.end()) {
        for (auto c : all_capabilities) {
            if (it->contains(std::string(to_string(c)))) failures_left_[c] = (*it)[std::string(to_string(c))].get<int>();
        }
    }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    try {
        return std::make_shared<ScriptedBackend>(json::parse(read_text_file(path)));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, "mock script " + path.string() + ": " + e.what());
    }
}

HttpResponse ScriptedBackend::post(Capability cap, const std::string& body) {
    int now = ++in_flight_;
    int prev = high_water_.load();
    while (now > prev && !high_water_.compare_exchange_weak(prev, now)) {
    }
    struct Leave {
        std::atomic<int>& n;
        ~Leave() { --n; }
    } leave{in_flight_};

    bool fail = false;
    {
        std::lock_guard lock(mu_);
        ++calls_[cap];
        if (auto it = failures_left_.find(cap); it != failures_left_.end() && it->second > 0) {
            --it->second;
            fail = true;
        }
    }
    if (latency_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(latency_ms_));
    if (fail) return json_response(503, {{"error", "injected transient failure"}});
    return handle(cap, body);
}

HttpResponse ScriptedBackend::handle(Capability cap, const std::string& body) {
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception& e) {
        return bad_request(std::string("request is not JSON: ") + e.what());
    }
    if (!req.is_object()) return bad_request("request must be an object");
    try {
        switch (cap) {
        case Capability::Chat: return chat(req);
        case Capability::Detect: return detect(req);
        case Capability::Segment: return segment(req);
        case Capability::Inpaint: return inpaint(req);
        case Capability::Vqa: return vqa(req);
        case Capability::Embed: return embed(req);
        }
    } catch (const std::exception& e) {
        return bad_request(e.what());
    }
    return bad_request("unknown capability");
}

HttpResponse ScriptedBackend::chat(const json& req) {
    if (!req.contains("messages") || !req["messages"].is_array() || req["messages"].empty()) {
        return bad_request("chat: 'messages' must be a non-empty array");
    }
    std::string system;
    std::string last_user;
    for (const auto& m : req["messages"]) {
        if (!is_string_field(m, "role") || !is_string_field(m, "content")) {
            return bad_request("chat: each message needs string 'role' and 'content'");
        }
        if (m["role"] == "system") system += m["content"].get<std::string>();
        if (m["role"] == "user") last_user = m["content"].get<std::string>();
    }
    for (const auto& rule : script_.value("chat", json::array())) {
        if (rule.contains("system") && system.find(rule["system"].get<std::string>()) == std::string::npos) continue;
        if (last_user.find(rule.value("match", "")) == std::string::npos) continue;
        const auto& replies = rule.at("replies");
        if (replies.empty()) continue;
        auto idx = std::min<std::size_t>(static_cast<std::size_t>(salt_index(req)), replies.size() - 1);
        return json_response(200, {{"text", replies[idx]}});
    }
    if (strict_) return bad_request("chat: no scripted reply for: " + last_user);
    return json_response(200, {{"text", ""}});
}

HttpResponse ScriptedBackend::detect(const json& req) {
    if (!is_string_field(req, "image_b64") || !is_string_field(req, "query")) {
        return bad_request("detect: needs 'image_b64' and 'query'");
    }
    auto query = lower(req["query"].get<std::string>());
    json boxes = json::array();
    for (const auto& rule : script_.value("detect", json::array())) {
        if (lower(rule.value("query", "")) != query) continue;
        for (const auto& b : rule.at("boxes")) {
            boxes.push_back({{"x0", b.at(0)}, {"y0", b.at(1)}, {"x1", b.at(2)}, {"y1", b.at(3)}, {"confidence", b.at(4)}});
        }
        break;
    }
    return json_response(200, {{"boxes", boxes}});
}

HttpResponse ScriptedBackend::segment(const json& req) {
    if (!is_string_field(req, "image_b64") || !req.contains("box")) return bad_request("segment: needs 'image_b64' and 'box'");
    auto img = decode_image_field(req, "image_b64");
    const auto& b = req["box"];
    auto mode = script_.value("segment", json::object()).value("mode", "box");
    int w = img.width, h = img.height;
    if (mode == "wrong_size") {
        w = std::max(1, w / 2);
        h = std::max(1, h / 2);
    }
    Raster mask(w, h, 1, mode == "full" ? 255 : 0);
    if (mode == "box") {
        int x0 = b.at("x0"), y0 = b.at("y0"), x1 = b.at("x1"), y1 = b.at("y1");
        for (int y = std::max(0, y0); y < std::min(h, y1); ++y) {
            for (int x = std::max(0, x0); x < std::min(w, x1); ++x) mask.at(x, y)[0] = 255;
        }
    }
    return json_response(200, {{"mask_b64", base64_encode(encode_png(mask))}});
}

HttpResponse ScriptedBackend::inpaint(const json& req) {
    if (!is_string_field(req, "image_b64") || !is_string_field(req, "mask_b64") || !is_string_field(req, "prompt") ||
        !req.contains("seed") || !req["seed"].is_number_unsigned()) {
        return bad_request("inpaint: needs 'image_b64', 'mask_b64', 'prompt', 'seed'");
    }
    auto seed = req["seed"].get<std::uint64_t>();
    {
        std::lock_guard lock(mu_);
        seeds_.push_back(seed);
    }
    auto img = decode_png_rgb(base64_decode(req["image_b64"].get<std::string>()));
    auto mask = binarize(decode_png_gray(base64_decode(req["mask_b64"].get<std::string>())));
    if (mask.width != img.width || mask.height != img.height) return bad_request("inpaint: mask size mismatch");
    if (script_.value("inpaint", json::object()).value("mode", "seed_fill") == "seed_fill") {
        auto c = seed_color(seed);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                if (!mask.get(x, y)) continue;
                auto* p = img.at(x, y);
                p[0] = c.r;
                p[1] = c.g;
                p[2] = c.b;
            }
        }
    }
    return json_response(200, {{"image_b64", base64_encode(encode_png(img))}});
}

HttpResponse ScriptedBackend::vqa(const json& req) {
    if (!is_string_field(req, "image_b64") || !is_string_field(req, "question")) {
        return bad_request("vqa: needs 'image_b64' and 'question'");
    }
    auto question = req["question"].get<std::string>();
    {
        std::lock_guard lock(mu_);
        questions_.push_back(question);
    }
    for (const auto& rule : script_.value("vqa", json::array())) {
        if (lower(rule.value("question", "")) != lower(question)) continue;
        if (auto it = rule.find("by_seed"); it != rule.end() && !it->empty()) {
            auto img = decode_image_field(req, "image_b64");
            for (auto s = it->begin(); s != it->end(); ++s) {
                if (contains_color(img, seed_color(std::stoull(s.key())))) return json_response(200, {{"answer", s.value()}});
            }
        }
        return json_response(200, {{"answer", rule.value("answer", "")}});
    }
    if (strict_) return bad_request("vqa: unscripted question: " + question);
    return json_response(200, {{"answer", "no"}});
}

HttpResponse ScriptedBackend::embed(const json& req) {
    if (!is_string_field(req, "image_b64")) return bad_request("embed: needs 'image_b64'");
    auto png = base64_decode(req["image_b64"].get<std::string>());
    auto cfg = script_.value("embed", json::object());
    if (auto it = cfg.find("vectors"); it != cfg.end()) {
        auto digest = sha256_hex(png);
        if (it->contains(digest)) return json_response(200, {{"embedding", (*it)[digest]}});
    }
    // 2x2 grid of mean colours plus a constant component.
    auto img = decode_png_rgb(png);
    std::vector<double> v(13, 0.0);
    std::vector<double> counts(4, 0.0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            int cell = (y * 2 / img.height) * 2 + (x * 2 / img.width);
            const auto* p = img.at(x, y);
            for (int c = 0; c < 3; ++c) v[static_cast<std::size_t>(cell * 3 + c)] += p[c] / 255.0;
            counts[static_cast<std::size_t>(cell)] += 1.0;
        }
    }
    for (std::size_t cell = 0; cell < 4; ++cell) {
        for (std::size_t c = 0; c < 3; ++c) {
            if (counts[cell] > 0) v[cell * 3 + c] /= counts[cell];
        }
    }
    v[12] = 1.0;
    return json_response(200, {{"embedding", v}});
}

std::size_t ScriptedBackend::calls(Capability cap) const {
    std::lock_guard lock(mu_);
    auto it = calls_.find(cap);
    return it == calls_.end() ? 0 : it->second;
}

std::size_t ScriptedBackend::total_calls() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [cap, c] : calls_) n += c;
    return n;
}

std::vector<std::uint64_t> ScriptedBackend::inpaint_seeds() const {
    std::lock_guard lock(mu_);
    return seeds_;
}

std::vector<std::string> ScriptedBackend::questions() const {
    std::lock_guard lock(mu_);
    return questions_;
}

HttpResponse FunctionTransport::post(Capability cap, const std::string& body) {
    ++calls_;
    return handler_(cap, json::parse(body));
}

} // namespace fe
