#include "fe/http_transport.hpp"

#include "httplib.h"

namespace fe {

HttpTransport::HttpTransport(BackendConfig config) : config_(std::move(config)) {}

HttpResponse HttpTransport::post(Capability cap, const std::string& body) {
    auto it = config_.base_url.find(cap);
    if (it == config_.base_url.end() || it->second.empty()) {
        throw Error(ErrorCode::InvalidArgument,
                    "no base URL configured for capability '" + std::string(to_string(cap)) + "'");
    }
    std::string base = it->second;
    while (!base.empty() && base.back() == '/') base.pop_back();

    httplib::Client client(base);
    auto secs = static_cast<time_t>(config_.timeout_s);
    auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(endpoint_path(cap), headers, body, "application/json");
    if (!res) {
        throw TransportError(base + endpoint_path(cap) + ": " + httplib::to_string(res.error()));
    }
    return HttpResponse{res->status, res->body};
}

} // namespace fe
