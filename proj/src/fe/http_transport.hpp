#pragma once

#include "fe/gateway.hpp"

namespace fe {

// One POST per call against the capability's base URL, `Authorization: Bearer <key>`.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(BackendConfig config);
    HttpResponse post(Capability cap, const std::string& body) override;

private:
    BackendConfig config_;
};

} // namespace fe
