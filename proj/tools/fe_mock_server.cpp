// Serves a ScriptedBackend over HTTP for manual runs against HttpTransport.
#include "fe/mock_backend.hpp"

#include "CLI11.hpp"
#include "httplib.h"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Scripted mock of the /v1 backend endpoints"};
    std::string script;
    std::string host = "127.0.0.1";
    int port = 8089;
    std::string api_key;
    app.add_option("--script", script, "Mock script JSON")->required();
    app.add_option("--host", host, "Bind address");
    app.add_option("--port", port, "Port");
    app.add_option("--api-key", api_key, "Require this bearer token");
    CLI11_PARSE(app, argc, argv);

    std::shared_ptr<fe::ScriptedBackend> backend;
    try {
        backend = fe::ScriptedBackend::from_file(script);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    httplib::Server server;
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok"})", "application/json");
    });
    for (auto cap : fe::all_capabilities) {
        server.Post(fe::endpoint_path(cap), [&, cap](const httplib::Request& req, httplib::Response& res) {
            if (!api_key.empty() && req.get_header_value("Authorization") != "Bearer " + api_key) {
                res.status = 401;
                res.set_content(R"({"error":"unauthorized"})", "application/json");
                return;
            }
            auto r = backend->post(cap, req.body);
            res.status = r.status;
            res.set_content(r.body, "application/json");
        });
    }
    std::cerr << "listening on " << host << ":" << port << "\n";
    return server.listen(host, port) ? 0 : 2;
}
