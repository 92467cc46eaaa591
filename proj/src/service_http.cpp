#include "esapiens/service.hpp"

#include "esapiens/common.hpp"

#include <httplib.h>

namespace esapiens::service {

using nlohmann::json;

struct HttpServer::Impl {
    QaService& service;
    httplib::Server server;

    explicit Impl(QaService& s) : service(s) {}

    static void reply(httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    }

    static std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
        try {
            return json::parse(req.body);
        } catch (const json::parse_error& e) {
            reply(res, {400, {{"error", "malformed_body"}, {"message", e.what()}}});
            return std::nullopt;
        }
    }

    void install() {
        server.Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
            auto parsed = service.parse_query_body(req.body);
            if (auto* err = std::get_if<Response>(&parsed)) {
                reply(res, *err);
                return;
            }
            const auto query = std::get<orchestrator::QueryRequest>(std::move(parsed));
            res.set_header("Cache-Control", "no-cache");
            res.set_header("X-Accel-Buffering", "no");
            res.set_chunked_content_provider(
                "text/event-stream", [this, query](std::size_t, httplib::DataSink& sink) {
                    service.stream(query, [&sink](std::string_view chunk) {
                        return sink.is_writable() && sink.write(chunk.data(), chunk.size());
                    });
                    sink.done();
                    return true;
                });
        });
        server.Post("/v1/ingest", [this](const httplib::Request& req, httplib::Response& res) {
            if (const auto body = parse_body(req, res)) reply(res, service.ingest(*body));
        });
        server.Post("/v1/datasources", [this](const httplib::Request& req, httplib::Response& res) {
            if (const auto body = parse_body(req, res)) reply(res, service.register_datasource(*body));
        });
        server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) { reply(res, service.health()); });
    }
};

HttpServer::HttpServer(QaService& service) : impl_(std::make_unique<Impl>(service)) { impl_->install(); }

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw Error("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    impl_->service.begin_shutdown();
    if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace esapiens::service
