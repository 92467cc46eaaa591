#pragma once

#include "esapiens/config.hpp"
#include "esapiens/orchestrator.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace esapiens::service {

// ---------------------------------------------------------------------------
// Server-sent events
// ---------------------------------------------------------------------------

struct SseEvent {
    std::string event;
    nlohmann::json data;  // includes "seq"
    long long seq = 0;
};

inline constexpr std::string_view kHeartbeat = ": keep-alive\n\n";

/// `event: <name>\ndata: <single-line JSON with seq>\n\n`. Object payloads get
/// a leading "seq" member; anything else is wrapped as {"seq", "value"}.
std::string encode_sse(const std::string& event, const nlohmann::json& data, long long seq);

/// Inverse of encode_sse over a whole stream; comment lines are skipped.
/// Throws Error on malformed framing.
std::vector<SseEvent> parse_sse(std::string_view stream);

/// Empty when the stream is route (token|citation|table|chart|sql_trace|warning)* (done|error)
/// or a lone error, seq strictly increases and exactly one terminal event
/// closes it; otherwise a description of the first violation.
std::optional<std::string> check_grammar(const std::vector<SseEvent>& events);

// ---------------------------------------------------------------------------
// Service core
// ---------------------------------------------------------------------------

struct Response {
    int status = 200;
    nlohmann::json body;
};

/// Writes one chunk of the response stream; false when the client is gone.
using ChunkWriter = std::function<bool(std::string_view chunk)>;

/// Ingestion, datasource registration, health and streamed queries, with
/// no transport attached. Resources are copy-on-write: a stream keeps the
/// snapshot it started with while ingestion swaps in a new index.
class QaService {
public:
    QaService(config::AppConfig config, config::ProviderBundle providers,
              std::shared_ptr<const t2s::Clock> clock = nullptr);
    explicit QaService(config::AppConfig config);
    ~QaService();
    QaService(const QaService&) = delete;
    QaService& operator=(const QaService&) = delete;

    /// {corpus_path | documents: [...], policy?: {window_tokens, overlap_tokens, tokenizer}}
    Response ingest(const nlohmann::json& body);
    /// {name, fixture: logistics|retail | path, dialect?, authorized_columns?, units?, metrics?}
    Response register_datasource(const nlohmann::json& body);
    Response health() const;

    /// Validate a /v1/query body; a 400 response when malformed.
    std::variant<orchestrator::QueryRequest, Response> parse_query(const nlohmann::json& body) const;
    std::variant<orchestrator::QueryRequest, Response> parse_query_body(std::string_view body) const;

    /// Run one query and write its SSE frames in order. Heartbeats are
    /// written while the orchestrator is busy. Returns the outcome.
    orchestrator::QueryOutcome stream(const orchestrator::QueryRequest& request, const ChunkWriter& write);

    /// Add plugins before serving.
    void add_plugin(orchestrator::PluginRegistration plugin);

    /// Streams still running end with an error event; new queries are refused.
    void begin_shutdown();
    [[nodiscard]] bool shutting_down() const { return shutting_down_.load(); }
    [[nodiscard]] std::size_t active_streams() const { return active_.load(); }

    [[nodiscard]] std::shared_ptr<const orchestrator::Resources> resources() const;
    [[nodiscard]] const config::AppConfig& config() const { return config_; }

private:
    void publish(std::shared_ptr<orchestrator::Resources> next);

    config::AppConfig config_;
    std::shared_ptr<const providers::Embedder> embedder_;
    orchestrator::Orchestrator orchestrator_;
    mutable std::mutex mu_;  // guards resources_ swaps and registrations
    std::shared_ptr<const orchestrator::Resources> resources_;
    std::atomic<bool> shutting_down_{false};
    std::atomic<std::size_t> active_{0};
};

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

/// /v1/query, /v1/ingest, /v1/datasources and /v1/health over HTTP/1.1.
class HttpServer {
public:
    explicit HttpServer(QaService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Bind; port 0 picks a free one. Returns the bound port. Throws Error.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace esapiens::service
