#include "esapiens/service.hpp"

#include "esapiens/common.hpp"
#include "esapiens/ingest.hpp"

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <set>
#include <thread>

namespace esapiens::service {

using nlohmann::json;
namespace orch = esapiens::orchestrator;

// ---------------------------------------------------------------------------
// SSE
// ---------------------------------------------------------------------------

std::string encode_sse(const std::string& event, const json& data, long long seq) {
    if (event.empty() || event.find_first_of("\r\n:") != std::string::npos) {
        throw Error("invalid SSE event name: " + event);
    }
    json payload = json::object();
    payload["seq"] = seq;
    if (data.is_object()) {
        for (const auto& [k, v] : data.items()) {
            if (k != "seq") payload[k] = v;
        }
    } else if (!data.is_null()) {
        payload["value"] = data;
    }
    // dump() escapes control characters, so the data line never breaks.
    return "event: " + event + "\ndata: " + payload.dump(-1, ' ', false, json::error_handler_t::replace) + "\n\n";
}

std::vector<SseEvent> parse_sse(std::string_view stream) {
    std::vector<SseEvent> out;
    std::optional<std::string> event;
    std::optional<std::string> data;
    std::size_t pos = 0;
    while (pos < stream.size()) {
        const auto nl = stream.find('\n', pos);
        if (nl == std::string_view::npos) throw Error("SSE stream ends inside a frame");
        const auto line = stream.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) {
            if (!event && !data) continue;
            if (!event || !data) throw Error("SSE frame needs both event and data");
            SseEvent e;
            e.event = *event;
            try {
                e.data = json::parse(*data);
            } catch (const json::parse_error& err) {
                throw Error(std::string("SSE data is not JSON: ") + err.what());
            }
            if (!e.data.is_object() || !e.data.contains("seq") || !e.data["seq"].is_number_integer()) {
                throw Error("SSE data lacks an integer seq");
            }
            e.seq = e.data["seq"].get<long long>();
            out.push_back(std::move(e));
            event.reset();
            data.reset();
            continue;
        }
        if (line.front() == ':') continue;
        if (line.rfind("event: ", 0) == 0) {
            if (event) throw Error("SSE frame has two event lines");
            event = std::string(line.substr(7));
        } else if (line.rfind("data: ", 0) == 0) {
            if (data) throw Error("SSE frame has two data lines");
            data = std::string(line.substr(6));
        } else {
            throw Error("unexpected SSE line: " + std::string(line));
        }
    }
    if (event || data) throw Error("SSE stream ends inside a frame");
    return out;
}

std::optional<std::string> check_grammar(const std::vector<SseEvent>& events) {
    static const std::set<std::string> kBody = {"token", "citation", "table", "chart", "sql_trace", "warning"};
    if (events.empty()) return "empty stream";
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].seq <= events[i - 1].seq) {
            return "seq not strictly increasing at event " + std::to_string(i);
        }
    }
    const auto& last = events.back().event;
    if (last != "done" && last != "error") return "stream does not end with done or error";
    if (events.size() == 1) {
        if (last == "error") return std::nullopt;
        return "done without a route event";
    }
    if (events.front().event != "route") return "first event is " + events.front().event + ", expected route";
    for (std::size_t i = 1; i + 1 < events.size(); ++i) {
        const auto& name = events[i].event;
        if (name == "done" || name == "error") return "terminal event " + name + " before the end";
        if (!kBody.count(name)) return "unexpected event " + name + " at position " + std::to_string(i);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Service core
// ---------------------------------------------------------------------------

namespace {

Response bad_request(const std::string& code, const std::string& message) {
    return {400, {{"error", code}, {"message", message}}};
}

std::shared_ptr<const retrieval::IndexHandle> load_existing_index(const config::AppConfig& c,
                                                                  const std::shared_ptr<const providers::Embedder>& e) {
    if (!c.service.index_dir) return nullptr;
    if (!std::filesystem::exists(std::filesystem::path(*c.service.index_dir) / "manifest.json")) return nullptr;
    return retrieval::IndexHandle::load(*c.service.index_dir, e);
}

ingest::ChunkPolicy policy_from(const json& body, ingest::ChunkPolicy policy) {
    if (!body.contains("policy")) return policy;
    const auto& p = body.at("policy");
    if (!p.is_object()) throw ConfigError("policy must be an object");
    for (const auto& [key, value] : p.items()) {
        if (key == "window_tokens") {
            policy.window_tokens = value.get<std::size_t>();
        } else if (key == "overlap_tokens") {
            policy.overlap_tokens = value.get<std::size_t>();
        } else if (key == "tokenizer") {
            policy.tokenizer = text::parse_tokenizer_id(value.get<std::string>());
        } else {
            throw ConfigError("unknown policy field: " + key);
        }
    }
    policy.validate();
    return policy;
}

json stats_json(const ingest::CorpusStats& s) {
    return {{"docs", s.docs},
            {"chunks", s.chunks},
            {"document_tokens", s.document_tokens},
            {"chunk_tokens", s.chunk_tokens}};
}

// Frames produced by the orchestrator thread, drained by the writer.
class Channel {
public:
    // Returns false once the channel is closed.
    bool push(const std::string& event, const json& data) {
        std::lock_guard lock(mu_);
        if (closed_) return false;
        frames_.push_back(encode_sse(event, data, ++seq_));
        if (event == "done" || event == "error") terminal_ = true;
        cv_.notify_one();
        return true;
    }
    void finish() {
        std::lock_guard lock(mu_);
        finished_ = true;
        cv_.notify_one();
    }
    // Close and, if no terminal frame was produced, append `error`.
    std::optional<std::string> close(const json& error) {
        std::lock_guard lock(mu_);
        closed_ = true;
        if (terminal_) return std::nullopt;
        terminal_ = true;
        return encode_sse("error", error, ++seq_);
    }
    void close_silently() {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    // Waits up to `timeout`; returns pending frames and whether the producer is done.
    std::pair<std::deque<std::string>, bool> drain(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return !frames_.empty() || finished_; });
        std::deque<std::string> out;
        out.swap(frames_);
        return {std::move(out), finished_};
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> frames_;
    long long seq_ = 0;
    bool closed_ = false;
    bool finished_ = false;
    bool terminal_ = false;
};

class ActiveGuard {
public:
    explicit ActiveGuard(std::atomic<std::size_t>& n) : n_(n) { ++n_; }
    ~ActiveGuard() { --n_; }
    ActiveGuard(const ActiveGuard&) = delete;
    ActiveGuard& operator=(const ActiveGuard&) = delete;

private:
    std::atomic<std::size_t>& n_;
};

}  // namespace

QaService::QaService(config::AppConfig config, config::ProviderBundle providers, std::shared_ptr<const t2s::Clock> clock)
    : config_(std::move(config)),
      embedder_(std::move(providers.embedder)),
      orchestrator_(std::make_shared<orch::SessionStore>(), config_.service.state_dir) {
    config_.validate();
    auto res = std::make_shared<orch::Resources>();
    res->providers = std::move(providers.providers);
    res->clock = clock ? std::move(clock) : std::make_shared<t2s::SystemClock>();
    res->config = config_.orchestrator;
    res->index = load_existing_index(config_, embedder_);
    resources_ = std::move(res);
}

QaService::QaService(config::AppConfig config)
    : QaService(config, config::build_providers(config.providers)) {}

QaService::~QaService() = default;

std::shared_ptr<const orch::Resources> QaService::resources() const {
    std::lock_guard lock(mu_);
    return resources_;
}

void QaService::publish(std::shared_ptr<orch::Resources> next) { resources_ = std::move(next); }

void QaService::add_plugin(orch::PluginRegistration plugin) {
    std::lock_guard lock(mu_);
    auto next = std::make_shared<orch::Resources>(*resources_);
    next->plugins.push_back(std::move(plugin));
    publish(std::move(next));
}

Response QaService::ingest(const json& body) {
    if (!body.is_object()) return bad_request("malformed_body", "ingest body must be a JSON object");
    try {
        const auto policy = policy_from(body, config_.chunking);
        std::vector<ingest::Document> docs;
        std::vector<std::string> origins;
        if (body.contains("corpus_path") == body.contains("documents")) {
            return bad_request("malformed_body", "give exactly one of corpus_path or documents");
        }
        if (body.contains("corpus_path")) {
            docs = ingest::read_documents_jsonl(read_file(body.at("corpus_path").get<std::string>()), &origins);
        } else {
            const auto& arr = body.at("documents");
            if (!arr.is_array()) return bad_request("malformed_body", "documents must be an array");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                docs.push_back(ingest::parse_document(arr[i].dump()));
                origins.push_back("document " + std::to_string(i));
            }
        }
        auto corpus = ingest::chunk_corpus(docs, policy, &origins);
        ingest::ChunkStore store;
        store.chunks = std::move(corpus.chunks);
        for (auto& d : corpus.documents) store.documents[d.doc_id] = d;
        auto index = retrieval::IndexHandle::build(std::move(store), embedder_, config_.retrieval, policy);
        if (config_.service.index_dir) index->save(*config_.service.index_dir);

        std::lock_guard lock(mu_);
        auto next = std::make_shared<orch::Resources>(*resources_);
        next->index = index;
        publish(std::move(next));
        return {200, {{"stats", stats_json(corpus.stats)}, {"index_manifest", index->manifest()}}};
    } catch (const json::exception& e) {
        return bad_request("malformed_body", e.what());
    } catch (const Error& e) {
        return bad_request("invalid_corpus", e.what());
    }
}

Response QaService::register_datasource(const json& body) {
    if (!body.is_object()) return bad_request("malformed_body", "registration must be a JSON object");
    try {
        const auto name = body.at("name").get<std::string>();
        if (!orch::valid_session_id(name)) return bad_request("malformed_body", "invalid datasource name");
        {
            std::lock_guard lock(mu_);
            if (resources_->datasources.count(name)) {
                return {409, {{"error", "conflict"}, {"message", "datasource '" + name + "' is already registered"}}};
            }
        }
        auto ds = std::make_shared<orch::Datasource>();
        ds->name = name;
        if (body.contains("fixture") == body.contains("path")) {
            return bad_request("malformed_body", "give exactly one of fixture or path");
        }
        if (body.contains("fixture")) {
            const auto f = body.at("fixture").get<std::string>();
            t2s::Fixture fixture;
            if (f == "logistics") {
                fixture = t2s::Fixture::logistics;
            } else if (f == "retail") {
                fixture = t2s::Fixture::retail;
            } else {
                return bad_request("malformed_body", "unknown fixture: " + f);
            }
            ds->executor = std::shared_ptr<t2s::Executor>(t2s::make_fixture_executor(fixture));
            ds->schema = t2s::fixture_schema(fixture);
            if (body.contains("dialect")) ds->schema.dialect = t2s::parse_dialect(body.at("dialect").get<std::string>());
        } else {
            auto exec = std::make_shared<t2s::SqliteExecutor>(body.at("path").get<std::string>());
            std::set<std::string> authorized;
            for (const auto& c : body.value("authorized_columns", json::array())) {
                authorized.insert(to_lower_ascii(c.get<std::string>()));
            }
            std::map<std::string, std::string> units;
            for (const auto& [k, v] : body.value("units", json::object()).items()) units[to_lower_ascii(k)] = v.get<std::string>();
            const auto dialect = t2s::parse_dialect(body.value("dialect", std::string("generic")));
            ds->schema = t2s::introspect_schema(*exec, dialect, authorized, units);
            ds->executor = exec;
        }
        for (const auto& m : body.value("metrics", json::array())) ds->metrics.push_back(m.get<std::string>());

        json tables = json::array();
        for (const auto& t : ds->schema.tables) tables.push_back(t.name);

        std::lock_guard lock(mu_);
        if (resources_->datasources.count(name)) {
            return {409, {{"error", "conflict"}, {"message", "datasource '" + name + "' is already registered"}}};
        }
        auto next = std::make_shared<orch::Resources>(*resources_);
        next->datasources[name] = ds;
        publish(std::move(next));
        return {200, {{"status", "registered"}, {"name", name}, {"tables", tables}}};
    } catch (const json::exception& e) {
        return bad_request("malformed_body", e.what());
    } catch (const Error& e) {
        return bad_request("invalid_datasource", e.what());
    }
}

Response QaService::health() const {
    const auto res = resources();
    json ds = json::array();
    for (const auto& [name, _] : res->datasources) ds.push_back(name);
    return {200,
            {{"status", res->index ? "ready" : "empty"},
             {"index_manifest", res->index ? res->index->manifest() : json(nullptr)},
             {"datasources", ds},
             {"active_streams", active_.load()},
             {"config", config::to_json(config_)}}};
}

std::variant<orch::QueryRequest, Response> QaService::parse_query_body(std::string_view body) const {
    try {
        return parse_query(json::parse(body));
    } catch (const json::parse_error& e) {
        return bad_request("malformed_body", e.what());
    }
}

std::variant<orch::QueryRequest, Response> QaService::parse_query(const json& body) const {
    if (!body.is_object()) return bad_request("malformed_body", "query body must be a JSON object");
    for (const auto& [key, _] : body.items()) {
        if (key != "session_id" && key != "query" && key != "mode" && key != "datasource") {
            return bad_request("malformed_body", "unknown field: " + key);
        }
    }
    orch::QueryRequest r;
    const auto sid = body.find("session_id");
    if (sid == body.end() || !sid->is_string() || !orch::valid_session_id(sid->get<std::string>())) {
        return bad_request("invalid_session_id", "session_id must match [A-Za-z0-9._-]{1,128}");
    }
    r.session_id = sid->get<std::string>();
    const auto q = body.find("query");
    if (q == body.end() || !q->is_string() || trim(q->get<std::string>()).empty()) {
        return bad_request("malformed_body", "query must be a non-empty string");
    }
    r.query = q->get<std::string>();
    r.mode = config_.orchestrator.grounding.mode;
    if (const auto m = body.find("mode"); m != body.end()) {
        if (!m->is_string() || (*m != "standard" && *m != "strict")) {
            return bad_request("malformed_body", "mode must be standard or strict");
        }
        r.mode = grounding::parse_mode(m->get<std::string>());
    }
    if (const auto d = body.find("datasource"); d != body.end() && !d->is_null()) {
        if (!d->is_string()) return bad_request("malformed_body", "datasource must be a string");
        r.datasource = d->get<std::string>();
    }
    return r;
}

void QaService::begin_shutdown() { shutting_down_ = true; }

orch::QueryOutcome QaService::stream(const orch::QueryRequest& request, const ChunkWriter& write) {
    ActiveGuard guard(active_);
    if (shutting_down_) {
        write(encode_sse("error", {{"message", "service is shutting down"}, {"code", "shutting_down"}}, 1));
        orch::QueryOutcome out;
        out.error = "service is shutting down";
        return out;
    }

    const auto res = resources();
    Channel channel;
    orch::QueryOutcome outcome;
    std::thread worker([&] {
        try {
            outcome = orchestrator_.run(request, *res, [&](const std::string& e, const json& d) { channel.push(e, d); });
        } catch (const std::exception& e) {
            channel.push("error", {{"message", e.what()}, {"stage", "service"}});
            outcome.error = e.what();
        }
        channel.finish();
    });

    const auto heartbeat = std::chrono::milliseconds(config_.service.heartbeat_ms);
    const auto slice = std::min(heartbeat, std::chrono::milliseconds(100));
    auto last_write = std::chrono::steady_clock::now();
    bool client_gone = false;
    for (;;) {
        auto [frames, finished] = channel.drain(slice);
        for (const auto& f : frames) {
            if (!client_gone && !write(f)) client_gone = true;
            last_write = std::chrono::steady_clock::now();
        }
        if (client_gone) {
            channel.close_silently();
            break;
        }
        if (finished) break;
        if (shutting_down_) {
            const auto frame = channel.close({{"message", "stream interrupted by shutdown"}, {"stage", "shutdown"}});
            auto [rest, _] = channel.drain(std::chrono::milliseconds(0));
            for (const auto& f : rest) write(f);
            if (frame) write(*frame);
            break;
        }
        if (std::chrono::steady_clock::now() - last_write >= heartbeat) {
            if (!write(kHeartbeat)) {
                channel.close_silently();
                break;
            }
            last_write = std::chrono::steady_clock::now();
        }
    }
    worker.join();
    return outcome;
}

}  // namespace esapiens::service
