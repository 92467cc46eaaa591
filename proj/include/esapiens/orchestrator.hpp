#pragma once

#include "esapiens/grounding.hpp"
#include "esapiens/providers.hpp"
#include "esapiens/retrieval.hpp"
#include "esapiens/t2s.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace esapiens::orchestrator {

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

struct Turn {
    std::string query;
    std::string answer;
    friend bool operator==(const Turn&, const Turn&) = default;
};

/// Dialogue history per session. Reads are shared, writes exclusive.
class SessionStore {
public:
    explicit SessionStore(std::size_t max_turns = 100) : max_turns_(max_turns) {}

    /// Last `k` turns, oldest first. Unknown sessions have none.
    [[nodiscard]] std::vector<Turn> recent(const std::string& session_id, std::size_t k) const;
    void append(const std::string& session_id, Turn turn);
    [[nodiscard]] std::size_t turns(const std::string& session_id) const;
    /// Next query number in the session (1-based); creates the session.
    std::size_t reserve(const std::string& session_id);

private:
    mutable std::shared_mutex mu_;
    std::map<std::string, std::deque<Turn>> sessions_;
    std::map<std::string, std::size_t> reserved_;
    std::size_t max_turns_;
};

bool valid_session_id(std::string_view id);

// ---------------------------------------------------------------------------
// Routes and state
// ---------------------------------------------------------------------------

enum class RouteKind { documents, sql, plugin, chart, web_search, image };
std::string_view to_string(RouteKind k);

struct Route {
    RouteKind primary = RouteKind::documents;
    std::set<std::string> flags;  // "chart", or a secondary data path ("documents", "sql")
    std::string plugin_id;        // for RouteKind::plugin

    [[nodiscard]] std::string label() const;
    [[nodiscard]] bool has(const std::string& flag) const { return flags.count(flag) > 0; }
};

/// "sql+chart", "plugin:weather", "documents" ... Unknown primaries map to documents.
Route parse_route(std::string_view label);
nlohmann::json to_json(const Route& r);

/// Outcome of the SQL path kept in the state.
struct SqlOutcome {
    std::string datasource;
    t2s::Final final = t2s::Final::reformulation_suggested;
    std::optional<t2s::ResultTable> table;
    t2s::ChartDecision chart;
    std::string narrative;
    std::vector<std::string> sql;  // executed statements of the last attempt
    nlohmann::json attempts = nlohmann::json::array();
    std::size_t generation_calls = 0;
};

nlohmann::json to_json(const SqlOutcome& s);
SqlOutcome sql_outcome_from_json(const nlohmann::json& j);

struct StepTiming {
    std::string step;
    double ms = 0.0;
};

/// Everything one query produced. Lists only grow while the query runs.
struct PipelineState {
    std::string session_id;
    std::string query_id;
    std::string query;
    grounding::GroundingMode mode = grounding::GroundingMode::standard;
    std::optional<std::string> datasource;
    std::vector<Turn> dialogue_context;
    std::vector<retrieval::Snippet> retrieved_content;
    std::vector<std::pair<std::string, nlohmann::json>> plugin_results;
    std::vector<t2s::ChartDecision> visual_elements;
    std::vector<grounding::CitationTrace> citation_traces;
    std::vector<grounding::GroundedAnswer> grounded;
    std::vector<SqlOutcome> sql_results;
    std::vector<std::string> route_taken;
    std::vector<std::string> warnings;
    std::vector<StepTiming> timings;
};

nlohmann::json to_json(const PipelineState& s);
PipelineState state_from_json(const nlohmann::json& j);

/// Fresh state carrying the last `window` turns of the session.
PipelineState init_state(SessionStore& sessions, const std::string& session_id, const std::string& query,
                         std::size_t window = 10);

// ---------------------------------------------------------------------------
// Plugins
// ---------------------------------------------------------------------------

/// Request envelope: {plugin_id, query, session_id, context}; reply
/// {status: "ok", text?, data?} or {status: "error", message}.
class Plugin {
public:
    virtual ~Plugin() = default;
    virtual nlohmann::json invoke(const nlohmann::json& request) = 0;
};

class HttpPlugin final : public Plugin {
public:
    HttpPlugin(std::string url, int timeout_ms = 10000);
    nlohmann::json invoke(const nlohmann::json& request) override;

private:
    std::string url_;
    int timeout_ms_;
};

class FunctionPlugin final : public Plugin {
public:
    explicit FunctionPlugin(std::function<nlohmann::json(const nlohmann::json&)> fn) : fn_(std::move(fn)) {}
    nlohmann::json invoke(const nlohmann::json& request) override { return fn_(request); }

private:
    std::function<nlohmann::json(const nlohmann::json&)> fn_;
};

struct PluginRegistration {
    std::string id;
    std::vector<std::string> verbs;  // trigger words for the rule router
    std::shared_ptr<Plugin> plugin;
};

// ---------------------------------------------------------------------------
// Resources
// ---------------------------------------------------------------------------

struct Datasource {
    std::string name;
    t2s::SchemaContext schema;
    std::shared_ptr<t2s::Executor> executor;
    std::vector<std::string> metrics;  // extra words that route to SQL
};

struct Providers {
    std::shared_ptr<providers::Router> router;  // null: rule router over datasources and plugins
    std::shared_ptr<providers::LanguageModel> drafter;
    std::shared_ptr<providers::LanguageModel> sql_model;
    std::shared_ptr<providers::Reranker> reranker;
    std::shared_ptr<providers::Verifier> verifier;
    std::shared_ptr<providers::WebSearch> web;
};

struct OrchestratorConfig {
    grounding::GroundingConfig grounding;
    t2s::T2sConfig t2s;
    std::size_t n_candidates = 200;
    std::size_t top_n = 50;
    double relevance_floor = 0.2;
    std::size_t web_results = 5;
    std::size_t dialogue_window = 10;
    bool secondary_path = false;

    void validate() const;
};

struct Resources {
    std::shared_ptr<const retrieval::IndexHandle> index;  // null before ingestion
    std::map<std::string, std::shared_ptr<Datasource>> datasources;
    std::vector<PluginRegistration> plugins;
    Providers providers;
    std::shared_ptr<const t2s::Clock> clock;
    OrchestratorConfig config;
};

/// Event name plus JSON payload, in emission order.
using EventSink = std::function<void(const std::string& event, const nlohmann::json& data)>;

/// Intent via the configured router; a failing router yields documents.
Route route(const PipelineState& state, const Resources& res, std::vector<std::string>* warnings = nullptr);

/// Run the route's paths, appending artifacts to `state` and emitting
/// warning / citation / table / chart / sql_trace events. Throws on a step
/// failure; whatever was appended so far stays in `state`.
void execute(PipelineState& state, const Route& route, const Resources& res, const EventSink& emit);

// ---------------------------------------------------------------------------
// Final answer
// ---------------------------------------------------------------------------

struct Reference {
    int n = 0;
    std::string chunk_id;
    std::string title;
    std::string source_uri;
    std::size_t start_char = 0;
    std::size_t end_char = 0;
    bool external = false;
    std::string snippet;
    friend bool operator==(const Reference&, const Reference&) = default;
};

struct AnswerSentence {
    std::string text;  // with rendered markers
    std::vector<int> refs;
    grounding::Verdict verdict = grounding::Verdict::supported;
};

struct FinalAnswer {
    std::string query_id;
    std::string route;
    std::string text;
    std::vector<AnswerSentence> sentences;
    std::vector<Reference> references;
    std::string reference_block;
    std::optional<t2s::ResultTable> table;
    std::optional<t2s::ChartDecision> chart;
    std::string narrative;
    std::string plugin_text;
    std::vector<std::string> sql;
    std::optional<grounding::GroundingMode> mode;
    double support_rate = 0.0;
    std::size_t abstentions = 0;
    std::vector<std::string> warnings;
    bool no_answer = false;
};

nlohmann::json to_json(const FinalAnswer& a);

/// Grounded text with contiguous [n] markers, reference block, table, chart
/// and SQL narrative. Nothing to assemble yields an explicit no-answer payload.
FinalAnswer optimize_answer(const PipelineState& state);

/// Pieces of FinalAnswer::text streamed as token events: one per sentence,
/// then the narrative. Their concatenation equals the text.
std::vector<std::string> token_pieces(const FinalAnswer& answer);

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

struct QueryRequest {
    std::string session_id;
    std::string query;
    grounding::GroundingMode mode = grounding::GroundingMode::standard;
    std::optional<std::string> datasource;
};

struct QueryOutcome {
    PipelineState state;
    std::optional<FinalAnswer> answer;  // absent when the stream ended in error
    std::optional<std::string> error;
};

/// Full query: init_state, route, execute, optimize_answer, with the event
/// stream route (token|citation|table|chart|sql_trace|warning)* (done|error).
/// An unknown datasource produces a single error event.
class Orchestrator {
public:
    Orchestrator(std::shared_ptr<SessionStore> sessions, std::optional<std::string> state_dir = std::nullopt);

    QueryOutcome run(const QueryRequest& request, const Resources& res, const EventSink& emit);

    [[nodiscard]] SessionStore& sessions() { return *sessions_; }

private:
    std::shared_ptr<SessionStore> sessions_;
    std::optional<std::string> state_dir_;
};

/// Snapshot written after every query: {"state": ..., "answer": ...}.
void save_snapshot(const std::string& path, const PipelineState& state, const std::optional<FinalAnswer>& answer);
PipelineState load_state(const std::string& path);
/// Stored answer JSON of a snapshot (null when the query failed).
nlohmann::json load_answer(const std::string& path);
std::string snapshot_path(const std::string& state_dir, const std::string& session_id, const std::string& query_id);

}  // namespace esapiens::orchestrator
