#include "esapiens/orchestrator.hpp"

#include "esapiens/http_providers.hpp"

#include <algorithm>
#include <filesystem>
#include <mutex>
#include <regex>
#include <sstream>

namespace esapiens::orchestrator {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Sessions

std::vector<Turn> SessionStore::recent(const std::string& session_id, std::size_t k) const {
    std::shared_lock lock(mu_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return {};
    const auto& turns = it->second;
    const auto skip = turns.size() > k ? turns.size() - k : 0;
    return {turns.begin() + static_cast<std::ptrdiff_t>(skip), turns.end()};
}

void SessionStore::append(const std::string& session_id, Turn turn) {
    std::unique_lock lock(mu_);
    auto& turns = sessions_[session_id];
    turns.push_back(std::move(turn));
    while (turns.size() > max_turns_) turns.pop_front();
}

std::size_t SessionStore::turns(const std::string& session_id) const {
    std::shared_lock lock(mu_);
    const auto it = sessions_.find(session_id);
    return it == sessions_.end() ? 0 : it->second.size();
}

std::size_t SessionStore::reserve(const std::string& session_id) {
    std::unique_lock lock(mu_);
    sessions_.try_emplace(session_id);
    return ++reserved_[session_id];
}

bool valid_session_id(std::string_view id) {
    static const std::regex re(R"([A-Za-z0-9_-][A-Za-z0-9_.-]{0,127})");
    return std::regex_match(id.begin(), id.end(), re) && id.find("..") == std::string_view::npos;
}

// ---------------------------------------------------------------------------
// Routes

std::string_view to_string(RouteKind k) {
    switch (k) {
        case RouteKind::documents: return "documents";
        case RouteKind::sql: return "sql";
        case RouteKind::plugin: return "plugin";
        case RouteKind::chart: return "chart";
        case RouteKind::web_search: return "web_search";
        case RouteKind::image: return "image";
    }
    return "?";
}

std::string Route::label() const {
    std::string out(to_string(primary));
    if (primary == RouteKind::plugin) out += ":" + plugin_id;
    for (const auto& f : flags) out += "+" + f;
    return out;
}

Route parse_route(std::string_view label) {
    Route r;
    const auto parts = split(trim(label), '+');
    if (parts.empty()) return r;
    const auto head = to_lower_ascii(trim(parts[0]));
    if (head == "sql") r.primary = RouteKind::sql;
    else if (head == "chart") r.primary = RouteKind::chart;
    else if (head == "web_search") r.primary = RouteKind::web_search;
    else if (head == "image") r.primary = RouteKind::image;
    else if (head.rfind("plugin:", 0) == 0 && head.size() > 7) {
        r.primary = RouteKind::plugin;
        r.plugin_id = std::string(trim(parts[0])).substr(7);
    }
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto f = to_lower_ascii(trim(parts[i]));
        if (!f.empty()) r.flags.insert(f);
    }
    return r;
}

json to_json(const Route& r) {
    json j = {{"primary", to_string(r.primary)}, {"flags", r.flags}, {"label", r.label()}};
    if (r.primary == RouteKind::plugin) j["plugin_id"] = r.plugin_id;
    return j;
}

// ---------------------------------------------------------------------------
// State JSON

json to_json(const SqlOutcome& s) {
    return {{"datasource", s.datasource},
            {"final", t2s::to_string(s.final)},
            {"table", s.table ? t2s::to_json(*s.table) : json(nullptr)},
            {"chart", t2s::to_json(s.chart)},
            {"narrative", s.narrative},
            {"sql", s.sql},
            {"attempts", s.attempts},
            {"generation_calls", s.generation_calls}};
}

namespace {

t2s::Final parse_final(const std::string& s) {
    for (auto f : {t2s::Final::answered, t2s::Final::fallback_placeholder, t2s::Final::reformulation_suggested,
                   t2s::Final::rejected}) {
        if (t2s::to_string(f) == s) return f;
    }
    throw Error("unknown t2s final state '" + s + "'");
}

}  // namespace

SqlOutcome sql_outcome_from_json(const json& j) {
    SqlOutcome s;
    s.datasource = j.at("datasource").get<std::string>();
    s.final = parse_final(j.at("final").get<std::string>());
    if (!j.at("table").is_null()) s.table = t2s::table_from_json(j["table"]);
    s.chart = t2s::chart_from_json(j.at("chart"));
    s.narrative = j.at("narrative").get<std::string>();
    s.sql = j.at("sql").get<std::vector<std::string>>();
    s.attempts = j.at("attempts");
    s.generation_calls = j.value("generation_calls", std::size_t{0});
    return s;
}

json to_json(const PipelineState& s) {
    json turns = json::array();
    for (const auto& t : s.dialogue_context) turns.push_back({{"query", t.query}, {"answer", t.answer}});
    json snippets = json::array();
    for (const auto& sn : s.retrieved_content) snippets.push_back(retrieval::to_json(sn));
    json plugins = json::array();
    for (const auto& [id, payload] : s.plugin_results) plugins.push_back({{"plugin_id", id}, {"payload", payload}});
    json visuals = json::array();
    for (const auto& v : s.visual_elements) visuals.push_back(t2s::to_json(v));
    json traces = json::array();
    for (const auto& c : s.citation_traces) {
        traces.push_back({{"sentence_span", {c.sentence_span.begin, c.sentence_span.end}},
                          {"chunk_id", c.chunk_id},
                          {"score", c.score}});
    }
    json grounded = json::array();
    for (const auto& g : s.grounded) grounded.push_back(grounding::to_json(g));
    json sql = json::array();
    for (const auto& o : s.sql_results) sql.push_back(to_json(o));
    json timings = json::array();
    for (const auto& t : s.timings) timings.push_back({{"step", t.step}, {"ms", t.ms}});
    return {{"session_id", s.session_id},
            {"query_id", s.query_id},
            {"query", s.query},
            {"mode", grounding::to_string(s.mode)},
            {"datasource", s.datasource ? json(*s.datasource) : json(nullptr)},
            {"dialogue_context", turns},
            {"retrieved_content", snippets},
            {"plugin_results", plugins},
            {"visual_elements", visuals},
            {"citation_traces", traces},
            {"grounded", grounded},
            {"sql_results", sql},
            {"route_taken", s.route_taken},
            {"warnings", s.warnings},
            {"timings", timings}};
}

PipelineState state_from_json(const json& j) {
    PipelineState s;
    s.session_id = j.at("session_id").get<std::string>();
    s.query_id = j.at("query_id").get<std::string>();
    s.query = j.at("query").get<std::string>();
    s.mode = grounding::parse_mode(j.at("mode").get<std::string>());
    if (!j.at("datasource").is_null()) s.datasource = j["datasource"].get<std::string>();
    for (const auto& t : j.at("dialogue_context")) s.dialogue_context.push_back({t.at("query"), t.at("answer")});
    for (const auto& sn : j.at("retrieved_content")) s.retrieved_content.push_back(retrieval::snippet_from_json(sn));
    for (const auto& p : j.at("plugin_results")) s.plugin_results.emplace_back(p.at("plugin_id"), p.at("payload"));
    for (const auto& v : j.at("visual_elements")) s.visual_elements.push_back(t2s::chart_from_json(v));
    for (const auto& c : j.at("citation_traces")) {
        s.citation_traces.push_back({{c.at("sentence_span")[0].get<std::size_t>(), c.at("sentence_span")[1].get<std::size_t>()},
                                     c.at("chunk_id").get<std::string>(),
                                     c.at("score").get<double>()});
    }
    for (const auto& g : j.at("grounded")) s.grounded.push_back(grounding::grounded_answer_from_json(g));
    for (const auto& o : j.at("sql_results")) s.sql_results.push_back(sql_outcome_from_json(o));
    s.route_taken = j.at("route_taken").get<std::vector<std::string>>();
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& t : j.at("timings")) s.timings.push_back({t.at("step"), t.at("ms")});
    return s;
}

PipelineState init_state(SessionStore& sessions, const std::string& session_id, const std::string& query,
                         std::size_t window) {
    PipelineState s;
    s.session_id = session_id;
    s.query = query;
    const auto n = sessions.reserve(session_id);
    s.dialogue_context = sessions.recent(session_id, window);
    s.query_id = sha256_hex(session_id + '\x1f' + std::to_string(n) + '\x1f' + query, 16);
    return s;
}

// ---------------------------------------------------------------------------
// Plugins

HttpPlugin::HttpPlugin(std::string url, int timeout_ms) : url_(std::move(url)), timeout_ms_(timeout_ms) {}

json HttpPlugin::invoke(const json& request) {
    providers::HttpJsonClient client(url_, timeout_ms_, 0);
    return client.post(request);
}

// ---------------------------------------------------------------------------
// Execution

void OrchestratorConfig::validate() const {
    grounding.validate();
    t2s.validate();
    if (n_candidates == 0 || top_n == 0) throw ConfigError("retrieval sizes must be positive");
    if (top_n > n_candidates) throw ConfigError("top_n must not exceed n_candidates");
    if (relevance_floor < 0.0 || relevance_floor > 1.0) throw ConfigError("relevance_floor must be in [0, 1]");
    if (dialogue_window == 0) throw ConfigError("dialogue_window must be positive");
}

namespace {

class StepTimer {
public:
    StepTimer(PipelineState& state, std::string step)
        : state_(state), step_(std::move(step)), start_(std::chrono::steady_clock::now()) {}
    ~StepTimer() {
        const auto d = std::chrono::steady_clock::now() - start_;
        state_.timings.push_back({step_, std::chrono::duration<double, std::milli>(d).count()});
    }

private:
    PipelineState& state_;
    std::string step_;
    std::chrono::steady_clock::time_point start_;
};

void warn(PipelineState& state, const EventSink& emit, const std::string& message) {
    state.warnings.push_back(message);
    emit("warning", {{"message", message}});
}

std::vector<retrieval::Snippet> web_snippets(const PipelineState& state, const Resources& res, std::size_t first_rank) {
    std::vector<retrieval::Snippet> out;
    std::set<std::string> seen;
    for (const auto& r : res.providers.web->search(state.query, res.config.web_results)) {
        if (!seen.insert(r.url).second) continue;
        retrieval::Snippet s;
        s.chunk_id = "web-" + sha256_hex(r.url, 16);
        s.doc_id = r.url;
        s.text = r.snippet;
        s.title = r.title;
        s.source_uri = r.url;
        s.end_char = r.snippet.size();
        s.external = true;
        s.rank = first_rank + out.size();
        out.push_back(std::move(s));
    }
    return out;
}

void documents_path(PipelineState& state, const Resources& res, const EventSink& emit, bool web_only) {
    std::vector<retrieval::Snippet> snippets;
    if (!web_only && res.index) {
        StepTimer t(state, "retrieve");
        const auto candidates = res.index->hybrid_retrieve(state.query, res.config.n_candidates);
        std::vector<std::string> warnings;
        snippets = retrieval::rerank_and_select(*res.index, state.query, candidates, *res.providers.reranker,
                                                res.config.top_n, &warnings);
        for (const auto& w : warnings) warn(state, emit, w);
    }
    const auto top = snippets.empty() ? 0.0 : snippets.front().rerank_score.value_or(snippets.front().fused_score);
    const bool insufficient = snippets.empty() || top < res.config.relevance_floor;
    if (web_only || insufficient) {
        if (res.providers.web) {
            StepTimer t(state, "web_search");
            auto external = web_snippets(state, res, snippets.size() + 1);
            state.route_taken.push_back("web_search");
            std::ostringstream msg;
            if (web_only) {
                msg << "web search requested";
            } else if (snippets.empty()) {
                msg << "no internal passages found";
            } else {
                msg << "internal retrieval below relevance floor (" << top << " < " << res.config.relevance_floor << ")";
            }
            msg << "; merged " << external.size() << " web result(s)";
            warn(state, emit, msg.str());
            for (auto& e : external) snippets.push_back(std::move(e));
        } else if (insufficient) {
            warn(state, emit, "internal retrieval insufficient and no web search provider is configured");
        }
    }
    for (const auto& s : snippets) state.retrieved_content.push_back(s);

    StepTimer t(state, "generate");
    auto cfg = res.config.grounding;
    cfg.mode = state.mode;
    auto answer = grounding::grounded_generate(state.query, snippets, cfg, *res.providers.drafter, *res.providers.verifier);
    for (const auto& w : answer.warnings) warn(state, emit, w);
    for (const auto& c : answer.citation_traces()) state.citation_traces.push_back(c);
    state.grounded.push_back(std::move(answer));
    state.route_taken.push_back("documents");
}

const Datasource& pick_datasource(const PipelineState& state, const Resources& res) {
    if (state.datasource) {
        const auto it = res.datasources.find(*state.datasource);
        if (it == res.datasources.end()) throw Error("unknown datasource '" + *state.datasource + "'");
        return *it->second;
    }
    if (res.datasources.empty()) throw Error("no datasource is registered for SQL questions");
    return *res.datasources.begin()->second;
}

void sql_path(PipelineState& state, const Resources& res, const EventSink& emit, bool chart) {
    const auto& ds = pick_datasource(state, res);
    std::vector<std::string> history;
    for (const auto& t : state.dialogue_context) {
        history.push_back("user: " + t.query);
        history.push_back("assistant: " + t.answer);
    }
    t2s::T2sResult r;
    {
        StepTimer t(state, "sql");
        r = t2s::run_with_retry(state.query, ds.schema, *res.providers.sql_model, *ds.executor, *res.clock,
                                res.config.t2s, history);
    }
    SqlOutcome o;
    o.datasource = ds.name;
    o.final = r.final;
    o.table = r.table;
    o.chart = r.chart;
    o.narrative = r.narrative;
    o.generation_calls = r.generation_calls;
    if (!r.attempts.empty()) o.sql = sql::split_statements(r.attempts.back().sql_text);
    for (const auto& a : r.attempts) {
        auto j = t2s::to_json(a);
        j["datasource"] = ds.name;
        o.attempts.push_back(j);
        emit("sql_trace", j);
    }
    state.route_taken.push_back("sql");
    for (const auto& w : r.warnings) warn(state, emit, w);
    if (r.table) emit("table", t2s::to_json(*r.table));
    const bool show_chart = chart && r.table && r.chart.kind != t2s::ChartKind::none;
    state.sql_results.push_back(std::move(o));
    if (show_chart) {
        state.visual_elements.push_back(r.chart);
        state.route_taken.push_back("chart");
        emit("chart", t2s::to_json(r.chart));
    } else if (chart && r.table) {
        warn(state, emit, "no chart suits this result: " + r.chart.reason);
    }
}

void plugin_path(PipelineState& state, const Route& route, const Resources& res) {
    const auto it = std::find_if(res.plugins.begin(), res.plugins.end(),
                                 [&](const PluginRegistration& p) { return p.id == route.plugin_id; });
    if (it == res.plugins.end()) throw Error("unknown plugin '" + route.plugin_id + "'");
    json context = json::array();
    for (const auto& t : state.dialogue_context) context.push_back({{"query", t.query}, {"answer", t.answer}});
    const json request = {
        {"plugin_id", it->id}, {"query", state.query}, {"session_id", state.session_id}, {"context", context}};
    json reply;
    {
        StepTimer t(state, "plugin");
        reply = it->plugin->invoke(request);
    }
    if (!reply.is_object() || reply.value("status", "") != "ok") {
        const auto msg = reply.is_object() ? reply.value("message", "plugin failed") : std::string("malformed plugin reply");
        throw ProviderError("plugin " + it->id + ": " + msg);
    }
    state.plugin_results.emplace_back(it->id, reply);
    state.route_taken.push_back("plugin:" + it->id);
}

}  // namespace

Route route(const PipelineState& state, const Resources& res, std::vector<std::string>* warnings) {
    std::vector<std::string> context;
    for (const auto& t : state.dialogue_context) context.push_back(t.query);
    try {
        if (res.providers.router) return parse_route(res.providers.router->route(state.query, context));
        std::vector<std::string> tables, metrics;
        for (const auto& [name, ds] : res.datasources) {
            for (const auto& t : ds->schema.tables) tables.push_back(to_lower_ascii(t.name));
            for (const auto& m : ds->metrics) metrics.push_back(to_lower_ascii(m));
        }
        std::vector<providers::RuleRouter::PluginTrigger> triggers;
        for (const auto& p : res.plugins) triggers.push_back({p.id, p.verbs});
        return parse_route(providers::RuleRouter(tables, metrics, triggers).route(state.query, context));
    } catch (const std::exception& e) {
        if (warnings) warnings->push_back(std::string("router failed, using documents: ") + e.what());
        return {};
    }
}

void execute(PipelineState& state, const Route& route, const Resources& res, const EventSink& emit) {
    switch (route.primary) {
        case RouteKind::documents: documents_path(state, res, emit, false); break;
        case RouteKind::web_search: documents_path(state, res, emit, true); break;
        case RouteKind::sql: sql_path(state, res, emit, route.has("chart")); break;
        case RouteKind::chart: sql_path(state, res, emit, true); break;
        case RouteKind::plugin: plugin_path(state, route, res); break;
        case RouteKind::image:
            state.route_taken.push_back("image");
            warn(state, emit, "image analysis is not supported");
            break;
    }
    if (!res.config.secondary_path) return;
    const bool sql_done = route.primary == RouteKind::sql || route.primary == RouteKind::chart;
    if (route.has("documents") && route.primary != RouteKind::documents) documents_path(state, res, emit, false);
    if (route.has("sql") && !sql_done) sql_path(state, res, emit, route.has("chart"));
}

// ---------------------------------------------------------------------------
// Final answer

namespace {

std::string render(const std::string& text, const std::vector<int>& refs) {
    if (refs.empty()) return text;
    std::string markers;
    for (int n : refs) markers += "[" + std::to_string(n) + "]";
    std::size_t cut = text.size();
    while (cut > 0 && (text[cut - 1] == '.' || text[cut - 1] == '!' || text[cut - 1] == '?')) --cut;
    return text.substr(0, cut) + " " + markers + text.substr(cut);
}

json to_json(const AnswerSentence& s) {
    return {{"text", s.text}, {"refs", s.refs}, {"verdict", grounding::to_string(s.verdict)}};
}

json to_json(const Reference& r) {
    return {{"n", r.n},
            {"chunk_id", r.chunk_id},
            {"title", r.title},
            {"source_uri", r.source_uri},
            {"start_char", r.start_char},
            {"end_char", r.end_char},
            {"external", r.external},
            {"snippet", r.snippet}};
}

constexpr const char* kNoAnswer = "No answer could be produced for this query.";

}  // namespace

json to_json(const FinalAnswer& a) {
    json sentences = json::array();
    for (const auto& s : a.sentences) sentences.push_back(to_json(s));
    json refs = json::array();
    for (const auto& r : a.references) refs.push_back(to_json(r));
    json j = {{"query_id", a.query_id},
              {"route", a.route},
              {"text", a.text},
              {"sentences", sentences},
              {"references", refs},
              {"reference_block", a.reference_block},
              {"table", a.table ? t2s::to_json(*a.table) : json(nullptr)},
              {"chart", a.chart ? t2s::to_json(*a.chart) : json(nullptr)},
              {"narrative", a.narrative},
              {"plugin_text", a.plugin_text},
              {"sql", a.sql},
              {"warnings", a.warnings},
              {"no_answer", a.no_answer}};
    j["support"] = a.mode ? json{{"mode", grounding::to_string(*a.mode)},
                                 {"support_rate", a.support_rate},
                                 {"abstentions", a.abstentions}}
                          : json(nullptr);
    return j;
}

FinalAnswer optimize_answer(const PipelineState& state) {
    FinalAnswer a;
    a.query_id = state.query_id;
    for (const auto& tag : state.route_taken) {
        if (tag.rfind("route:", 0) == 0) {
            a.route = tag.substr(6);
            break;
        }
    }
    std::map<std::string, const retrieval::Snippet*> by_id;
    for (const auto& s : state.retrieved_content) by_id.emplace(s.chunk_id, &s);
    std::map<std::string, int> numbering;
    const auto number = [&](const std::string& chunk_id) -> std::optional<int> {
        const auto snip = by_id.find(chunk_id);
        if (snip == by_id.end()) return std::nullopt;
        const auto [it, added] = numbering.emplace(chunk_id, static_cast<int>(numbering.size()) + 1);
        if (added) {
            const auto& s = *snip->second;
            a.references.push_back(
                {it->second, s.chunk_id, s.title, s.source_uri, s.start_char, s.end_char, s.external, s.text});
        }
        return it->second;
    };
    double support_sum = 0.0;
    for (const auto& g : state.grounded) {
        a.mode = g.mode;
        support_sum += g.support_rate;
        a.abstentions += g.abstentions();
        for (const auto& s : g.sentences) {
            AnswerSentence out;
            out.verdict = s.verdict;
            for (const auto& c : s.citations) {
                if (const auto n = number(c); n && std::find(out.refs.begin(), out.refs.end(), *n) == out.refs.end()) {
                    out.refs.push_back(*n);
                }
            }
            out.text = s.verdict == grounding::Verdict::abstained ? std::string(grounding::kAbstention)
                                                                   : render(s.text, out.refs);
            a.sentences.push_back(std::move(out));
        }
    }
    if (!state.grounded.empty()) a.support_rate = support_sum / static_cast<double>(state.grounded.size());
    std::vector<std::string> block;
    for (const auto& r : a.references) {
        block.push_back("[" + std::to_string(r.n) + "] " + (r.source_uri.empty() ? r.chunk_id : r.source_uri) +
                        (r.external ? " (web)"
                                    : " (chars " + std::to_string(r.start_char) + "-" + std::to_string(r.end_char) + ")"));
    }
    a.reference_block = join(block, "\n");

    std::vector<std::string> narratives;
    for (const auto& o : state.sql_results) {
        if (o.table) a.table = o.table;
        if (!o.narrative.empty()) narratives.push_back(o.narrative);
        for (const auto& s : o.sql) a.sql.push_back(s);
    }
    a.narrative = join(narratives, "\n\n");
    if (!state.visual_elements.empty()) a.chart = state.visual_elements.back();
    a.warnings = state.warnings;

    std::vector<std::string> plugin_texts;
    for (const auto& [id, reply] : state.plugin_results) {
        if (reply.contains("text") && reply["text"].is_string()) plugin_texts.push_back(reply["text"]);
    }
    a.plugin_text = join(plugin_texts, "\n\n");
    a.no_answer = a.sentences.empty() && a.plugin_text.empty() && a.narrative.empty() && !a.table;
    for (const auto& piece : token_pieces(a)) a.text += piece;
    return a;
}

std::vector<std::string> token_pieces(const FinalAnswer& answer) {
    if (answer.no_answer) return {kNoAnswer};
    std::vector<std::string> pieces;
    for (const auto& s : answer.sentences) pieces.push_back((pieces.empty() ? "" : " ") + s.text);
    for (const auto* part : {&answer.plugin_text, &answer.narrative}) {
        if (!part->empty()) pieces.push_back((pieces.empty() ? "" : "\n\n") + *part);
    }
    return pieces;
}

// ---------------------------------------------------------------------------
// Driver and persistence

std::string snapshot_path(const std::string& state_dir, const std::string& session_id, const std::string& query_id) {
    return (std::filesystem::path(state_dir) / session_id / (query_id + ".json")).string();
}

void save_snapshot(const std::string& path, const PipelineState& state, const std::optional<FinalAnswer>& answer) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    const json j = {{"state", to_json(state)}, {"answer", answer ? to_json(*answer) : json(nullptr)}};
    write_file_atomic(path, j.dump(2) + "\n");
}

PipelineState load_state(const std::string& path) {
    try {
        return state_from_json(json::parse(read_file(path)).at("state"));
    } catch (const json::exception& e) {
        throw Error("bad state snapshot " + path + ": " + e.what());
    }
}

json load_answer(const std::string& path) {
    try {
        return json::parse(read_file(path)).at("answer");
    } catch (const json::exception& e) {
        throw Error("bad state snapshot " + path + ": " + e.what());
    }
}

Orchestrator::Orchestrator(std::shared_ptr<SessionStore> sessions, std::optional<std::string> state_dir)
    : sessions_(std::move(sessions)), state_dir_(std::move(state_dir)) {}

QueryOutcome Orchestrator::run(const QueryRequest& request, const Resources& res, const EventSink& emit) {
    QueryOutcome out;
    if (request.datasource && !res.datasources.count(*request.datasource)) {
        out.error = "unknown datasource '" + *request.datasource + "'";
        emit("error", {{"message", *out.error}, {"code", "unknown_datasource"}});
        return out;
    }
    auto& state = out.state;
    state = init_state(*sessions_, request.session_id, request.query, res.config.dialogue_window);
    state.mode = request.mode;
    state.datasource = request.datasource;

    std::vector<std::string> route_warnings;
    Route r;
    {
        StepTimer t(state, "route");
        r = route(state, res, &route_warnings);
    }
    state.route_taken.push_back("route:" + r.label());
    auto route_event = to_json(r);
    route_event["query_id"] = state.query_id;
    route_event["session_id"] = state.session_id;
    route_event["mode"] = grounding::to_string(state.mode);
    emit("route", route_event);

    std::string stage = "execute";
    try {
        for (const auto& w : route_warnings) warn(state, emit, w);
        execute(state, r, res, emit);
        stage = "optimize";
        FinalAnswer answer;
        {
            StepTimer t(state, "optimize");
            answer = optimize_answer(state);
        }
        if (state_dir_) {
            stage = "persist";
            try {
                save_snapshot(snapshot_path(*state_dir_, state.session_id, state.query_id), state, answer);
            } catch (const std::exception& e) {
                warn(state, emit, std::string("state snapshot not saved: ") + e.what());
                answer.warnings = state.warnings;
            }
        }
        for (const auto& ref : answer.references) emit("citation", to_json(ref));
        for (const auto& piece : token_pieces(answer)) emit("token", {{"text", piece}});
        emit("done", {{"answer", to_json(answer)}});
        sessions_->append(state.session_id, {state.query, answer.text});
        out.answer = std::move(answer);
    } catch (const std::exception& e) {
        out.error = e.what();
        emit("error", {{"message", *out.error}, {"stage", stage}});
        if (state_dir_) {
            try {
                save_snapshot(snapshot_path(*state_dir_, state.session_id, state.query_id), state, std::nullopt);
            } catch (const std::exception&) {
            }
        }
    }
    return out;
}

}  // namespace esapiens::orchestrator
