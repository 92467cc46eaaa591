#include "esapiens/orchestrator.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

using namespace esapiens;
using namespace esapiens::orchestrator;
using nlohmann::json;

namespace {

struct Event {
    std::string name;
    json data;
};

struct Recorder {
    std::vector<Event> events;
    std::mutex mu;
    EventSink sink() {
        return [this](const std::string& name, const json& data) {
            std::lock_guard lock(mu);
            events.push_back({name, data});
        };
    }
    [[nodiscard]] std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& e : events) out.push_back(e.name);
        return out;
    }
    [[nodiscard]] std::size_t count(const std::string& name) const {
        return static_cast<std::size_t>(
            std::count_if(events.begin(), events.end(), [&](const Event& e) { return e.name == name; }));
    }
};

class FixedRouter final : public providers::Router {
public:
    explicit FixedRouter(std::string label) : label_(std::move(label)) {}
    std::string route(const std::string&, const std::vector<std::string>&) const override { return label_; }

private:
    std::string label_;
};

class FailingRouter final : public providers::Router {
public:
    std::string route(const std::string&, const std::vector<std::string>&) const override {
        throw ProviderError("router offline");
    }
};

class FailingModel final : public providers::LanguageModel {
public:
    std::string complete(const std::string&) override { throw ProviderError("drafter offline"); }
};

// Shared log so the relative order of reranking and web search is visible.
struct CallLog {
    std::mutex mu;
    std::vector<std::string> calls;
    void add(std::string c) {
        std::lock_guard lock(mu);
        calls.push_back(std::move(c));
    }
};

class SpyReranker final : public providers::Reranker {
public:
    explicit SpyReranker(std::shared_ptr<CallLog> log) : log_(std::move(log)) {}
    std::vector<double> rerank(const std::string& q, std::span<const std::string> p,
                               std::span<const double> prior) const override {
        log_->add("rerank");
        return inner_.rerank(q, p, prior);
    }

private:
    std::shared_ptr<CallLog> log_;
    providers::LexicalReranker inner_;
};

class SpyWeb final : public providers::WebSearch {
public:
    explicit SpyWeb(std::shared_ptr<CallLog> log) : log_(std::move(log)) {}
    std::vector<providers::WebResult> search(const std::string&, std::size_t k) override {
        log_->add("web");
        std::vector<providers::WebResult> out = {
            {"Retention guide", "https://example.org/retention",
             "Customer records are kept for 90 days under the retention policy."},
            {"Duplicate", "https://example.org/retention", "same url"},
        };
        out.resize(std::min(k, out.size()));
        return out;
    }
    [[nodiscard]] std::size_t calls() const {
        std::lock_guard lock(log_->mu);
        return static_cast<std::size_t>(std::count(log_->calls.begin(), log_->calls.end(), "web"));
    }

private:
    std::shared_ptr<CallLog> log_;
};

std::shared_ptr<const retrieval::IndexHandle> make_index(const std::vector<std::string>& texts) {
    ingest::ChunkStore store;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        ingest::Chunk c;
        c.doc_id = "policy" + std::to_string(i);
        c.chunk_id = ingest::make_chunk_id(c.doc_id, 0);
        c.text = texts[i];
        c.end_char = texts[i].size();
        store.documents[c.doc_id] = {c.doc_id, "Policy " + std::to_string(i), "file://policy" + std::to_string(i) + ".txt", {}};
        store.chunks.push_back(c);
    }
    return retrieval::IndexHandle::build(store, std::make_shared<providers::HashEmbedder>(64));
}

const std::vector<std::string> kPolicy = {
    "The privacy policy sets a retention period of 90 days for customer records.",
    "Employees must badge in at the front desk every morning.",
    "Expense reports are due on the fifth business day of each month.",
};

struct Fixture {
    std::shared_ptr<CallLog> log = std::make_shared<CallLog>();
    std::shared_ptr<SpyWeb> web = std::make_shared<SpyWeb>(log);
    Resources res;

    explicit Fixture(const std::vector<std::string>& corpus = kPolicy,
                     std::vector<std::string> sql_script = {"SELECT 1"}) {
        if (!corpus.empty()) res.index = make_index(corpus);
        auto ds = std::make_shared<Datasource>();
        ds->name = "logistics";
        ds->schema = t2s::fixture_schema(t2s::Fixture::logistics);
        ds->executor = std::shared_ptr<t2s::Executor>(t2s::make_fixture_executor(t2s::Fixture::logistics));
        ds->metrics = {"revenue"};
        res.datasources[ds->name] = ds;
        res.providers.drafter = std::make_shared<providers::ExtractiveLanguageModel>();
        res.providers.sql_model = std::make_shared<providers::ScriptedLanguageModel>(
            std::move(sql_script), providers::ScriptedLanguageModel::OnExhausted::repeat_last);
        res.providers.reranker = std::make_shared<SpyReranker>(log);
        res.providers.verifier = std::make_shared<providers::LexicalVerifier>();
        res.providers.web = web;
        res.clock = std::make_shared<t2s::FixedClock>(t2s::kFixtureToday);
    }
};

QueryRequest request(std::string query, std::string session = "s1") {
    QueryRequest r;
    r.session_id = std::move(session);
    r.query = std::move(query);
    return r;
}

void expect_grammar(const Recorder& rec) {
    ASSERT_FALSE(rec.events.empty());
    const auto& first = rec.events.front().name;
    const auto& last = rec.events.back().name;
    EXPECT_TRUE(last == "done" || last == "error");
    if (rec.events.size() == 1) {
        EXPECT_EQ(first, "error");
        return;
    }
    EXPECT_EQ(first, "route");
    for (std::size_t i = 1; i + 1 < rec.events.size(); ++i) {
        const auto& n = rec.events[i].name;
        EXPECT_TRUE(n == "token" || n == "citation" || n == "table" || n == "chart" || n == "sql_trace" ||
                    n == "warning")
            << n;
    }
}

std::string concat_tokens(const Recorder& rec) {
    std::string out;
    for (const auto& e : rec.events) {
        if (e.name == "token") out += e.data.at("text").get<std::string>();
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(SessionStore, WindowKeepsMostRecentTen) {
    SessionStore store;
    for (int i = 0; i < 15; ++i) store.append("s", {"q" + std::to_string(i), "a"});
    const auto recent = store.recent("s", 10);
    ASSERT_EQ(recent.size(), 10u);
    EXPECT_EQ(recent.front().query, "q5");
    EXPECT_EQ(recent.back().query, "q14");
    EXPECT_TRUE(store.recent("other", 10).empty());
}

TEST(SessionStore, InitStateFirstTurnIsEmpty) {
    SessionStore store;
    const auto s = init_state(store, "fresh", "hello");
    EXPECT_TRUE(s.dialogue_context.empty());
    EXPECT_TRUE(s.retrieved_content.empty());
    EXPECT_TRUE(s.route_taken.empty());
    EXPECT_NE(init_state(store, "fresh", "hello").query_id, s.query_id);
}

TEST(SessionStore, SessionIds) {
    EXPECT_TRUE(valid_session_id("user-42_a.b"));
    EXPECT_FALSE(valid_session_id(""));
    EXPECT_FALSE(valid_session_id("../etc"));
    EXPECT_FALSE(valid_session_id("a/b"));
    EXPECT_FALSE(valid_session_id(std::string(200, 'a')));
}

TEST(Route, ParseLabels) {
    EXPECT_EQ(parse_route("sql+chart").primary, RouteKind::sql);
    EXPECT_TRUE(parse_route("sql+chart").has("chart"));
    const auto p = parse_route("plugin:weather");
    EXPECT_EQ(p.primary, RouteKind::plugin);
    EXPECT_EQ(p.plugin_id, "weather");
    EXPECT_EQ(parse_route("nonsense").primary, RouteKind::documents);
    EXPECT_EQ(parse_route("sql+chart").label(), "sql+chart");
}

TEST(Route, RuleRouterExamples) {
    Fixture f;
    SessionStore store;
    const auto r1 = route(init_state(store, "s", "how many orders shipped last month"), f.res);
    EXPECT_EQ(r1.primary, RouteKind::sql);
    const auto r2 = route(init_state(store, "s", "what does the privacy policy say about retention"), f.res);
    EXPECT_EQ(r2.primary, RouteKind::documents);
    const auto r3 = route(init_state(store, "s", "plot revenue by month"), f.res);
    EXPECT_EQ(r3.primary, RouteKind::sql);
    EXPECT_TRUE(r3.has("chart"));
}

TEST(Route, FailingRouterFallsBackToDocuments) {
    Fixture f;
    f.res.providers.router = std::make_shared<FailingRouter>();
    SessionStore store;
    std::vector<std::string> warnings;
    EXPECT_EQ(route(init_state(store, "s", "how many orders"), f.res, &warnings).primary, RouteKind::documents);
    ASSERT_EQ(warnings.size(), 1u);
}

// ---------------------------------------------------------------------------

TEST(Execute, AnswerInCorpusSkipsWebSearch) {
    Fixture f;
    Orchestrator orch(std::make_shared<SessionStore>());
    Recorder rec;
    const auto out = orch.run(request("What does the privacy policy say about retention?"), f.res, rec.sink());
    expect_grammar(rec);
    EXPECT_EQ(f.web->calls(), 0u);
    ASSERT_TRUE(out.answer);
    EXPECT_GE(rec.count("token"), 1u);
    EXPECT_GE(rec.count("citation"), 1u);
    EXPECT_NE(out.answer->text.find("retention period of 90 days"), std::string::npos);
    EXPECT_NE(out.answer->text.find("[1]"), std::string::npos);
    EXPECT_EQ(out.answer->references.front().source_uri, "file://policy0.txt");
    EXPECT_FALSE(out.answer->table);
    EXPECT_EQ(concat_tokens(rec), out.answer->text);
}

TEST(Execute, EmptyCorpusCallsWebSearchOnce) {
    Fixture f(std::vector<std::string>{});
    Orchestrator orch(std::make_shared<SessionStore>());
    Recorder rec;
    const auto out = orch.run(request("What does the privacy policy say about retention?"), f.res, rec.sink());
    expect_grammar(rec);
    EXPECT_EQ(f.web->calls(), 1u);
    ASSERT_TRUE(out.answer);
    ASSERT_EQ(out.state.retrieved_content.size(), 1u);  // duplicate URL merged
    EXPECT_TRUE(out.state.retrieved_content[0].external);
    EXPECT_TRUE(out.answer->references.at(0).external);
    EXPECT_GE(rec.count("warning"), 1u);
}

TEST(Execute, WebSearchOnlyAfterInternalRetrieval) {
    Fixture f({"Bananas are a yellow fruit.", "Trains leave on the hour."});
    Orchestrator orch(std::make_shared<SessionStore>());
    Recorder rec;
    orch.run(request("What does the privacy policy say about retention?"), f.res, rec.sink());
    ASSERT_EQ(f.log->calls, (std::vector<std::string>{"rerank", "web"}));
    EXPECT_EQ(f.web->calls(), 1u);
}

TEST(Execute, SqlWithChartEmitsChartBeforeDone) {
    Fixture f(kPolicy, {"SELECT carrier, COUNT(*) AS n FROM shipments GROUP BY carrier ORDER BY carrier"});
    Orchestrator orch(std::make_shared<SessionStore>());
    Recorder rec;
    const auto out = orch.run(request("Chart the number of shipments per carrier"), f.res, rec.sink());
    expect_grammar(rec);
    const auto names = rec.names();
    const auto chart = std::find(names.begin(), names.end(), "chart");
    ASSERT_NE(chart, names.end());
    EXPECT_LT(chart - names.begin(), static_cast<std::ptrdiff_t>(names.size()) - 1);
    EXPECT_EQ(rec.count("sql_trace"), 1u);
    EXPECT_EQ(rec.count("table"), 1u);
    ASSERT_TRUE(out.answer);
    EXPECT_EQ(out.answer->chart->kind, t2s::ChartKind::bar);
    EXPECT_TRUE(out.answer->references.empty());
    EXPECT_FALSE(out.answer->narrative.empty());
    EXPECT_EQ(concat_tokens(rec), out.answer->text);
}

TEST(Execute, StateIsAppendOnly) {
    Fixture f(kPolicy, {"SELECT carrier, COUNT(*) AS n FROM shipments GROUP BY carrier"});
    f.res.config.secondary_path = true;
    f.res.providers.router = std::make_shared<FixedRouter>("sql+chart+documents");
    SessionStore store;
    auto state = init_state(store, "s", "retention policy and shipments per carrier chart");
    std::vector<json> snapshots{to_json(state)};
    const EventSink sink = [&](const std::string&, const json&) { snapshots.push_back(to_json(state)); };
    execute(state, route(state, f.res), f.res, sink);
    snapshots.push_back(to_json(state));
    for (std::size_t i = 1; i < snapshots.size(); ++i) {
        for (const auto& [key, value] : snapshots[i - 1].items()) {
            if (!value.is_array()) {
                EXPECT_EQ(value, snapshots[i][key]) << key;
                continue;
            }
            const auto& later = snapshots[i][key];
            ASSERT_GE(later.size(), value.size()) << key;
            for (std::size_t k = 0; k < value.size(); ++k) EXPECT_EQ(value[k], later[k]) << key;
        }
    }
    // Trace closure.
    std::set<std::string> ids;
    for (const auto& s : state.retrieved_content) ids.insert(s.chunk_id);
    for (const auto& c : state.citation_traces) EXPECT_TRUE(ids.count(c.chunk_id)) << c.chunk_id;
    EXPECT_EQ(state.sql_results.size(), 1u);
    EXPECT_EQ(state.grounded.size(), 1u);
}

TEST(Execute, RouteTagsHaveEvents) {
    Fixture f(kPolicy, {"SELECT carrier, COUNT(*) AS n FROM shipments GROUP BY carrier"});
    Orchestrator orch(std::make_shared<SessionStore>());
    for (const std::string q : {"chart shipments per carrier", "what does the privacy policy say about retention",
                                "tell me about quantum bananas"}) {
        Recorder rec;
        const auto out = orch.run(request(q), f.res, rec.sink());
        for (const auto& tag : out.state.route_taken) {
            std::string expected = "token";
            if (tag.rfind("route:", 0) == 0) expected = "route";
            if (tag == "sql") expected = "sql_trace";
            if (tag == "chart") expected = "chart";
            if (tag == "web_search" || tag == "image") expected = "warning";
            EXPECT_GE(rec.count(expected), 1u) << q << " " << tag;
        }
    }
}

TEST(Execute, SecondaryPathNeedsFlag) {
    for (const bool enabled : {false, true}) {
        Fixture f(kPolicy, {"SELECT COUNT(*) AS n FROM shipments"});
        f.res.config.secondary_path = enabled;
        f.res.providers.router = std::make_shared<FixedRouter>("sql+documents");
        Orchestrator orch(std::make_shared<SessionStore>());
        Recorder rec;
        const auto out = orch.run(request("retention policy and shipment count"), f.res, rec.sink());
        ASSERT_TRUE(out.answer);
        EXPECT_EQ(out.state.grounded.size(), enabled ? 1u : 0u);
        EXPECT_TRUE(out.answer->table);
    }
}

TEST(Execute, StrictModeAbstains) {
    Fixture f;
    f.res.providers.drafter = std::make_shared<providers::AdversarialLanguageModel>();
    f.res.config.grounding.mode = grounding::GroundingMode::standard;  // per-request mode wins
    Orchestrator orch(std::make_shared<SessionStore>());
    Recorder rec;
    auto req = request("What does the privacy policy say about retention?");
    req.mode = grounding::GroundingMode::strict;
    const auto out = orch.run(req, f.res, rec.sink());
    ASSERT_TRUE(out.answer);
    EXPECT_NE(out.answer->text.find("N/A"), std::string::npos);
    EXPECT_EQ(out.answer->text.find("giraffes"), std::string::npos);
    const auto done = rec.events.back().data.at("answer");
    EXPECT_EQ(done.at("support").at("mode"), "strict");
    EXPECT_GE(done.at("support").at("abstentions").get<int>(), 1);
}

TEST(Execute, UnknownDatasourceIsSingleErrorEvent) {
    Fixture f;
    Orchestrator orch(std::make_shared<SessionStore>());
    Recorder rec;
    auto req = request("how many orders");
    req.datasource = "warehouse";
    const auto out = orch.run(req, f.res, rec.sink());
    ASSERT_EQ(rec.events.size(), 1u);
    EXPECT_EQ(rec.events[0].name, "error");
    EXPECT_TRUE(out.error);
}

TEST(Execute, StepFailureEmitsErrorAndKeepsState) {
    Fixture f;
    f.res.providers.drafter = std::make_shared<FailingModel>();
    const auto dir = std::filesystem::temp_directory_path() / "esapiens_orch_fail";
    std::filesystem::remove_all(dir);
    Orchestrator orch(std::make_shared<SessionStore>(), dir.string());
    Recorder rec;
    const auto out = orch.run(request("What does the privacy policy say about retention?"), f.res, rec.sink());
    expect_grammar(rec);
    EXPECT_EQ(rec.events.back().name, "error");
    EXPECT_FALSE(out.answer);
    EXPECT_FALSE(out.state.retrieved_content.empty());
    const auto path = snapshot_path(dir.string(), "s1", out.state.query_id);
    EXPECT_TRUE(load_answer(path).is_null());
    EXPECT_EQ(load_state(path).retrieved_content.size(), out.state.retrieved_content.size());
    std::filesystem::remove_all(dir);
}

TEST(Execute, PluginRoute) {
    Fixture f;
    json seen;
    f.res.plugins.push_back({"weather", {"forecast"}, std::make_shared<FunctionPlugin>([&](const json& req) {
                                 seen = req;
                                 return json{{"status", "ok"}, {"text", "Sunny in Oslo."}};
                             })});
    Orchestrator orch(std::make_shared<SessionStore>());
    Recorder rec;
    const auto out = orch.run(request("forecast for Oslo"), f.res, rec.sink());
    expect_grammar(rec);
    ASSERT_TRUE(out.answer);
    EXPECT_EQ(out.answer->text, "Sunny in Oslo.");
    EXPECT_EQ(seen.at("plugin_id"), "weather");
    EXPECT_EQ(seen.at("query"), "forecast for Oslo");
    ASSERT_EQ(out.state.plugin_results.size(), 1u);

    f.res.plugins[0].plugin = std::make_shared<FunctionPlugin>(
        [](const json&) { return json{{"status", "error"}, {"message", "quota"}}; });
    Recorder rec2;
    orch.run(request("forecast for Bergen"), f.res, rec2.sink());
    EXPECT_EQ(rec2.events.back().name, "error");
}

TEST(Execute, ImageRouteIsNotSupported) {
    Fixture f;
    Orchestrator orch(std::make_shared<SessionStore>());
    Recorder rec;
    const auto out = orch.run(request("describe this image"), f.res, rec.sink());
    expect_grammar(rec);
    ASSERT_TRUE(out.answer);
    EXPECT_TRUE(out.answer->no_answer);
    EXPECT_EQ(rec.count("warning"), 1u);
    EXPECT_EQ(concat_tokens(rec), out.answer->text);
}

TEST(Execute, ConcurrentQueriesInOneSessionAreIsolated) {
    Fixture f;
    Orchestrator orch(std::make_shared<SessionStore>());
    std::vector<QueryOutcome> outcomes(8);
    std::vector<Recorder> recorders(8);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] {
            outcomes[i] = orch.run(request("privacy policy retention question " + std::to_string(i), "shared"), f.res,
                                   recorders[i].sink());
        });
    }
    for (auto& t : threads) t.join();
    std::set<std::string> ids;
    for (int i = 0; i < 8; ++i) {
        EXPECT_EQ(outcomes[i].state.query, "privacy policy retention question " + std::to_string(i));
        ids.insert(outcomes[i].state.query_id);
        expect_grammar(recorders[i]);
        EXPECT_EQ(recorders[i].events.front().data.at("query_id"), outcomes[i].state.query_id);
    }
    EXPECT_EQ(ids.size(), 8u);
    EXPECT_EQ(orch.sessions().turns("shared"), 8u);
}

TEST(Execute, DialogueContextReachesSqlPrompt) {
    Fixture f(kPolicy, {"SELECT COUNT(*) AS n FROM shipments"});
    auto model = std::make_shared<providers::ScriptedLanguageModel>(
        std::vector<std::string>{"SELECT COUNT(*) AS n FROM shipments"},
        providers::ScriptedLanguageModel::OnExhausted::repeat_last);
    f.res.providers.sql_model = model;
    Orchestrator orch(std::make_shared<SessionStore>());
    Recorder r1, r2;
    orch.run(request("how many shipments"), f.res, r1.sink());
    orch.run(request("and how many shipments now"), f.res, r2.sink());
    const auto prompts = model->prompts();
    ASSERT_EQ(prompts.size(), 2u);
    EXPECT_EQ(prompts[0].find("Conversation:"), std::string::npos);
    EXPECT_NE(prompts[1].find("user: how many shipments"), std::string::npos);
}

// ---------------------------------------------------------------------------

TEST(OptimizeAnswer, MixedResultRenumbersContiguously) {
    PipelineState s;
    s.query_id = "q";
    s.route_taken = {"route:sql+documents"};
    for (const char* id : {"A", "B", "C"}) {
        retrieval::Snippet sn;
        sn.chunk_id = id;
        sn.source_uri = std::string("file://") + id;
        sn.start_char = 10;
        sn.end_char = 20;
        s.retrieved_content.push_back(sn);
    }
    grounding::GroundedAnswer g;
    g.mode = grounding::GroundingMode::standard;
    g.support_rate = 1.0;
    g.sentences = {{"First claim.", {}, {"C"}, grounding::Verdict::supported, 0.9, false},
                   {"Second claim!", {}, {"A", "C"}, grounding::Verdict::supported, 0.8, false},
                   {"Third claim", {}, {"B"}, grounding::Verdict::supported, 0.7, false}};
    s.grounded.push_back(g);
    SqlOutcome o;
    o.datasource = "logistics";
    o.final = t2s::Final::answered;
    o.table = t2s::ResultTable{{"n"}, {{std::int64_t{3}}}, false};
    o.narrative = "Returned 1 row(s) after 1 attempt(s).";
    o.sql = {"SELECT COUNT(*) AS n FROM shipments"};
    s.sql_results.push_back(o);

    const auto a = optimize_answer(s);
    EXPECT_EQ(a.text,
              "First claim [1]. Second claim [2][1]! Third claim [3]\n\nReturned 1 row(s) after 1 attempt(s).");
    ASSERT_EQ(a.references.size(), 3u);
    EXPECT_EQ(a.references[0].chunk_id, "C");
    EXPECT_EQ(a.references[1].chunk_id, "A");
    EXPECT_EQ(a.references[2].chunk_id, "B");
    EXPECT_EQ(a.reference_block, "[1] file://C (chars 10-20)\n[2] file://A (chars 10-20)\n[3] file://B (chars 10-20)");
    EXPECT_TRUE(a.table);
    EXPECT_EQ(a.route, "sql+documents");
    std::string joined;
    for (const auto& p : token_pieces(a)) joined += p;
    EXPECT_EQ(joined, a.text);
}

TEST(OptimizeAnswer, NothingToAssemble) {
    PipelineState s;
    const auto a = optimize_answer(s);
    EXPECT_TRUE(a.no_answer);
    EXPECT_FALSE(a.text.empty());
    EXPECT_EQ(token_pieces(a), std::vector<std::string>{a.text});
}

TEST(Persistence, ReplayReproducesAnswer) {
    const auto dir = std::filesystem::temp_directory_path() / "esapiens_orch_replay";
    std::filesystem::remove_all(dir);
    json first, second;
    for (json* target : {&first, &second}) {
        Fixture f(kPolicy, {"SELECT carrier, COUNT(*) AS n FROM shipments GROUP BY carrier"});
        Orchestrator orch(std::make_shared<SessionStore>(), dir.string());
        Recorder rec;
        const auto out = orch.run(request("What does the privacy policy say about retention?"), f.res, rec.sink());
        ASSERT_TRUE(out.answer);
        const auto path = snapshot_path(dir.string(), "s1", out.state.query_id);
        const auto state = load_state(path);
        EXPECT_EQ(to_json(optimize_answer(state)), load_answer(path));
        EXPECT_EQ(to_json(state), to_json(out.state));
        *target = to_json(*out.answer);
    }
    EXPECT_EQ(first, second);
    std::filesystem::remove_all(dir);
}

TEST(Config, Validation) {
    OrchestratorConfig c;
    EXPECT_NO_THROW(c.validate());
    c.top_n = 300;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.relevance_floor = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
}
