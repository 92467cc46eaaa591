#include "esapiens/common.hpp"
#include "esapiens/config.hpp"
#include "esapiens/evalkit.hpp"
#include "esapiens/ingest.hpp"
#include "esapiens/orchestrator.hpp"
#include "esapiens/service.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>
#include <thread>

using namespace esapiens;
using nlohmann::json;

namespace {

config::AppConfig load_or_default(const std::string& path) {
    return path.empty() ? config::parse_config("") : config::load_config(path);
}

std::vector<std::size_t> parse_ks(const std::string& s) {
    std::vector<std::size_t> ks;
    for (const auto& part : split(s, ',')) {
        const auto t = trim(part);
        if (t.empty()) continue;
        try {
            std::size_t used = 0;
            const auto k = std::stoul(t, &used);
            if (used != t.size() || k == 0) throw std::invalid_argument(t);
            ks.push_back(k);
        } catch (const std::exception&) {
            throw ConfigError("--ks expects positive integers, got '" + t + "'");
        }
    }
    if (ks.empty()) throw ConfigError("--ks is empty");
    return ks;
}

int serve(const std::string& config_path, int port, const std::string& host) {
    auto cfg = load_or_default(config_path);
    if (port >= 0) cfg.service.port = port;
    if (!host.empty()) cfg.service.host = host;

    // Handle SIGINT/SIGTERM on a dedicated thread; worker threads inherit the mask.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::QaService svc(cfg);
    service::HttpServer server(svc);
    const int bound = server.bind(cfg.service.host, cfg.service.port);
    std::cerr << "listening on " << cfg.service.host << ":" << bound << "\n";

    std::atomic<bool> signalled{false};
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        signalled = true;
        std::cerr << "shutting down\n";
        server.stop();
    });
    server.listen();
    // listen() can also return on its own; wake the waiter so it exits.
    if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
}

struct QueryOptions {
    std::string config;
    std::string question;
    std::string mode;
    std::string session = "cli";
    std::string corpus;
    std::string fixture;
    std::string sqlite;
    std::string datasource;
    bool events = false;
    bool as_json = false;
};

int query(const QueryOptions& o) {
    auto cfg = load_or_default(o.config);
    service::QaService svc(cfg);
    if (!o.corpus.empty()) {
        const auto r = svc.ingest({{"corpus_path", o.corpus}});
        if (r.status != 200) throw IngestError(r.body.value("message", "ingest failed"));
    }
    std::optional<std::string> ds;
    if (!o.fixture.empty() || !o.sqlite.empty()) {
        const std::string name = o.datasource.empty() ? (o.fixture.empty() ? "db" : o.fixture) : o.datasource;
        json reg = {{"name", name}};
        if (!o.fixture.empty()) reg["fixture"] = o.fixture;
        if (!o.sqlite.empty()) reg["path"] = o.sqlite;
        const auto r = svc.register_datasource(reg);
        if (r.status != 200) throw ConfigError(r.body.value("message", "datasource registration failed"));
        ds = name;
    } else if (!o.datasource.empty()) {
        ds = o.datasource;
    }

    json body = {{"session_id", o.session}, {"query", o.question}};
    if (!o.mode.empty()) body["mode"] = o.mode;
    if (ds) body["datasource"] = *ds;
    auto parsed = svc.parse_query(body);
    if (auto* err = std::get_if<service::Response>(&parsed)) {
        std::cerr << err->body.value("message", "invalid query") << "\n";
        return 2;
    }
    std::string raw;
    const auto outcome = svc.stream(std::get<orchestrator::QueryRequest>(parsed), [&](std::string_view chunk) {
        if (o.events) std::cout << chunk << std::flush;
        raw.append(chunk);
        return true;
    });
    if (o.events) return outcome.answer ? 0 : 1;
    if (!outcome.answer) {
        const auto events = service::parse_sse(raw);
        std::cerr << "error: " << (events.empty() ? "no events" : events.back().data.value("message", "unknown")) << "\n";
        return 1;
    }
    if (o.as_json) {
        std::cout << orchestrator::to_json(*outcome.answer).dump(2) << "\n";
        return 0;
    }
    const auto& a = *outcome.answer;
    std::cout << a.text << "\n";
    if (!a.reference_block.empty()) std::cout << "\nReferences:\n" << a.reference_block << "\n";
    if (a.table) {
        std::cout << "\n" << join(a.table->columns, " | ") << "\n";
        for (const auto& row : a.table->rows) {
            std::vector<std::string> cells;
            for (const auto& v : row) cells.push_back(t2s::to_display(v));
            std::cout << join(cells, " | ") << "\n";
        }
    }
    for (const auto& w : a.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int ingest_cmd(const std::string& config_path, const std::string& input, const std::string& store,
               const std::string& index_dir, std::optional<std::size_t> window, std::optional<std::size_t> overlap,
               const std::string& tokenizer) {
    auto cfg = load_or_default(config_path);
    auto policy = cfg.chunking;
    if (window) policy.window_tokens = *window;
    if (overlap) policy.overlap_tokens = *overlap;
    if (!tokenizer.empty()) policy.tokenizer = text::parse_tokenizer_id(tokenizer);
    policy.validate();
    const auto stats = ingest::ingest_corpus(input, policy, store);
    json out = {{"docs", stats.docs},
                {"chunks", stats.chunks},
                {"document_tokens", stats.document_tokens},
                {"chunk_tokens", stats.chunk_tokens},
                {"store", store}};
    if (!index_dir.empty()) {
        const auto bundle = config::build_providers(cfg.providers);
        const auto index =
            retrieval::IndexHandle::build(ingest::load_store(store), bundle.embedder, cfg.retrieval, policy);
        index->save(index_dir);
        out["index_manifest"] = index->manifest();
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int eval_cmd(const std::vector<std::string>& runs, const std::vector<std::string>& stores,
             std::vector<std::string> policies, const std::string& gold_path, const std::string& ks_text,
             const std::string& traces, bool as_json) {
    if (!traces.empty()) {
        const auto summary = evalkit::summarize_traces(evalkit::read_traces_jsonl(traces));
        std::cout << (as_json ? summary.to_json().dump(2) : summary.to_text()) << "\n";
        if (runs.empty()) return 0;
    }
    if (runs.empty() || gold_path.empty()) throw ConfigError("eval needs --run, --store and --gold");
    if (runs.size() != stores.size()) throw ConfigError("give one --store per --run");
    if (policies.empty()) {
        for (std::size_t i = 0; i < runs.size(); ++i) policies.push_back(runs.size() == 1 ? "run" : runs[i]);
    }
    if (policies.size() != runs.size()) throw ConfigError("give one --policy per --run");

    const auto gold = evalkit::read_gold_jsonl(gold_path);
    std::vector<evalkit::AblationRun> ablation;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        ablation.push_back({policies[i], evalkit::read_run(runs[i]), evalkit::catalog_from(ingest::load_store(stores[i]))});
    }
    const auto report = evalkit::ablation_report(ablation, gold, parse_ks(ks_text));
    std::cout << (as_json ? report.to_json().dump(2) : report.to_text()) << "\n";
    return 0;
}

int replay(const std::string& state_path, bool check) {
    const auto state = orchestrator::load_state(state_path);
    const auto answer = orchestrator::to_json(orchestrator::optimize_answer(state));
    std::cout << answer.dump(2) << "\n";
    if (check) {
        const auto stored = orchestrator::load_answer(state_path);
        if (stored != answer) {
            std::cerr << "replayed answer differs from the stored one\n";
            return 1;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid retrieval and text-to-SQL question answering"};
    app.require_subcommand(1);

    std::string config_path;
    int port = -1;
    std::string host;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP/SSE service");
    serve_cmd->add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    serve_cmd->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--host", host, "Bind address");

    QueryOptions q;
    auto* query_cmd = app.add_subcommand("query", "Answer one question and print the assembled answer");
    query_cmd->add_option("--config", q.config, "INI configuration file")->check(CLI::ExistingFile);
    query_cmd->add_option("--question,-q", q.question, "Question text")->required();
    query_cmd->add_option("--mode", q.mode, "standard or strict")->check(CLI::IsMember({"standard", "strict"}));
    query_cmd->add_option("--session", q.session, "Session id");
    query_cmd->add_option("--corpus", q.corpus, "JSONL documents to index first")->check(CLI::ExistingFile);
    auto* fixture = query_cmd->add_option("--fixture", q.fixture, "Built-in database")
                        ->check(CLI::IsMember({"logistics", "retail"}));
    query_cmd->add_option("--sqlite", q.sqlite, "SQLite database file")->check(CLI::ExistingFile)->excludes(fixture);
    query_cmd->add_option("--datasource", q.datasource, "Datasource name");
    query_cmd->add_flag("--events", q.events, "Print the raw SSE stream");
    query_cmd->add_flag("--json", q.as_json, "Print the final answer as JSON");

    std::string input, store, index_dir, tokenizer;
    std::optional<std::size_t> window, overlap;
    auto* ingest_sub = app.add_subcommand("ingest", "Chunk a JSONL corpus into a chunk store");
    ingest_sub->add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    ingest_sub->add_option("--input", input, "JSONL documents")->required()->check(CLI::ExistingFile);
    ingest_sub->add_option("--store", store, "Output chunk store (JSONL)")->required();
    ingest_sub->add_option("--index-dir", index_dir, "Also build and save indexes here");
    ingest_sub->add_option("--window", window, "Window size in tokens");
    ingest_sub->add_option("--overlap", overlap, "Overlap in tokens");
    ingest_sub->add_option("--tokenizer", tokenizer, "word-punct or whitespace");

    std::vector<std::string> runs, stores, policies;
    std::string gold, ks = "1,2,4,8,16,50", traces;
    bool eval_json = false;
    auto* eval_sub = app.add_subcommand("eval", "Retrieval recall/precision and generation metrics");
    eval_sub->add_option("--run", runs, "Retrieval run file (repeatable)")->check(CLI::ExistingFile);
    eval_sub->add_option("--store", stores, "Chunk store of each run (repeatable)")->check(CLI::ExistingFile);
    eval_sub->add_option("--policy", policies, "Label of each run (repeatable)");
    eval_sub->add_option("--gold", gold, "Gold annotations (JSONL)")->check(CLI::ExistingFile);
    eval_sub->add_option("--ks", ks, "Comma-separated cutoffs");
    eval_sub->add_option("--traces", traces, "Annotated answers (JSONL) for generation metrics")
        ->check(CLI::ExistingFile);
    eval_sub->add_flag("--json", eval_json, "JSON output");

    std::string state_path;
    bool check = false;
    auto* replay_sub = app.add_subcommand("replay", "Rebuild the final answer from a saved state");
    replay_sub->add_option("--state", state_path, "Snapshot file")->required()->check(CLI::ExistingFile);
    replay_sub->add_flag("--check", check, "Fail if the result differs from the stored answer");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve_cmd) return serve(config_path, port, host);
        if (*query_cmd) return query(q);
        if (*ingest_sub) return ingest_cmd(config_path, input, store, index_dir, window, overlap, tokenizer);
        if (*eval_sub) return eval_cmd(runs, stores, policies, gold, ks, traces, eval_json);
        if (*replay_sub) return replay(state_path, check);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
