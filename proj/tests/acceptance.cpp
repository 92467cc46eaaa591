// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "esapiens/evalkit.hpp"
#include "esapiens/grounding.hpp"
#include "esapiens/hnsw.hpp"
#include "esapiens/ingest.hpp"
#include "esapiens/retrieval.hpp"
#include "esapiens/service.hpp"
#include "esapiens/t2s.hpp"
#include "esapiens/text.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

using namespace esapiens;
namespace ts = testing_support;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

/// Collects the first few failure reasons; later ones only bump a counter.
class Checker {
public:
    void expect(bool ok, const std::string& why) {
        if (ok) return;
        ++failures_;
        if (notes_.size() < 3) notes_.push_back(why);
    }
    Outcome done(std::string summary) const {
        Outcome o{failures_ == 0, std::move(summary)};
        for (const auto& n : notes_) o.detail += "; " + n;
        if (failures_ > notes_.size()) o.detail += "; +" + std::to_string(failures_ - notes_.size()) + " more";
        return o;
    }

private:
    std::size_t failures_ = 0;
    std::vector<std::string> notes_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream o;
    o.precision(prec);
    o << v;
    return o.str();
}

// ---------------------------------------------------------------------------

Outcome funnel() {
    Checker c;
    const auto t0 = std::chrono::steady_clock::now();
    const auto store = ts::synthetic_store(1000, 60, 11);
    const auto index = retrieval::IndexHandle::build(store, std::make_shared<providers::HashEmbedder>(64));
    providers::LexicalReranker reranker;
    std::mt19937_64 rng(12);
    std::size_t min_cand = SIZE_MAX, max_cand = 0, min_sel = SIZE_MAX, max_sel = 0;
    for (int q = 0; q < 10; ++q) {
        const auto& src = store.chunks[rng() % store.chunks.size()].text;
        const auto query = src.substr(0, src.find(' ', src.find(' ', src.find(' ') + 1) + 1));
        const auto candidates = index->hybrid_retrieve(query);
        const auto selected = retrieval::rerank_and_select(*index, query, candidates, reranker);
        min_cand = std::min(min_cand, candidates.size());
        max_cand = std::max(max_cand, candidates.size());
        min_sel = std::min(min_sel, selected.size());
        max_sel = std::max(max_sel, selected.size());
        c.expect(candidates.size() == 200, "candidates=" + std::to_string(candidates.size()));
        c.expect(selected.size() == 50, "selected=" + std::to_string(selected.size()));
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 5.0, "runtime " + fmt(secs) + "s");
    return c.done("candidates=" + std::to_string(min_cand) + ".." + std::to_string(max_cand) +
                  " selected=" + std::to_string(min_sel) + ".." + std::to_string(max_sel) +
                  " build+10 queries=" + fmt(secs, 3) + "s (limit 5s)");
}

void check_chunks(Checker& c, const std::vector<ingest::Chunk>& chunks, const std::string& text, std::size_t n,
                  std::size_t window, std::size_t overlap) {
    const std::string tag = " n=" + std::to_string(n) + " w=" + std::to_string(window) + " o=" +
                            std::to_string(overlap);
    const auto starts = ts::expected_starts(n, window, overlap);
    if (chunks.size() != starts.size()) {
        c.expect(false, "chunk count" + tag);
        return;
    }
    std::vector<char> covered(n, 0);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto& ch = chunks[i];
        c.expect(ch.start_token == starts[i], "start" + tag);
        c.expect(ch.end_token - ch.start_token <= window, "window exceeded" + tag);
        c.expect(ch.text == text.substr(ch.start_char, ch.end_char - ch.start_char), "text slice" + tag);
        for (std::size_t t = ch.start_token; t < ch.end_token && t < n; ++t) covered[t] = 1;
    }
    c.expect(chunks.back().end_token == n, "tail" + tag);
    c.expect(std::all_of(covered.begin(), covered.end(), [](char x) { return x != 0; }), "coverage" + tag);
    std::string rebuilt = chunks.front().text;
    for (std::size_t i = 1; i < chunks.size(); ++i) {
        if (chunks[i].start_char > chunks[i - 1].end_char) {
            c.expect(false, "gap" + tag);
            return;
        }
        rebuilt += chunks[i].text.substr(chunks[i - 1].end_char - chunks[i].start_char);
    }
    c.expect(rebuilt == text, "round trip" + tag);
}

Outcome chunking() {
    Checker c;
    std::mt19937_64 rng(21);
    const auto fixed = ts::random_text(rng, 2500);
    c.expect(text::count_tokens(fixed) == 2500, "generator token count");
    const auto chunks = ingest::chunk_document({"doc", "t", fixed, "file://doc", {}}, {1000, 150});
    std::vector<std::size_t> starts;
    for (const auto& ch : chunks) starts.push_back(ch.start_token);
    c.expect(starts == std::vector<std::size_t>{0, 850, 1700}, "starts for 2500/1000/150");
    check_chunks(c, chunks, fixed, 2500, 1000, 150);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 3000;
        const std::size_t window = 1 + rng() % 1200;
        const std::size_t overlap = rng() % window;
        const auto text = ts::random_text(rng, n);
        check_chunks(c, ingest::chunk_document({"doc", "t", text, "file://doc", {}}, {window, overlap}), text, n,
                     window, overlap);
    }
    return c.done("starts={" + [&] {
        std::string s;
        for (auto x : starts) s += (s.empty() ? "" : ",") + std::to_string(x);
        return s;
    }() + "}, 1000 random triples checked for coverage and round trip");
}

Outcome bm25() {
    Checker c;
    std::mt19937_64 rng(31);
    const auto pool = ts::word_pool(40, 32);
    double worst = 0.0;
    std::size_t scored = 0;
    for (int corpus = 0; corpus < 100; ++corpus) {
        const std::size_t n = 1 + rng() % 50;
        ingest::ChunkStore store;
        std::vector<std::vector<std::string>> terms;
        for (std::size_t i = 0; i < n; ++i) {
            std::string t;
            for (std::size_t w = 0, len = rng() % 30; w < len; ++w) t += (w ? " " : "") + pool[rng() % pool.size()];
            if (t.empty()) t = "?!";
            ingest::Chunk ch;
            ch.chunk_id = "c" + std::to_string(i);
            ch.doc_id = "d" + std::to_string(i);
            ch.text = t;
            ch.end_char = t.size();
            store.chunks.push_back(ch);
            store.documents[ch.doc_id] = {ch.doc_id, ch.doc_id, "mem://" + ch.doc_id, {}};
            terms.push_back(text::index_terms(t));
        }
        const auto index = retrieval::IndexHandle::build(store, std::make_shared<providers::HashEmbedder>(16));
        std::vector<std::string> query;
        for (std::size_t k = 0, len = 1 + rng() % 5; k < len; ++k) query.push_back(pool[rng() % pool.size()]);
        for (std::size_t i = 0; i < n; ++i) {
            const double expect = ts::brute_force_bm25(terms, query, i);
            const double got = index->bm25_score(query, "c" + std::to_string(i));
            const double rel = expect == 0.0 ? std::abs(got) : std::abs(got - expect) / std::abs(expect);
            worst = std::max(worst, rel);
            ++scored;
            c.expect(rel <= 1e-9, "corpus " + std::to_string(corpus) + " chunk " + std::to_string(i) + " rel " +
                                      fmt(rel));
        }
    }
    return c.done(std::to_string(scored) + " scores over 100 corpora, max rel err=" + fmt(worst, 3) +
                  " (limit 1e-9)");
}

Outcome hnsw() {
    Checker c;
    const auto t0 = std::chrono::steady_clock::now();
    const auto store = ts::synthetic_store(10000, 40, 41);
    std::vector<std::vector<double>> base;
    base.reserve(store.chunks.size());
    for (const auto& ch : store.chunks) base.push_back(providers::deterministic_embed(ch.text, 64));
    retrieval::HnswParams params;
    params.ef_search = 100;
    retrieval::HnswIndex<double> index(64, params);
    for (const auto& v : base) index.add(v);
    std::mt19937_64 rng(42);
    double total = 0.0;
    for (int q = 0; q < 100; ++q) {
        const auto& src = store.chunks[rng() % store.chunks.size()].text;
        const auto cut = src.find(' ', src.size() / 2);
        const auto query = providers::deterministic_embed(src.substr(0, cut), 64);
        const auto truth = ts::exhaustive_top_k(base, query, 10);
        std::set<std::size_t> want(truth.begin(), truth.end());
        std::size_t hit = 0;
        for (const auto& [dist, id] : index.search(query, 10)) hit += want.count(id);
        total += static_cast<double>(hit) / 10.0;
    }
    const double recall = total / 100.0;
    const double secs = seconds_since(t0);
    c.expect(recall >= 0.95, "recall " + fmt(recall));
    c.expect(secs < 60.0, "runtime " + fmt(secs) + "s");
    return c.done("mean recall@10=" + fmt(recall) + " (min 0.95), 10000 vectors, ef_search=100, " + fmt(secs, 3) +
                  "s (limit 60s)");
}

Outcome grounding_check() {
    Checker c;
    std::vector<retrieval::Snippet> snippets;
    const std::vector<std::string> facts = {
        "The warehouse ships orders every Monday. Returns are accepted within thirty days.",
        "Customer support operates from nine to five."};
    for (std::size_t i = 0; i < facts.size(); ++i) {
        retrieval::Snippet s;
        s.chunk_id = "c" + std::to_string(i);
        s.doc_id = "d" + std::to_string(i);
        s.text = facts[i];
        s.rank = i + 1;
        snippets.push_back(s);
    }
    std::string summary;
    for (int rounds = 1; rounds <= 4; ++rounds) {
        providers::AdversarialLanguageModel llm;
        grounding::GroundingConfig cfg;
        cfg.mode = grounding::GroundingMode::strict;
        cfg.max_rounds = rounds;
        const auto a = grounding::grounded_generate("When are orders shipped?", snippets, cfg, llm,
                                                    providers::LexicalVerifier());
        c.expect(llm.calls() == static_cast<std::size_t>(rounds),
                 "max_rounds=" + std::to_string(rounds) + " calls=" + std::to_string(llm.calls()));
        std::size_t na = 0;
        for (const auto& s : a.sentences) {
            c.expect(s.verdict == grounding::Verdict::supported || s.text == "N/A", "unsupported sentence kept");
            if (s.verdict != grounding::Verdict::supported) na += s.text == "N/A";
        }
        c.expect(na >= 1, "no abstention for the fabricated claim");
        const auto m = evalkit::trace_metrics(grounding::trace_annotation(a));
        c.expect(m.hallucination.has_value() && *m.hallucination == 0.0, "strict hallucination not 0");
        if (rounds == 3) {
            summary = "max_rounds=3 calls=" + std::to_string(llm.calls()) + " abstained=" + std::to_string(na) +
                      " hallucination=" + (m.hallucination ? fmt(*m.hallucination) : std::string("undefined"));
        }
    }
    return c.done(summary + "; calls==max_rounds for 1..4");
}

class SpyExecutor final : public t2s::Executor {
public:
    explicit SpyExecutor(t2s::Executor& inner) : inner_(inner) {}
    t2s::ExecResult execute(const std::string& sql, std::size_t row_limit) override {
        ++calls;
        return inner_.execute(sql, row_limit);
    }
    t2s::DryRunResult dry_run(const std::string& sql) override {
        ++calls;
        return inner_.dry_run(sql);
    }
    std::size_t calls = 0;

private:
    t2s::Executor& inner_;
};

struct Env {
    explicit Env(t2s::Fixture f) : db(t2s::make_fixture_executor(f)), schema(t2s::fixture_schema(f)), spy(*db) {}
    std::unique_ptr<t2s::SqliteExecutor> db;
    t2s::SchemaContext schema;
    SpyExecutor spy;
    t2s::FixedClock clock{t2s::kFixtureToday};
};

std::vector<std::string> column(const t2s::ResultTable& t, std::string_view name) {
    std::vector<std::string> out;
    const auto idx = t.column_index(name);
    if (!idx) return out;
    for (const auto& r : t.rows) out.push_back(t2s::to_display(r[*idx]));
    return out;
}

bool contains(const std::string& hay, std::string_view needle) { return hay.find(needle) != std::string::npos; }

Outcome t2s_scenarios() {
    Checker c;
    using providers::ScriptedLanguageModel;
    using t2s::Final;
    int passed = 0;
    {
        Env env(t2s::Fixture::logistics);
        ScriptedLanguageModel llm({"SELECT * FROM shipments WHERE status LIKE '%pending%'",
                                   "SELECT * FROM shipments WHERE status = 'open'"});
        const auto r = t2s::run_with_retry("Which shipments are pending?", env.schema, llm, env.spy, env.clock);
        const bool ok = r.attempts.size() == 2 && r.attempts[0].validation == t2s::Validation::empty_result &&
                        contains(llm.prompts().at(1), "status ∈ {open, closed, shipped}") &&
                        r.final == Final::answered && r.table &&
                        column(*r.table, "shipment_id") == std::vector<std::string>{"1", "7"};
        c.expect(ok, "empty-result introspection");
        passed += ok;
    }
    {
        Env env(t2s::Fixture::logistics);
        ScriptedLanguageModel llm(
            {"SELECT shipment_id, distance FROM shipments WHERE origin = 'Oslo' ORDER BY shipment_id"});
        const auto r =
            t2s::run_with_retry("Show the distance in miles of shipments from Oslo", env.schema, llm, env.spy, env.clock);
        bool ok = r.final == Final::answered && r.table && contains(r.attempts[0].sql_text, "distance/1609.34");
        if (ok) {
            const auto idx = r.table->column_index("distance_miles");
            ok = idx && !r.table->rows.empty() &&
                 std::abs(std::get<double>(r.table->rows[0][*idx]) - 463000 / 1609.34) < 1e-9;
        }
        c.expect(ok, "metres to miles");
        passed += ok;
    }
    {
        Env env(t2s::Fixture::retail);
        ScriptedLanguageModel llm({"SELECT title, price FROM albums WHERE genre = 'hip-hop'"});
        const auto r = t2s::run_with_retry("What hip-hop albums do we sell?", env.schema, llm, env.spy, env.clock);
        const bool ok = r.final == Final::answered && r.table && contains(r.attempts[0].sql_text, "'%hip%hop%'") &&
                        column(*r.table, "title") == std::vector<std::string>{"DAMN.", "Illmatic"};
        c.expect(ok, "fuzzy genre match");
        passed += ok;
    }
    {
        Env env(t2s::Fixture::logistics);
        ScriptedLanguageModel llm({"SELECT shipment_id, shipped_at FROM shipments ORDER BY shipped_at"});
        const auto r = t2s::run_with_retry("Which shipments went out in the last 3 months?", env.schema, llm, env.spy,
                                           env.clock);
        bool ok = r.final == Final::answered && r.table && contains(r.attempts[0].sql_text, "shipped_at <= '2025-06-30'");
        if (ok) {
            for (const auto& d : column(*r.table, "shipped_at")) ok = ok && d <= std::string(t2s::kFixtureToday);
            ok = ok && column(*r.table, "shipment_id") == std::vector<std::string>{"4", "3", "1", "8"};
        }
        c.expect(ok, "relative date window");
        passed += ok;
    }
    {
        Env env(t2s::Fixture::retail);
        ScriptedLanguageModel llm({"SELECT a.album_id, a.title, SUM(i.quantity) AS units FROM albums a JOIN invoices i "
                                   "ON a.album_id = i.album_id GROUP BY a.album_id, a.title ORDER BY units DESC LIMIT 2;\n"
                                   "SELECT i.album_id, c.country FROM invoices i JOIN customers c ON c.customer_id = "
                                   "i.customer_id ORDER BY i.invoice_id"});
        const auto r = t2s::run_with_retry("Top two albums by units sold and the countries of their buyers", env.schema,
                                           llm, env.spy, env.clock);
        const auto oracle = env.db->execute(
            "WITH top AS (SELECT a.album_id, a.title, SUM(i.quantity) AS units FROM albums a JOIN invoices i ON "
            "a.album_id = i.album_id GROUP BY a.album_id, a.title ORDER BY units DESC LIMIT 2) "
            "SELECT top.album_id, top.title, top.units, c.country FROM top JOIN invoices i ON i.album_id = top.album_id "
            "JOIN customers c ON c.customer_id = i.customer_id ORDER BY top.units DESC, i.invoice_id",
            100);
        const bool ok = r.final == Final::answered && r.table && oracle.table && r.table->rows == oracle.table->rows &&
                        r.table->columns == std::vector<std::string>{"album_id", "title", "units", "country"};
        c.expect(ok, "two-step merge");
        passed += ok;
    }
    int rejected = 0;
    const std::vector<std::string> hostile = {"DROP TABLE customers", "UPDATE albums SET price = 0",
                                              "SELECT name, email FROM customers", "SELECT 1; DELETE FROM invoices",
                                              "SELECT title FROM albums; SELECT card_number FROM customers"};
    for (const auto& sql : hostile) {
        Env env(t2s::Fixture::retail);
        ScriptedLanguageModel llm({sql});
        const auto r = t2s::run_with_retry("do it", env.schema, llm, env.spy, env.clock);
        const bool ok = r.final == Final::rejected && env.spy.calls == 0 && !r.table;
        c.expect(ok, "not rejected cleanly: " + sql);
        rejected += ok;
    }
    return c.done(std::to_string(passed) + "/5 scenarios answered correctly, " + std::to_string(rejected) + "/" +
                  std::to_string(hostile.size()) + " hostile statements rejected with 0 executor calls");
}

Outcome bounded_retries() {
    Checker c;
    std::string calls;
    for (int m = 0; m <= 5; ++m) {
        for (const std::string bad : {"SELEC * FRM shipments", "SELECT nope FROM shipments"}) {
            Env env(t2s::Fixture::logistics);
            providers::ScriptedLanguageModel llm({bad}, providers::ScriptedLanguageModel::OnExhausted::repeat_last);
            t2s::T2sConfig cfg;
            cfg.max_retries = m;
            const auto r = t2s::run_with_retry("q", env.schema, llm, env.spy, env.clock, cfg);
            c.expect(llm.calls() == static_cast<std::size_t>(m + 1),
                     "max_retries=" + std::to_string(m) + " calls=" + std::to_string(llm.calls()));
            c.expect(r.final == t2s::Final::reformulation_suggested, "final state for max_retries=" + std::to_string(m));
            if (bad[4] == 'C') calls += (calls.empty() ? "" : ",") + std::to_string(llm.calls());
        }
    }
    return c.done("calls for max_retries 0..5 = {" + calls + "}, final=reformulation_suggested");
}

evalkit::ChunkCatalog grid_catalog(const std::vector<std::string>& docs) {
    evalkit::ChunkCatalog cat;
    for (const auto& d : docs) {
        for (std::size_t i = 0; i < 3; ++i) cat[d + "#" + std::to_string(i)] = {d, i * 100, (i + 1) * 100};
    }
    return cat;
}

evalkit::GoldAnnotation gold(std::string id, std::vector<evalkit::EvidenceSpan> spans) {
    evalkit::GoldAnnotation g;
    g.query_id = std::move(id);
    g.query = "q";
    g.evidence_spans = std::move(spans);
    g.dataset = "synthetic";
    return g;
}

Outcome evalkit_check() {
    Checker c;
    const auto cat = grid_catalog({"a", "b"});
    // Chunks are [0,100), [100,200), [200,300) in each document.
    const std::vector<evalkit::GoldAnnotation> g{
        gold("q1", {{"a", 10, 20}}),
        gold("q2", {{"a", 150, 160}}),
        gold("q3", {{"a", 250, 260}, {"b", 5, 6}}),
        gold("q4", {{"b", 95, 105}}),
        gold("q5", {{"a", 100, 110}}),
        gold("q6", {{"b", 0, 300}}),
        gold("q7", {{"a", 0, 10}, {"a", 110, 120}, {"a", 210, 220}}),
        gold("q8", {{"b", 299, 300}}),
        gold("q9", {{"a", 50, 60}}),
        gold("q10", {{"a", 99, 101}}),
    };
    const evalkit::RetrievalRun run{
        {"q1", {"a#0", "a#1", "a#2"}}, {"q2", {"a#0", "a#1", "a#2"}}, {"q3", {"b#0", "a#2", "a#0"}},
        {"q4", {"b#1", "b#2"}},        {"q5", {"a#0"}},               {"q6", {"b#2", "b#1", "b#0"}},
        {"q7", {"a#2", "b#0", "a#1"}}, {"q8", {"a#2", "b#2"}},        {"q10", {"a#1", "a#0"}},
    };
    // Per-query values enumerated by hand; q9 is absent from the run.
    const double recall[3][10] = {{1, 0, 0.5, 1, 0, 1, 1.0 / 3, 0, 0, 1},
                                  {1, 1, 1, 1, 0, 1, 1.0 / 3, 1, 0, 1},
                                  {1, 1, 1, 1, 0, 1, 2.0 / 3, 1, 0, 1}};
    const double precision[3][10] = {{1, 0, 1, 1, 0, 1, 1, 0, 0, 1},
                                     {0.5, 0.5, 1, 0.5, 0, 1, 0.5, 0.5, 0, 1},
                                     {1.0 / 3, 1.0 / 3, 2.0 / 3, 0.5, 0, 1, 2.0 / 3, 0.5, 0, 1}};
    std::string got;
    for (std::size_t k = 1; k <= 3; ++k) {
        double r = 0, p = 0;
        for (int q = 0; q < 10; ++q) {
            r += recall[k - 1][q];
            p += precision[k - 1][q];
        }
        r *= 10.0;
        p *= 10.0;
        const double gr = evalkit::recall_at_k(run, g, cat, k).value;
        const double gp = evalkit::precision_at_k(run, g, cat, k).value;
        c.expect(std::abs(gr - r) <= 1e-9, "recall@" + std::to_string(k) + " " + fmt(gr, 10) + " vs " + fmt(r, 10));
        c.expect(std::abs(gp - p) <= 1e-9, "precision@" + std::to_string(k) + " " + fmt(gp, 10) + " vs " + fmt(p, 10));
        got += " R@" + std::to_string(k) + "=" + fmt(gr, 6) + " P@" + std::to_string(k) + "=" + fmt(gp, 6);
    }

    std::mt19937_64 rng(81);
    const auto big = grid_catalog({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p",
                                   "q", "r", "s", "t"});
    std::vector<std::string> ids;
    for (const auto& [id, _] : big) ids.push_back(id);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<evalkit::GoldAnnotation> gs;
        evalkit::RetrievalRun rr;
        for (int q = 0; q < 5; ++q) {
            const std::string qid = "q" + std::to_string(q);
            std::vector<evalkit::EvidenceSpan> spans;
            for (std::size_t s = 0, n = 1 + rng() % 4; s < n; ++s) {
                const std::size_t begin = rng() % 299;
                spans.push_back({std::string(1, static_cast<char>('a' + rng() % 20)), begin, begin + 1 + rng() % (300 - begin)});
            }
            gs.push_back(gold(qid, spans));
            auto shuffled = ids;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            shuffled.resize(rng() % shuffled.size());
            rr[qid] = shuffled;
        }
        double prev = -1;
        for (std::size_t k = 1; k <= 60; ++k) {
            const double v = evalkit::recall_at_k(rr, gs, big, k).value;
            c.expect(v >= prev, "recall decreased at k=" + std::to_string(k));
            prev = v;
        }
    }

    const auto rep = evalkit::ablation_report({{"Chunk = 500", run, cat}}, g);
    bool layout = rep.tables.size() == 1 && rep.tables[0].rows.size() == 2 && rep.tables[0].rows[1].dataset == "ALL";
    if (layout) {
        const auto& row = rep.tables[0].rows[0];
        layout = row.recall.size() == 6 && row.precision.size() == 6;
    }
    const auto text = rep.to_text();
    for (const auto* k : {"k=1 ", "k=2 ", "k=4 ", "k=8 ", "k=16", "k=50"}) layout = layout && contains(text, k);
    c.expect(layout, "ablation layout");
    return c.done("10-query gold set:" + got + "; recall monotone over 200 random runs; ablation has " +
                  (layout ? "6+6" : "wrong") + " columns");
}

Outcome trace_check() {
    Checker c;
    evalkit::TraceAnnotation ctx;
    ctx.answer = "x";
    ctx.supported_spans = {{0, 1}};
    ctx.context_length = 1000;
    ctx.relevant_spans = {{0, 400}};
    ctx.utilized_spans = {{100, 400}};
    const auto m = evalkit::trace_metrics(ctx);
    const auto near = [](const std::optional<double>& v, double want) { return v && std::abs(*v - want) <= 1e-12; };
    c.expect(near(m.completeness, 0.75), "completeness");
    c.expect(near(m.utilization, 0.3), "utilization");
    c.expect(near(m.context_relevance, 0.4), "relevance");

    evalkit::TraceAnnotation ans;
    ans.answer = std::string(200, 'a');
    ans.supported_spans = {{0, 150}};
    ans.unsupported_spans = {{150, 200}};
    const auto h = evalkit::trace_metrics(ans).hallucination;
    c.expect(near(h, 0.25), "hallucination 0.25");

    evalkit::TraceAnnotation extractive;
    extractive.answer = "Copied sentence. Another one.";
    extractive.supported_spans = {{0, 16}, {17, 29}};
    const auto h0 = evalkit::trace_metrics(extractive).hallucination;
    c.expect(h0 && *h0 == 0.0, "extractive hallucination");

    std::mt19937_64 rng(91);
    const auto rand_spans = [&](std::size_t bound) {
        std::vector<Span> out;
        for (std::size_t i = 0, n = rng() % 6; i < n && bound > 0; ++i) {
            const std::size_t s = rng() % bound;
            out.push_back({s, s + rng() % (bound - s + 1)});
        }
        return out;
    };
    for (int trial = 0; trial < 10000; ++trial) {
        evalkit::TraceAnnotation t;
        t.answer = std::string(1 + rng() % 400, 'w');
        t.unsupported_spans = rand_spans(t.answer.size());
        t.supported_spans = {{0, t.answer.size()}};
        t.context_length = rng() % 3000;
        t.relevant_spans = rand_spans(t.context_length);
        t.utilized_spans = rand_spans(t.context_length);
        const auto r = evalkit::trace_metrics(t);
        for (const auto* v : {&r.completeness, &r.utilization, &r.context_relevance, &r.hallucination}) {
            c.expect(!*v || (**v >= 0.0 && **v <= 1.0), "metric outside [0,1] in trial " + std::to_string(trial));
        }
    }
    return c.done("completeness=" + fmt(m.completeness.value_or(-1)) + " utilization=" + fmt(m.utilization.value_or(-1)) +
                  " relevance=" + fmt(m.context_relevance.value_or(-1)) + " hallucination=" + fmt(h.value_or(-1)) +
                  "/" + fmt(h0.value_or(-1)) + "; 10000 random annotations within [0,1]");
}

class PromptHashSqlModel final : public providers::LanguageModel {
public:
    explicit PromptHashSqlModel(std::vector<std::string> options) : options_(std::move(options)) {}
    std::string complete(const std::string& prompt) override {
        return options_[std::hash<std::string>{}(prompt) % options_.size()];
    }

private:
    std::vector<std::string> options_;
};

Outcome service_grammar() {
    Checker c;
    using nlohmann::json;
    config::AppConfig cfg;
    cfg.chunking.window_tokens = 20;
    cfg.chunking.overlap_tokens = 5;
    auto bundle = config::build_providers(config::ProviderSettings{});
    bundle.providers.sql_model = std::make_shared<PromptHashSqlModel>(std::vector<std::string>{
        "SELECT carrier, COUNT(*) AS n FROM shipments GROUP BY carrier", "SELEC nonsense", "DROP TABLE shipments",
        "SELECT * FROM shipments WHERE status = 'lost'"});
    bundle.providers.web = std::make_shared<providers::StaticWebSearch>(
        std::vector<providers::WebResult>{{"Guide", "https://example.org/guide", "A general guide to policies."}});
    service::QaService svc(cfg, std::move(bundle), std::make_shared<t2s::FixedClock>(t2s::kFixtureToday));
    const json docs = json::array(
        {{{"doc_id", "privacy"}, {"text", "The privacy policy sets a retention period of 90 days for customer "
                                          "records. Deletion requests are handled within 30 days."}},
         {{"doc_id", "travel"}, {"text", "Economy class is required for flights under six hours."}}});
    c.expect(svc.ingest({{"documents", docs}}).status == 200, "ingest");
    c.expect(svc.register_datasource({{"name", "logistics"}, {"fixture", "logistics"}}).status == 200, "datasource");
    svc.add_plugin({"weather", {"forecast"}, std::make_shared<orchestrator::FunctionPlugin>([](const json& req) {
                        if (req.at("query").get<std::string>().size() % 2 == 0) {
                            return json{{"status", "error"}, {"message", "quota"}};
                        }
                        return json{{"status", "ok"}, {"text", "Sunny."}};
                    })});

    const std::vector<std::string> stems = {"What is the retention period", "how many shipments per carrier",
                                            "plot shipments by status",     "forecast for tomorrow",
                                            "describe this image",          "search the web for hotel rules",
                                            "zebra umbrella",               "which flights need economy class"};
    const std::vector<std::string> tails = {"", "please", "now", "last month", "in miles", "?", "ünïcode"};
    constexpr int kQueries = 1000;
    constexpr int kThreads = 8;
    std::vector<std::string> failures(kQueries);
    std::vector<std::size_t> events(kQueries);
    std::vector<std::thread> pool;
    for (int t = 0; t < kThreads; ++t) {
        pool.emplace_back([&, t] {
            std::mt19937 rng(777 + t);
            for (int i = t; i < kQueries; i += kThreads) {
                orchestrator::QueryRequest r;
                r.session_id = "s" + std::to_string(rng() % 30);
                r.query = stems[rng() % stems.size()] + " " + tails[rng() % tails.size()];
                r.mode = rng() % 2 ? grounding::GroundingMode::strict : grounding::GroundingMode::standard;
                if (const auto d = rng() % 4; d == 0) r.datasource = "logistics";
                else if (d == 1) r.datasource = "missing";
                try {
                    std::string raw;
                    svc.stream(r, [&](std::string_view chunk) {
                        raw.append(chunk);
                        return true;
                    });
                    const auto ev = service::parse_sse(raw);
                    events[i] = ev.size();
                    std::size_t terminals = 0;
                    for (std::size_t k = 0; k < ev.size(); ++k) {
                        terminals += ev[k].event == "done" || ev[k].event == "error";
                        if (k > 0 && ev[k].seq <= ev[k - 1].seq) failures[i] = "seq not increasing";
                    }
                    if (terminals != 1) failures[i] = "terminal events=" + std::to_string(terminals);
                    if (ev.empty() || (ev.back().event != "done" && ev.back().event != "error")) {
                        failures[i] = "stream does not end with a terminal event";
                    }
                    if (const auto g = service::check_grammar(ev)) failures[i] = *g;
                } catch (const std::exception& e) {
                    failures[i] = e.what();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    std::size_t ok = 0, total_events = 0;
    for (int i = 0; i < kQueries; ++i) {
        total_events += events[i];
        ok += failures[i].empty();
        c.expect(failures[i].empty(), "query " + std::to_string(i) + ": " + failures[i]);
    }
    return c.done(std::to_string(ok) + "/" + std::to_string(kQueries) + " streams well formed (" +
                  std::to_string(total_events) + " events), backend only");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"retrieval funnel 200 -> 50", funnel},
        {"chunking stride and round trip", chunking},
        {"bm25 matches brute force", bm25},
        {"hnsw recall@10", hnsw},
        {"grounding rounds and strict abstention", grounding_check},
        {"text-to-sql scenarios and guardrails", t2s_scenarios},
        {"text-to-sql bounded retries", bounded_retries},
        {"retrieval metrics and ablation layout", evalkit_check},
        {"trace metrics", trace_check},
        {"stream event grammar", service_grammar},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s  [%2zu] %-40s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
