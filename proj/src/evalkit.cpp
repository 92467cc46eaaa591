#include "esapiens/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

namespace esapiens::evalkit {

namespace {

bool overlaps(const ChunkRange& c, const EvidenceSpan& s) {
    return c.doc_id == s.doc_id && std::max(c.start_char, s.start_char) < std::min(c.end_char, s.end_char);
}

const ChunkRange& locate(const ChunkCatalog& catalog, const std::string& chunk_id) {
    const auto it = catalog.find(chunk_id);
    if (it == catalog.end()) throw EvalError("run references unknown chunk_id " + chunk_id);
    return it->second;
}

std::vector<std::string> lines_of(const std::string& path) {
    std::vector<std::string> out;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<Span> spans_from_json(const nlohmann::json& j) {
    std::vector<Span> out;
    for (const auto& s : j) {
        if (!s.is_array() || s.size() != 2) throw EvalError("span must be [start, end]");
        out.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
    }
    return out;
}

nlohmann::json spans_to_json(const std::vector<Span>& spans) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : spans) out.push_back({s.begin, s.end});
    return out;
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

ChunkCatalog catalog_from(const std::vector<ingest::Chunk>& chunks) {
    ChunkCatalog out;
    for (const auto& c : chunks) out[c.chunk_id] = {c.doc_id, c.start_char, c.end_char};
    return out;
}

ChunkCatalog catalog_from(const ingest::ChunkStore& store) { return catalog_from(store.chunks); }

GoldAnnotation parse_gold(const nlohmann::json& j) {
    try {
        GoldAnnotation g;
        g.query_id = j.at("query_id").get<std::string>();
        g.query = j.value("query", "");
        for (const auto& s : j.at("evidence_spans")) {
            if (s.is_array()) {
                g.evidence_spans.push_back({s.at(0).get<std::string>(), s.at(1).get<std::size_t>(),
                                            s.at(2).get<std::size_t>()});
            } else {
                g.evidence_spans.push_back({s.at("doc_id").get<std::string>(),
                                            s.at("start_char").get<std::size_t>(),
                                            s.at("end_char").get<std::size_t>()});
            }
        }
        if (j.contains("reference_answer") && !j.at("reference_answer").is_null()) {
            g.reference_answer = j.at("reference_answer").get<std::string>();
        }
        g.dataset = j.value("dataset", "default");
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw EvalError(std::string("malformed gold annotation: ") + e.what());
    }
}

std::vector<GoldAnnotation> read_gold_jsonl(const std::string& path) {
    std::vector<GoldAnnotation> out;
    std::size_t n = 0;
    for (const auto& line : lines_of(path)) {
        ++n;
        if (blank(line)) continue;
        try {
            out.push_back(parse_gold(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw EvalError(path + " line " + std::to_string(n) + ": " + e.what());
        } catch (const EvalError& e) {
            throw EvalError(path + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    validate_gold(out);
    return out;
}

RetrievalRun read_run(const std::string& path) {
    const auto content = read_file(path);
    RetrievalRun run;
    try {
        const auto whole = nlohmann::json::parse(content, nullptr, false);
        if (!whole.is_discarded() && whole.is_object() && !whole.contains("query_id")) {
            for (const auto& [qid, ids] : whole.items()) run[qid] = ids.get<std::vector<std::string>>();
        } else {
            for (const auto& line : lines_of(path)) {
                if (blank(line)) continue;
                const auto j = nlohmann::json::parse(line);
                run[j.at("query_id").get<std::string>()] = j.at("chunk_ids").get<std::vector<std::string>>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw EvalError(path + ": malformed run: " + e.what());
    }
    validate_run(run);
    return run;
}

void validate_gold(const std::vector<GoldAnnotation>& gold) {
    std::set<std::string> seen;
    for (const auto& g : gold) {
        if (!seen.insert(g.query_id).second) throw EvalError("duplicate gold query_id " + g.query_id);
        if (g.evidence_spans.empty()) throw EvalError("gold query " + g.query_id + " has no evidence spans");
        for (const auto& s : g.evidence_spans) {
            if (s.end_char <= s.start_char) throw EvalError("empty or reversed span in gold query " + g.query_id);
        }
    }
}

void validate_run(const RetrievalRun& run) {
    for (const auto& [qid, ids] : run) {
        std::set<std::string> seen;
        for (const auto& id : ids) {
            if (!seen.insert(id).second) throw EvalError("duplicate chunk_id " + id + " in run for " + qid);
        }
    }
}

double query_recall(const std::vector<std::string>& ranked, const GoldAnnotation& gold,
                    const ChunkCatalog& catalog, std::size_t k) {
    if (k == 0) throw EvalError("k must be >= 1");
    const std::size_t depth = std::min(k, ranked.size());
    std::size_t covered = 0;
    for (const auto& span : gold.evidence_spans) {
        for (std::size_t i = 0; i < depth; ++i) {
            if (overlaps(locate(catalog, ranked[i]), span)) {
                ++covered;
                break;
            }
        }
    }
    return static_cast<double>(covered) / static_cast<double>(gold.evidence_spans.size());
}

double query_precision(const std::vector<std::string>& ranked, const GoldAnnotation& gold,
                       const ChunkCatalog& catalog, std::size_t k) {
    if (k == 0) throw EvalError("k must be >= 1");
    const std::size_t depth = std::min(k, ranked.size());
    if (depth == 0) return 0.0;
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < depth; ++i) {
        const auto& c = locate(catalog, ranked[i]);
        if (std::any_of(gold.evidence_spans.begin(), gold.evidence_spans.end(),
                        [&](const EvidenceSpan& s) { return overlaps(c, s); })) {
            ++relevant;
        }
    }
    return static_cast<double>(relevant) / static_cast<double>(depth);
}

namespace {

template <typename PerQuery>
MetricResult mean_metric(const RetrievalRun& run, const std::vector<GoldAnnotation>& gold,
                         const ChunkCatalog& catalog, std::size_t k, PerQuery per_query) {
    if (k == 0) throw EvalError("k must be >= 1");
    MetricResult r;
    double total = 0.0;
    static const std::vector<std::string> kNone;
    for (const auto& g : gold) {
        const auto it = run.find(g.query_id);
        if (it == run.end()) r.missing_queries.push_back(g.query_id);
        total += per_query(it == run.end() ? kNone : it->second, g, catalog, k);
        ++r.queries;
    }
    r.value = r.queries ? 100.0 * total / static_cast<double>(r.queries) : 0.0;
    return r;
}

}  // namespace

MetricResult recall_at_k(const RetrievalRun& run, const std::vector<GoldAnnotation>& gold,
                         const ChunkCatalog& catalog, std::size_t k) {
    return mean_metric(run, gold, catalog, k, query_recall);
}

MetricResult precision_at_k(const RetrievalRun& run, const std::vector<GoldAnnotation>& gold,
                            const ChunkCatalog& catalog, std::size_t k) {
    return mean_metric(run, gold, catalog, k, query_precision);
}

// ---------------------------------------------------------------------------

std::size_t union_length(std::vector<Span> spans) {
    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
    std::size_t total = 0;
    std::size_t cur_begin = 0, cur_end = 0;
    bool open = false;
    for (const auto& s : spans) {
        if (s.end <= s.begin) continue;
        if (!open || s.begin > cur_end) {
            if (open) total += cur_end - cur_begin;
            cur_begin = s.begin;
            cur_end = s.end;
            open = true;
        } else {
            cur_end = std::max(cur_end, s.end);
        }
    }
    if (open) total += cur_end - cur_begin;
    return total;
}

std::size_t intersection_length(const std::vector<Span>& a, const std::vector<Span>& b) {
    std::vector<Span> pieces;
    for (const auto& x : a) {
        for (const auto& y : b) {
            const auto lo = std::max(x.begin, y.begin);
            const auto hi = std::min(x.end, y.end);
            if (lo < hi) pieces.push_back({lo, hi});
        }
    }
    return union_length(std::move(pieces));
}

void validate_trace(const TraceAnnotation& t) {
    const auto check = [&](const std::vector<Span>& spans, std::size_t bound, const char* what) {
        for (const auto& s : spans) {
            if (s.begin > s.end || s.end > bound) {
                throw EvalError("trace " + t.query_id + ": " + what + " span [" + std::to_string(s.begin) + ", " +
                                std::to_string(s.end) + ") out of bounds");
            }
        }
    };
    check(t.supported_spans, t.answer.size(), "supported");
    check(t.unsupported_spans, t.answer.size(), "unsupported");
    check(t.relevant_spans, t.context_length, "relevant");
    check(t.utilized_spans, t.context_length, "utilized");

    std::vector<char> covered(t.answer.size(), 0);
    for (const auto* set : {&t.supported_spans, &t.unsupported_spans}) {
        for (const auto& s : *set) std::fill(covered.begin() + s.begin, covered.begin() + s.end, 1);
    }
    for (std::size_t i = 0; i < t.answer.size(); ++i) {
        if (!covered[i] && !std::isspace(static_cast<unsigned char>(t.answer[i]))) {
            throw EvalError("trace " + t.query_id + ": answer byte " + std::to_string(i) +
                            " is neither supported nor unsupported");
        }
    }
}

TraceMetrics trace_metrics(const TraceAnnotation& t) {
    validate_trace(t);
    TraceMetrics m;
    const auto relevant = union_length(t.relevant_spans);
    const auto utilized = union_length(t.utilized_spans);
    if (relevant > 0) {
        m.completeness = static_cast<double>(intersection_length(t.relevant_spans, t.utilized_spans)) /
                         static_cast<double>(relevant);
    }
    if (t.context_length > 0) {
        m.utilization = static_cast<double>(utilized) / static_cast<double>(t.context_length);
        m.context_relevance = static_cast<double>(relevant) / static_cast<double>(t.context_length);
    }
    if (!t.answer.empty()) {
        m.hallucination = static_cast<double>(union_length(t.unsupported_spans)) /
                          static_cast<double>(t.answer.size());
    }
    return m;
}

TraceAnnotation parse_trace(const nlohmann::json& j) {
    try {
        TraceAnnotation t;
        t.query_id = j.value("query_id", "");
        t.answer = j.at("answer").get<std::string>();
        t.supported_spans = spans_from_json(j.value("supported_spans", nlohmann::json::array()));
        t.unsupported_spans = spans_from_json(j.value("unsupported_spans", nlohmann::json::array()));
        if (j.contains("context")) {
            t.context_length = j.at("context").get<std::string>().size();
        } else {
            t.context_length = j.value("context_length", std::size_t{0});
        }
        t.relevant_spans = spans_from_json(j.value("relevant_spans", nlohmann::json::array()));
        t.utilized_spans = spans_from_json(j.value("utilized_spans", nlohmann::json::array()));
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw EvalError(std::string("malformed trace annotation: ") + e.what());
    }
}

nlohmann::json to_json(const TraceAnnotation& t) {
    nlohmann::ordered_json j;
    j["query_id"] = t.query_id;
    j["answer"] = t.answer;
    j["supported_spans"] = spans_to_json(t.supported_spans);
    j["unsupported_spans"] = spans_to_json(t.unsupported_spans);
    j["context_length"] = t.context_length;
    j["relevant_spans"] = spans_to_json(t.relevant_spans);
    j["utilized_spans"] = spans_to_json(t.utilized_spans);
    return nlohmann::json(j);
}

std::vector<TraceAnnotation> read_traces_jsonl(const std::string& path) {
    std::vector<TraceAnnotation> out;
    std::size_t n = 0;
    for (const auto& line : lines_of(path)) {
        ++n;
        if (blank(line)) continue;
        try {
            out.push_back(parse_trace(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw EvalError(path + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

TraceSummary summarize_traces(const std::vector<TraceAnnotation>& traces) {
    TraceSummary s;
    std::map<std::string, double> sums;
    std::map<std::string, std::size_t> counts;
    for (const auto* name : {"completeness", "utilization", "context_relevance", "hallucination"}) {
        sums[name] = 0.0;
        counts[name] = 0;
        s.undefined[name] = 0;
    }
    for (const auto& t : traces) {
        const auto m = trace_metrics(t);
        const std::pair<const char*, const std::optional<double>*> fields[] = {
            {"completeness", &m.completeness},
            {"utilization", &m.utilization},
            {"context_relevance", &m.context_relevance},
            {"hallucination", &m.hallucination}};
        for (const auto& [name, value] : fields) {
            if (*value) {
                sums[name] += **value;
                ++counts[name];
            } else {
                ++s.undefined[name];
            }
        }
        ++s.queries;
    }
    for (const auto& [name, total] : sums) {
        if (counts[name] > 0) s.mean[name] = total / static_cast<double>(counts[name]);
    }
    return s;
}

nlohmann::json TraceSummary::to_json() const {
    nlohmann::ordered_json j;
    j["definitions"] = kTraceDefinitionsVersion;
    j["queries"] = queries;
    nlohmann::ordered_json metrics;
    for (const auto* name : {"completeness", "utilization", "context_relevance", "hallucination"}) {
        const auto it = mean.find(name);
        metrics[name] = {{"mean", it == mean.end() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(it->second)},
                         {"undefined", undefined.count(name) ? undefined.at(name) : 0}};
    }
    j["metrics"] = metrics;
    return nlohmann::json(j);
}

std::string TraceSummary::to_text() const {
    std::ostringstream out;
    out << "# " << kTraceDefinitionsVersion << ", " << queries << " queries\n";
    for (const auto* name : {"completeness", "utilization", "context_relevance", "hallucination"}) {
        const auto it = mean.find(name);
        out << pad(name, 18) << (it == mean.end() ? std::string("undefined") : fmt2(it->second * 100.0) + "%");
        const auto u = undefined.count(name) ? undefined.at(name) : 0;
        if (u) out << "  (" << u << " undefined)";
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------

AblationReport ablation_report(const std::vector<AblationRun>& runs, const std::vector<GoldAnnotation>& gold,
                               const std::vector<std::size_t>& ks) {
    validate_gold(gold);
    if (ks.empty()) throw EvalError("at least one k is required");
    for (auto k : ks) {
        if (k == 0) throw EvalError("k must be >= 1");
    }
    for (std::size_t r = 1; r < runs.size(); ++r) {
        std::vector<std::string> only_first, only_this;
        for (const auto& [q, _] : runs[0].run) {
            if (!runs[r].run.count(q)) only_first.push_back(q);
        }
        for (const auto& [q, _] : runs[r].run) {
            if (!runs[0].run.count(q)) only_this.push_back(q);
        }
        if (!only_first.empty() || !only_this.empty()) {
            throw EvalError("runs '" + runs[0].policy + "' and '" + runs[r].policy +
                            "' cover different queries; only in first: [" + join(only_first, ", ") +
                            "], only in second: [" + join(only_this, ", ") + "]");
        }
    }

    std::vector<std::string> datasets;
    for (const auto& g : gold) {
        if (std::find(datasets.begin(), datasets.end(), g.dataset) == datasets.end()) datasets.push_back(g.dataset);
    }

    AblationReport report;
    report.ks = ks;
    static const std::vector<std::string> kNone;
    for (const auto& ar : runs) {
        validate_run(ar.run);
        AblationTable table;
        table.policy = ar.policy;
        std::map<std::string, AblationRow> by_dataset;
        AblationRow all{"ALL", 0, std::vector<double>(ks.size(), 0.0), std::vector<double>(ks.size(), 0.0)};
        for (const auto& d : datasets) by_dataset[d] = {d, 0, std::vector<double>(ks.size(), 0.0), std::vector<double>(ks.size(), 0.0)};
        for (const auto& g : gold) {
            const auto it = ar.run.find(g.query_id);
            if (it == ar.run.end()) table.missing_queries.push_back(g.query_id);
            const auto& ranked = it == ar.run.end() ? kNone : it->second;
            auto& row = by_dataset[g.dataset];
            for (std::size_t i = 0; i < ks.size(); ++i) {
                const double rc = query_recall(ranked, g, ar.catalog, ks[i]);
                const double pr = query_precision(ranked, g, ar.catalog, ks[i]);
                row.recall[i] += rc;
                row.precision[i] += pr;
                all.recall[i] += rc;
                all.precision[i] += pr;
            }
            ++row.queries;
            ++all.queries;
        }
        for (auto* row : [&] {
                 std::vector<AblationRow*> v;
                 for (const auto& d : datasets) v.push_back(&by_dataset[d]);
                 v.push_back(&all);
                 return v;
             }()) {
            for (std::size_t i = 0; i < ks.size(); ++i) {
                if (row->queries) {
                    row->recall[i] = 100.0 * row->recall[i] / static_cast<double>(row->queries);
                    row->precision[i] = 100.0 * row->precision[i] / static_cast<double>(row->queries);
                }
            }
            table.rows.push_back(*row);
        }
        report.tables.push_back(std::move(table));
    }
    return report;
}

std::string AblationReport::to_text() const {
    std::ostringstream out;
    out << "# hit = chunk overlaps a gold span by >= 1 char; ALL = mean over every query\n";
    std::size_t name_w = 7;
    for (const auto& t : tables) {
        for (const auto& r : t.rows) name_w = std::max(name_w, r.dataset.size());
    }
    name_w += 2;
    const std::size_t col_w = 7;
    const std::size_t block_w = col_w * ks.size();
    for (const auto& t : tables) {
        out << '\n' << t.policy << '\n';
        out << pad("Dataset", name_w) << "| " << pad("Recall@k (%)", block_w) << " | " << "Precision@k (%)\n";
        out << pad("", name_w) << "| ";
        std::string kcols;
        for (auto k : ks) kcols += lpad("k=" + std::to_string(k), col_w);
        out << kcols << " | " << kcols << '\n';
        for (const auto& r : t.rows) {
            out << pad(r.dataset, name_w) << "| ";
            for (double v : r.recall) out << lpad(fmt2(v), col_w);
            out << " | ";
            for (double v : r.precision) out << lpad(fmt2(v), col_w);
            out << '\n';
        }
        if (!t.missing_queries.empty()) {
            out << "missing from run (scored 0): " << join(t.missing_queries, ", ") << '\n';
        }
    }
    return out.str();
}

nlohmann::json AblationReport::to_json() const {
    nlohmann::ordered_json j;
    j["hit_rule"] = "overlap>=1char";
    j["all_row"] = "micro-average over queries";
    j["ks"] = ks;
    j["tables"] = nlohmann::ordered_json::array();
    for (const auto& t : tables) {
        nlohmann::ordered_json tj;
        tj["policy"] = t.policy;
        tj["rows"] = nlohmann::ordered_json::array();
        for (const auto& r : t.rows) {
            nlohmann::ordered_json rj;
            rj["dataset"] = r.dataset;
            rj["queries"] = r.queries;
            rj["recall"] = r.recall;
            rj["precision"] = r.precision;
            tj["rows"].push_back(rj);
        }
        tj["missing_queries"] = t.missing_queries;
        j["tables"].push_back(tj);
    }
    return nlohmann::json(j);
}

}  // namespace esapiens::evalkit
