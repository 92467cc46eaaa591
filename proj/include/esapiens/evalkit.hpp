#pragma once

#include "esapiens/common.hpp"
#include "esapiens/ingest.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace esapiens::evalkit {

struct EvidenceSpan {
    std::string doc_id;
    std::size_t start_char = 0;
    std::size_t end_char = 0;
};

struct GoldAnnotation {
    std::string query_id;
    std::string query;
    std::vector<EvidenceSpan> evidence_spans;
    std::optional<std::string> reference_answer;
    std::string dataset = "default";
};

/// query_id -> ranked chunk ids.
using RetrievalRun = std::map<std::string, std::vector<std::string>>;

struct ChunkRange {
    std::string doc_id;
    std::size_t start_char = 0;
    std::size_t end_char = 0;
};

/// chunk_id -> location in its source document.
using ChunkCatalog = std::unordered_map<std::string, ChunkRange>;

ChunkCatalog catalog_from(const ingest::ChunkStore& store);
ChunkCatalog catalog_from(const std::vector<ingest::Chunk>& chunks);

GoldAnnotation parse_gold(const nlohmann::json& j);
std::vector<GoldAnnotation> read_gold_jsonl(const std::string& path);
/// Accepts a JSON object {query_id: [chunk_id, ...]} or JSONL lines
/// {"query_id": ..., "chunk_ids": [...]}.
RetrievalRun read_run(const std::string& path);

/// Throws EvalError on duplicate query ids, empty span lists or reversed spans.
void validate_gold(const std::vector<GoldAnnotation>& gold);
/// Throws EvalError on duplicate chunk ids within one ranking.
void validate_run(const RetrievalRun& run);

/// Fraction of gold spans overlapped (>= 1 char, same doc) by the top-k chunks.
double query_recall(const std::vector<std::string>& ranked, const GoldAnnotation& gold,
                    const ChunkCatalog& catalog, std::size_t k);
/// Fraction of the top-k chunks (or of all returned, if fewer) overlapping a gold span.
double query_precision(const std::vector<std::string>& ranked, const GoldAnnotation& gold,
                       const ChunkCatalog& catalog, std::size_t k);

struct MetricResult {
    double value = 0.0;  // percentage, mean over queries
    std::size_t queries = 0;
    std::vector<std::string> missing_queries;  // in gold, absent from the run
};

MetricResult recall_at_k(const RetrievalRun& run, const std::vector<GoldAnnotation>& gold,
                         const ChunkCatalog& catalog, std::size_t k);
MetricResult precision_at_k(const RetrievalRun& run, const std::vector<GoldAnnotation>& gold,
                            const ChunkCatalog& catalog, std::size_t k);

// ---------------------------------------------------------------------------
// Generation metrics
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceDefinitionsVersion = "trace-chars-v1";

/// Answer spans index `answer`; context spans index the concatenated
/// retrieved context of length `context_length`.
struct TraceAnnotation {
    std::string query_id;
    std::string answer;
    std::vector<Span> supported_spans;
    std::vector<Span> unsupported_spans;
    std::size_t context_length = 0;
    std::vector<Span> relevant_spans;
    std::vector<Span> utilized_spans;
};

/// Metrics whose denominator is zero are left empty.
struct TraceMetrics {
    std::optional<double> completeness;
    std::optional<double> utilization;
    std::optional<double> context_relevance;
    std::optional<double> hallucination;
};

std::size_t union_length(std::vector<Span> spans);
std::size_t intersection_length(const std::vector<Span>& a, const std::vector<Span>& b);

/// Throws EvalError for out-of-bounds spans or answer text left uncovered by
/// supported and unsupported spans.
void validate_trace(const TraceAnnotation& t);
TraceMetrics trace_metrics(const TraceAnnotation& t);

TraceAnnotation parse_trace(const nlohmann::json& j);
nlohmann::json to_json(const TraceAnnotation& t);
std::vector<TraceAnnotation> read_traces_jsonl(const std::string& path);

struct TraceSummary {
    std::size_t queries = 0;
    std::map<std::string, double> mean;            // metric -> mean over defined values
    std::map<std::string, std::size_t> undefined;  // metric -> excluded count
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] std::string to_text() const;
};

TraceSummary summarize_traces(const std::vector<TraceAnnotation>& traces);

// ---------------------------------------------------------------------------
// Chunk-size ablation report
// ---------------------------------------------------------------------------

inline const std::vector<std::size_t> kDefaultKs{1, 2, 4, 8, 16, 50};

struct AblationRun {
    std::string policy;  // e.g. "Chunk = 500"
    RetrievalRun run;
    ChunkCatalog catalog;
};

struct AblationRow {
    std::string dataset;  // "ALL" for the micro-averaged row
    std::size_t queries = 0;
    std::vector<double> recall;
    std::vector<double> precision;
};

struct AblationTable {
    std::string policy;
    std::vector<AblationRow> rows;
    std::vector<std::string> missing_queries;
};

struct AblationReport {
    std::vector<std::size_t> ks;
    std::vector<AblationTable> tables;

    [[nodiscard]] std::string to_text() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Datasets appear in first-seen gold order; ALL is the mean over every
/// query. Throws EvalError if runs disagree on their query sets.
AblationReport ablation_report(const std::vector<AblationRun>& runs,
                               const std::vector<GoldAnnotation>& gold,
                               const std::vector<std::size_t>& ks = kDefaultKs);

}  // namespace esapiens::evalkit
