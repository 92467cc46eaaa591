#pragma once

#include "esapiens/common.hpp"
#include "esapiens/hnsw.hpp"
#include "esapiens/ingest.hpp"
#include "esapiens/providers.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace esapiens::retrieval {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
    void validate() const;
};

struct Posting {
    std::uint32_t ordinal;  // chunk position; ordinals follow chunk_id order
    std::uint32_t tf;
};

/// Okapi BM25 over chunk term lists:
///   idf(t)   = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))
///   weight   = tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
/// A query term repeated r times contributes r times.
class SparseIndex {
public:
    SparseIndex() = default;
    SparseIndex(const std::vector<std::vector<std::string>>& chunk_terms, Bm25Params params);

    [[nodiscard]] double score(std::span<const std::string> query_terms, std::size_t ordinal) const;
    /// Chunks with positive score, best first, ties by ordinal.
    [[nodiscard]] std::vector<std::pair<std::size_t, double>> search(
        std::span<const std::string> query_terms, std::size_t k) const;

    [[nodiscard]] double idf(const std::string& term) const;
    [[nodiscard]] std::size_t document_frequency(const std::string& term) const;
    [[nodiscard]] const std::vector<Posting>& postings(const std::string& term) const;
    [[nodiscard]] std::size_t doc_length(std::size_t ordinal) const { return doc_lengths_[ordinal]; }
    [[nodiscard]] double avg_doc_length() const { return avg_doc_length_; }
    [[nodiscard]] std::size_t size() const { return doc_lengths_.size(); }
    [[nodiscard]] const Bm25Params& params() const { return params_; }

private:
    [[nodiscard]] double term_weight(std::uint32_t tf, std::size_t ordinal) const;
    [[nodiscard]] std::uint32_t tf(const std::string& term, std::size_t ordinal) const;

    Bm25Params params_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::size_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

struct RetrievalConfig {
    Bm25Params bm25;
    HnswParams hnsw;
    std::size_t leg_depth = 200;     // candidates taken from each leg
    std::size_t n_candidates = 200;  // returned after fusion
    std::size_t top_n = 50;          // kept after reranking
    double rrf_constant = 60.0;
};

struct RetrievalCandidate {
    std::string chunk_id;
    std::size_t ordinal = 0;
    double sparse_score = 0.0;
    double dense_score = 0.0;
    double fused_score = 0.0;
    std::optional<double> rerank_score;
    std::size_t rank = 0;
};

/// A retrieved passage handed to generation, with provenance for citation.
struct Snippet {
    std::string chunk_id;
    std::string doc_id;
    std::size_t seq = 0;
    std::size_t start_char = 0;
    std::size_t end_char = 0;
    std::string text;
    std::string title;
    std::string source_uri;
    double fused_score = 0.0;
    std::optional<double> rerank_score;
    std::size_t rank = 0;
    bool external = false;  // from web search, not the corpus

    friend bool operator==(const Snippet&, const Snippet&) = default;
};

nlohmann::json to_json(const Snippet& s);
Snippet snippet_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RetrievalCandidate& c);

/// Immutable hybrid index over a chunk store. Safe to share across threads.
class IndexHandle {
public:
    /// Throws IndexError on an empty store or an embedder dimension mismatch.
    static std::shared_ptr<const IndexHandle> build(
        ingest::ChunkStore store, std::shared_ptr<const providers::Embedder> embedder,
        RetrievalConfig config = {}, std::optional<ingest::ChunkPolicy> policy = std::nullopt);

    /// Directory layout: manifest.json, chunks.jsonl (+ .docs.jsonl sidecar),
    /// vectors.bin (little-endian float64, chunk order).
    void save(const std::string& dir) const;
    static std::shared_ptr<const IndexHandle> load(
        const std::string& dir, std::shared_ptr<const providers::Embedder> embedder);

    [[nodiscard]] std::size_t size() const { return chunks_.size(); }
    [[nodiscard]] const ingest::Chunk& chunk(std::size_t ordinal) const { return chunks_[ordinal]; }
    [[nodiscard]] std::optional<std::size_t> ordinal_of(const std::string& chunk_id) const;
    [[nodiscard]] const SparseIndex& sparse() const { return sparse_; }
    [[nodiscard]] const HnswIndex<double>& dense() const { return *dense_; }
    [[nodiscard]] const RetrievalConfig& config() const { return config_; }
    [[nodiscard]] const nlohmann::json& manifest() const { return manifest_; }
    [[nodiscard]] const providers::Embedder& embedder() const { return *embedder_; }

    [[nodiscard]] double bm25_score(std::span<const std::string> query_terms,
                                    const std::string& chunk_id) const;
    [[nodiscard]] std::vector<RetrievalCandidate> search_sparse(const std::string& query,
                                                                std::size_t k) const;
    [[nodiscard]] std::vector<RetrievalCandidate> search_dense(std::span<const double> query_vector,
                                                               std::size_t k) const;
    /// Reciprocal-rank fusion of the top `leg_depth` of each leg:
    /// fused = sum over legs of 1 / (rrf_constant + rank).
    [[nodiscard]] std::vector<RetrievalCandidate> hybrid_retrieve(
        const std::string& query, std::optional<std::size_t> n_candidates = std::nullopt) const;

    [[nodiscard]] Snippet make_snippet(std::size_t ordinal) const;

private:
    IndexHandle() = default;
    void finish_build(std::vector<std::vector<double>> vectors);

    std::vector<ingest::Chunk> chunks_;
    std::map<std::string, ingest::DocumentInfo> documents_;
    std::unordered_map<std::string, std::size_t> by_id_;
    SparseIndex sparse_;
    std::unique_ptr<HnswIndex<double>> dense_;
    std::shared_ptr<const providers::Embedder> embedder_;
    RetrievalConfig config_;
    nlohmann::json manifest_;
};

/// Score every candidate with the reranker and keep the best `top_n`.
/// A failing reranker degrades to fused order and appends a warning.
std::vector<Snippet> rerank_and_select(const IndexHandle& index, const std::string& query,
                                       const std::vector<RetrievalCandidate>& candidates,
                                       const providers::Reranker& reranker, std::size_t top_n = 50,
                                       std::vector<std::string>* warnings = nullptr);

}  // namespace esapiens::retrieval
