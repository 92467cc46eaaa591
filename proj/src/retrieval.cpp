#include "esapiens/retrieval.hpp"

#include "esapiens/text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace esapiens::retrieval {

using nlohmann::json;

void Bm25Params::validate() const {
    if (!(k1 > 0.0)) throw ConfigError("bm25 k1 must be > 0");
    if (b < 0.0 || b > 1.0) throw ConfigError("bm25 b must lie in [0, 1]");
}

SparseIndex::SparseIndex(const std::vector<std::vector<std::string>>& chunk_terms, Bm25Params params)
    : params_(params) {
    params_.validate();
    doc_lengths_.reserve(chunk_terms.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < chunk_terms.size(); ++i) {
        std::unordered_map<std::string, std::uint32_t> counts;
        for (const auto& t : chunk_terms[i]) ++counts[t];
        for (auto& [term, tf] : counts) {
            postings_[term].push_back({static_cast<std::uint32_t>(i), tf});
        }
        doc_lengths_.push_back(chunk_terms[i].size());
        total += chunk_terms[i].size();
    }
    avg_doc_length_ = chunk_terms.empty() ? 0.0
                                          : static_cast<double>(total) /
                                                static_cast<double>(chunk_terms.size());
}

std::size_t SparseIndex::document_frequency(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

const std::vector<Posting>& SparseIndex::postings(const std::string& term) const {
    static const std::vector<Posting> kEmpty;
    auto it = postings_.find(term);
    return it == postings_.end() ? kEmpty : it->second;
}

double SparseIndex::idf(const std::string& term) const {
    const auto n = static_cast<double>(doc_lengths_.size());
    const auto df = static_cast<double>(document_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double SparseIndex::term_weight(std::uint32_t tf, std::size_t ordinal) const {
    if (tf == 0) return 0.0;
    const double f = tf;
    const double norm = avg_doc_length_ > 0.0
                            ? static_cast<double>(doc_lengths_[ordinal]) / avg_doc_length_
                            : 0.0;
    return f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * norm));
}

std::uint32_t SparseIndex::tf(const std::string& term, std::size_t ordinal) const {
    const auto& list = postings(term);
    auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                               [](const Posting& p, std::size_t o) { return p.ordinal < o; });
    return it != list.end() && it->ordinal == ordinal ? it->tf : 0;
}

double SparseIndex::score(std::span<const std::string> query_terms, std::size_t ordinal) const {
    double s = 0.0;
    for (const auto& t : query_terms) {
        const auto f = tf(t, ordinal);
        if (f) s += idf(t) * term_weight(f, ordinal);
    }
    return s;
}

std::vector<std::pair<std::size_t, double>> SparseIndex::search(
    std::span<const std::string> query_terms, std::size_t k) const {
    std::map<std::string, std::size_t> multiplicity;
    for (const auto& t : query_terms) ++multiplicity[t];

    std::unordered_map<std::size_t, double> acc;
    for (const auto& [term, times] : multiplicity) {
        const auto& list = postings(term);
        if (list.empty()) continue;
        const double w = idf(term) * static_cast<double>(times);
        for (const auto& p : list) acc[p.ordinal] += w * term_weight(p.tf, p.ordinal);
    }
    std::vector<std::pair<std::size_t, double>> out;
    out.reserve(acc.size());
    for (const auto& [ordinal, s] : acc) {
        if (s > 0.0) out.emplace_back(ordinal, s);
    }
    const auto better = [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    if (out.size() > k) {
        std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end(), better);
        out.resize(k);
    } else {
        std::sort(out.begin(), out.end(), better);
    }
    return out;
}

json to_json(const Snippet& s) {
    json j{{"chunk_id", s.chunk_id},     {"doc_id", s.doc_id},       {"seq", s.seq},
           {"start_char", s.start_char}, {"end_char", s.end_char},   {"text", s.text},
           {"title", s.title},           {"source_uri", s.source_uri},
           {"fused_score", s.fused_score}, {"rank", s.rank},          {"external", s.external}};
    j["rerank_score"] = s.rerank_score ? json(*s.rerank_score) : json(nullptr);
    return j;
}

Snippet snippet_from_json(const json& j) {
    Snippet s;
    s.chunk_id = j.at("chunk_id").get<std::string>();
    s.doc_id = j.value("doc_id", "");
    s.seq = j.value("seq", std::size_t{0});
    s.start_char = j.value("start_char", std::size_t{0});
    s.end_char = j.value("end_char", std::size_t{0});
    s.text = j.value("text", "");
    s.title = j.value("title", "");
    s.source_uri = j.value("source_uri", "");
    s.fused_score = j.value("fused_score", 0.0);
    if (j.contains("rerank_score") && !j["rerank_score"].is_null()) {
        s.rerank_score = j["rerank_score"].get<double>();
    }
    s.rank = j.value("rank", std::size_t{0});
    s.external = j.value("external", false);
    return s;
}

json to_json(const RetrievalCandidate& c) {
    json j{{"chunk_id", c.chunk_id},       {"sparse_score", c.sparse_score},
           {"dense_score", c.dense_score}, {"fused_score", c.fused_score},
           {"rank", c.rank}};
    j["rerank_score"] = c.rerank_score ? json(*c.rerank_score) : json(nullptr);
    return j;
}

std::shared_ptr<const IndexHandle> IndexHandle::build(
    ingest::ChunkStore store, std::shared_ptr<const providers::Embedder> embedder,
    RetrievalConfig config, std::optional<ingest::ChunkPolicy> policy) {
    if (store.chunks.empty()) throw IndexError("cannot build indexes over an empty chunk store");
    if (!embedder) throw IndexError("an embedder is required");
    config.bm25.validate();

    std::shared_ptr<IndexHandle> h(new IndexHandle());
    h->config_ = config;
    h->embedder_ = std::move(embedder);
    h->chunks_ = std::move(store.chunks);
    h->documents_ = std::move(store.documents);
    std::sort(h->chunks_.begin(), h->chunks_.end(),
              [](const auto& a, const auto& b) { return a.chunk_id < b.chunk_id; });
    for (std::size_t i = 1; i < h->chunks_.size(); ++i) {
        if (h->chunks_[i].chunk_id == h->chunks_[i - 1].chunk_id) {
            throw IndexError("duplicate chunk_id in store: " + h->chunks_[i].chunk_id);
        }
    }

    std::vector<std::string> texts;
    texts.reserve(h->chunks_.size());
    for (const auto& c : h->chunks_) texts.push_back(c.text);
    auto vectors = h->embedder_->embed(texts);
    if (vectors.size() != texts.size()) {
        throw IndexError("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                         std::to_string(texts.size()) + " chunks");
    }

    json m;
    m["format_version"] = 1;
    if (policy) {
        m["window"] = policy->window_tokens;
        m["overlap"] = policy->overlap_tokens;
        m["tokenizer"] = std::string(text::to_string(policy->tokenizer));
    }
    h->manifest_ = std::move(m);
    h->finish_build(std::move(vectors));
    return h;
}

void IndexHandle::finish_build(std::vector<std::vector<double>> vectors) {
    const std::size_t d = embedder_->dimension();
    std::vector<std::vector<std::string>> terms;
    terms.reserve(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        by_id_.emplace(chunks_[i].chunk_id, i);
        terms.push_back(text::index_terms(chunks_[i].text));
    }
    sparse_ = SparseIndex(terms, config_.bm25);

    dense_ = std::make_unique<HnswIndex<double>>(d, config_.hnsw);
    for (auto& v : vectors) {
        if (v.size() != d) {
            throw IndexError("embedder dimension mismatch: expected " + std::to_string(d) +
                             ", got " + std::to_string(v.size()));
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm > 0.0 && std::abs(norm - 1.0) > 1e-12) {
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
        }
        dense_->add(v);
    }

    manifest_["dimension"] = d;
    manifest_["M"] = config_.hnsw.M;
    manifest_["ef_construction"] = config_.hnsw.ef_construction;
    manifest_["ef_search"] = config_.hnsw.ef_search;
    manifest_["seed"] = config_.hnsw.seed;
    manifest_["k1"] = config_.bm25.k1;
    manifest_["b"] = config_.bm25.b;
    manifest_["leg_depth"] = config_.leg_depth;
    manifest_["n_candidates"] = config_.n_candidates;
    manifest_["top_n"] = config_.top_n;
    manifest_["chunk_count"] = chunks_.size();
    manifest_["document_count"] = documents_.size();
}

void IndexHandle::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    ingest::ChunkedCorpus corpus;
    corpus.chunks = chunks_;
    for (const auto& [id, d] : documents_) corpus.documents.push_back(d);
    ingest::write_store(corpus, (fs::path(dir) / "chunks.jsonl").string());

    std::string blob;
    blob.reserve(chunks_.size() * dense_->dimension() * sizeof(double));
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        for (double x : dense_->vector(static_cast<std::uint32_t>(i))) {
            auto bits = std::bit_cast<std::uint64_t>(x);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            char buf[8];
            std::memcpy(buf, &bits, 8);
            blob.append(buf, 8);
        }
    }
    write_file_atomic((fs::path(dir) / "vectors.bin").string(), blob);
    write_file_atomic((fs::path(dir) / "manifest.json").string(), manifest_.dump(2));
}

std::shared_ptr<const IndexHandle> IndexHandle::load(
    const std::string& dir, std::shared_ptr<const providers::Embedder> embedder) {
    namespace fs = std::filesystem;
    json m;
    try {
        m = json::parse(read_file((fs::path(dir) / "manifest.json").string()));
    } catch (const std::exception& e) {
        throw IndexError(std::string("cannot read index manifest: ") + e.what());
    }
    if (m.value("format_version", 0) != 1) throw IndexError("unsupported index format version");
    const auto d = m.at("dimension").get<std::size_t>();
    if (!embedder || embedder->dimension() != d) {
        throw IndexError("embedder dimension does not match index manifest (" + std::to_string(d) + ")");
    }

    std::shared_ptr<IndexHandle> h(new IndexHandle());
    h->embedder_ = std::move(embedder);
    h->config_.bm25 = {m.at("k1").get<double>(), m.at("b").get<double>()};
    h->config_.hnsw = {m.at("M").get<std::size_t>(), m.at("ef_construction").get<std::size_t>(),
                       m.at("ef_search").get<std::size_t>(), m.value("seed", std::uint64_t{42})};
    h->config_.leg_depth = m.value("leg_depth", std::size_t{200});
    h->config_.n_candidates = m.value("n_candidates", std::size_t{200});
    h->config_.top_n = m.value("top_n", std::size_t{50});

    auto store = ingest::load_store((fs::path(dir) / "chunks.jsonl").string());
    h->chunks_ = std::move(store.chunks);
    h->documents_ = std::move(store.documents);

    const auto blob = read_file((fs::path(dir) / "vectors.bin").string());
    if (blob.size() != h->chunks_.size() * d * 8) throw IndexError("vectors.bin size mismatch");
    std::vector<std::vector<double>> vectors(h->chunks_.size(), std::vector<double>(d));
    std::size_t off = 0;
    for (auto& v : vectors) {
        for (double& x : v) {
            std::uint64_t bits;
            std::memcpy(&bits, blob.data() + off, 8);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            x = std::bit_cast<double>(bits);
            off += 8;
        }
    }
    h->manifest_ = m;
    h->finish_build(std::move(vectors));
    return h;
}

std::optional<std::size_t> IndexHandle::ordinal_of(const std::string& chunk_id) const {
    auto it = by_id_.find(chunk_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

double IndexHandle::bm25_score(std::span<const std::string> query_terms,
                               const std::string& chunk_id) const {
    const auto o = ordinal_of(chunk_id);
    if (!o) throw IndexError("unknown chunk_id: " + chunk_id);
    return sparse_.score(query_terms, *o);
}

std::vector<RetrievalCandidate> IndexHandle::search_sparse(const std::string& query,
                                                           std::size_t k) const {
    const auto terms = text::index_terms(query);
    std::vector<RetrievalCandidate> out;
    std::size_t rank = 0;
    for (const auto& [ordinal, s] : sparse_.search(terms, k)) {
        RetrievalCandidate c;
        c.chunk_id = chunks_[ordinal].chunk_id;
        c.ordinal = ordinal;
        c.sparse_score = s;
        c.rank = ++rank;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<RetrievalCandidate> IndexHandle::search_dense(std::span<const double> query_vector,
                                                          std::size_t k) const {
    std::vector<RetrievalCandidate> out;
    std::size_t rank = 0;
    for (const auto& [dist, id] : dense_->search(query_vector, k)) {
        RetrievalCandidate c;
        c.chunk_id = chunks_[id].chunk_id;
        c.ordinal = id;
        c.dense_score = 1.0 - dist;
        c.rank = ++rank;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<RetrievalCandidate> IndexHandle::hybrid_retrieve(
    const std::string& query, std::optional<std::size_t> n_candidates) const {
    const std::size_t n = n_candidates.value_or(config_.n_candidates);
    if (n == 0) return {};
    const auto terms = text::index_terms(query);
    const std::string qs[] = {query};
    auto qv = embedder_->embed(qs).at(0);
    if (qv.size() != dense_->dimension()) throw IndexError("query embedding dimension mismatch");

    std::map<std::size_t, RetrievalCandidate> pool;
    const auto credit = [&](std::size_t ordinal, std::size_t rank) {
        auto& c = pool[ordinal];
        c.ordinal = ordinal;
        c.fused_score += 1.0 / (config_.rrf_constant + static_cast<double>(rank));
    };
    for (const auto& c : search_sparse(query, config_.leg_depth)) credit(c.ordinal, c.rank);
    for (const auto& c : search_dense(qv, config_.leg_depth)) credit(c.ordinal, c.rank);

    std::vector<RetrievalCandidate> out;
    out.reserve(pool.size());
    for (auto& [ordinal, c] : pool) {
        c.chunk_id = chunks_[ordinal].chunk_id;
        c.sparse_score = sparse_.score(terms, ordinal);
        c.dense_score = 1.0 - dense_->distance(qv, dense_->vector(static_cast<std::uint32_t>(ordinal)));
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.fused_score != b.fused_score ? a.fused_score > b.fused_score : a.ordinal < b.ordinal;
    });
    if (out.size() > n) out.resize(n);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
    return out;
}

Snippet IndexHandle::make_snippet(std::size_t ordinal) const {
    const auto& c = chunks_[ordinal];
    Snippet s;
    s.chunk_id = c.chunk_id;
    s.doc_id = c.doc_id;
    s.seq = c.seq;
    s.start_char = c.start_char;
    s.end_char = c.end_char;
    s.text = c.text;
    if (auto it = documents_.find(c.doc_id); it != documents_.end()) {
        s.title = it->second.title;
        s.source_uri = it->second.source_uri;
    }
    return s;
}

std::vector<Snippet> rerank_and_select(const IndexHandle& index, const std::string& query,
                                       const std::vector<RetrievalCandidate>& candidates,
                                       const providers::Reranker& reranker, std::size_t top_n,
                                       std::vector<std::string>* warnings) {
    if (candidates.empty()) return {};
    std::vector<std::string> passages;
    std::vector<double> prior;
    passages.reserve(candidates.size());
    for (const auto& c : candidates) {
        passages.push_back(index.chunk(c.ordinal).text);
        prior.push_back(c.fused_score);
    }

    std::vector<double> scores;
    std::string failure;
    try {
        scores = reranker.rerank(query, passages, prior);
        if (scores.size() != candidates.size()) {
            failure = "reranker returned " + std::to_string(scores.size()) + " scores for " +
                      std::to_string(candidates.size()) + " candidates";
        } else if (std::any_of(scores.begin(), scores.end(), [](double s) { return !std::isfinite(s); })) {
            failure = "reranker returned a non-finite score";
        }
    } catch (const std::exception& e) {
        failure = e.what();
    }

    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const bool reranked = failure.empty();
    if (reranked) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return candidates[a].chunk_id < candidates[b].chunk_id;
        });
    } else if (warnings) {
        warnings->push_back("rerank failed, using fused order: " + failure);
    }

    std::vector<Snippet> out;
    for (std::size_t i = 0; i < order.size() && out.size() < top_n; ++i) {
        const auto& c = candidates[order[i]];
        auto s = index.make_snippet(c.ordinal);
        s.fused_score = c.fused_score;
        if (reranked) s.rerank_score = scores[order[i]];
        s.rank = out.size() + 1;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace esapiens::retrieval
