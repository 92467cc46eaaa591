#pragma once

#include "esapiens/common.hpp"
#include "esapiens/text.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace esapiens::ingest {

struct Document {
    std::string doc_id;
    std::string title;
    std::string text;
    std::string source_uri;
    std::map<std::string, std::string> meta;
};

struct ChunkPolicy {
    std::size_t window_tokens = 1000;
    std::size_t overlap_tokens = 150;
    text::TokenizerId tokenizer = text::TokenizerId::word_punct;

    /// Throws ConfigError unless 1 <= window and overlap < window.
    void validate() const;
    [[nodiscard]] std::size_t stride() const { return window_tokens - overlap_tokens; }
};

/// A token window of one document. Character offsets are UTF-8 byte offsets.
/// The character span of token range [s, e) runs from the start of token s
/// (or 0 when s == 0) to the start of token e (or the end of the text when e
/// is the last token), so trailing whitespace belongs to the window and
/// chunk texts tile the document.
struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::size_t seq = 0;
    std::size_t start_token = 0;
    std::size_t end_token = 0;
    std::size_t start_char = 0;
    std::size_t end_char = 0;
    std::string text;

    friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Metadata kept beside the chunk store so citations can name their source.
struct DocumentInfo {
    std::string doc_id;
    std::string title;
    std::string source_uri;
    std::map<std::string, std::string> meta;
};

struct CorpusStats {
    std::size_t docs = 0;
    std::size_t chunks = 0;
    std::size_t document_tokens = 0;
    std::size_t chunk_tokens = 0;
};

/// Content-addressed chunk id: hash of doc_id and seq.
std::string make_chunk_id(std::string_view doc_id, std::size_t seq);

std::vector<Chunk> chunk_document(const Document& doc, const ChunkPolicy& policy);

/// Parse one JSONL document record. Throws IngestError.
Document parse_document(std::string_view json_line);
std::vector<Document> read_documents_jsonl(std::string_view content);
/// Same, recording a "line N" origin per document for error messages.
std::vector<Document> read_documents_jsonl(std::string_view content,
                                           std::vector<std::string>* origins);

struct ChunkedCorpus {
    std::vector<Chunk> chunks;
    std::vector<DocumentInfo> documents;
    CorpusStats stats;
};

/// Chunk every document; rejects duplicates and empty documents before
/// producing any output.
ChunkedCorpus chunk_corpus(const std::vector<Document>& docs, const ChunkPolicy& policy,
                           const std::vector<std::string>* origins = nullptr);

std::string serialize_chunk(const Chunk& c);
Chunk parse_chunk(std::string_view json_line);

/// Sidecar path holding DocumentInfo records for a chunk store.
std::string documents_sidecar_path(const std::string& store_path);

/// JSONL in -> chunk store out. The store and its sidecar are written only
/// after the whole input validated, each through an atomic rename.
CorpusStats ingest_corpus(const std::string& input_path, const ChunkPolicy& policy,
                          const std::string& store_path);

void write_store(const ChunkedCorpus& corpus, const std::string& store_path);

struct ChunkStore {
    std::vector<Chunk> chunks;
    std::map<std::string, DocumentInfo> documents;
};

ChunkStore load_store(const std::string& store_path);

}  // namespace esapiens::ingest
