#include "esapiens/ingest.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <set>
#include <unordered_map>

namespace esapiens::ingest {

using nlohmann::json;
using nlohmann::ordered_json;

void ChunkPolicy::validate() const {
    if (window_tokens < 1) throw ConfigError("window_tokens must be >= 1");
    if (overlap_tokens >= window_tokens) {
        throw ConfigError("overlap_tokens (" + std::to_string(overlap_tokens) +
                          ") must be smaller than window_tokens (" +
                          std::to_string(window_tokens) + ")");
    }
}

std::string make_chunk_id(std::string_view doc_id, std::size_t seq) {
    std::string key(doc_id);
    key.push_back('\x1f');
    key += std::to_string(seq);
    return sha256_hex(key, 20);
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkPolicy& policy) {
    policy.validate();
    const auto tokens = text::tokenize(doc.text, policy.tokenizer);
    if (tokens.empty()) throw IngestError("document '" + doc.doc_id + "' is empty");

    const std::size_t n = tokens.size();
    const auto boundary = [&](std::size_t t) -> std::size_t {
        if (t == 0) return 0;
        if (t >= n) return doc.text.size();
        return tokens[t].span.begin;
    };

    std::vector<Chunk> chunks;
    const std::size_t stride = policy.stride();
    for (std::size_t seq = 0;; ++seq) {
        const std::size_t start = seq * stride;
        const std::size_t end = std::min(start + policy.window_tokens, n);
        Chunk c;
        c.doc_id = doc.doc_id;
        c.seq = seq;
        c.chunk_id = make_chunk_id(doc.doc_id, seq);
        c.start_token = start;
        c.end_token = end;
        c.start_char = boundary(start);
        c.end_char = boundary(end);
        c.text = doc.text.substr(c.start_char, c.end_char - c.start_char);
        chunks.push_back(std::move(c));
        if (end == n) break;
    }
    return chunks;
}

namespace {

std::string require_string(const json& j, const char* field, bool required) {
    auto it = j.find(field);
    if (it == j.end() || it->is_null()) {
        if (required) throw IngestError(std::string("missing field '") + field + "'");
        return {};
    }
    if (!it->is_string()) throw IngestError(std::string("field '") + field + "' must be a string");
    return it->get<std::string>();
}

}  // namespace

Document parse_document(std::string_view json_line) {
    json j;
    try {
        j = json::parse(json_line);
    } catch (const json::parse_error& e) {
        throw IngestError(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw IngestError("document record must be a JSON object");
    static const std::set<std::string> kFields = {"doc_id", "title", "text", "source_uri", "meta"};
    for (const auto& [key, _] : j.items()) {
        if (!kFields.contains(key)) throw IngestError("unknown field '" + key + "'");
    }
    Document d;
    d.doc_id = require_string(j, "doc_id", true);
    if (d.doc_id.empty()) throw IngestError("doc_id must be non-empty");
    d.text = require_string(j, "text", true);
    d.title = require_string(j, "title", false);
    d.source_uri = require_string(j, "source_uri", false);
    if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw IngestError("field 'meta' must be an object");
        for (const auto& [k, v] : it->items()) {
            d.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
    }
    return d;
}

std::vector<Document> read_documents_jsonl(std::string_view content) {
    return read_documents_jsonl(content, nullptr);
}

std::vector<Document> read_documents_jsonl(std::string_view content,
                                           std::vector<std::string>* origins) {
    std::vector<Document> docs;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        auto nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        const auto line = content.substr(pos, nl - pos);
        ++line_no;
        pos = nl + 1;
        if (trim(line).empty()) {
            if (nl == content.size()) break;
            continue;
        }
        try {
            docs.push_back(parse_document(line));
        } catch (const IngestError& e) {
            throw IngestError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (origins) origins->push_back("line " + std::to_string(line_no));
        if (nl == content.size()) break;
    }
    return docs;
}

ChunkedCorpus chunk_corpus(const std::vector<Document>& docs, const ChunkPolicy& policy,
                           const std::vector<std::string>* origins) {
    policy.validate();
    const auto describe = [&](std::size_t i) {
        std::string s = origins && i < origins->size() ? (*origins)[i] : "record " + std::to_string(i + 1);
        if (!docs[i].source_uri.empty()) s += ", source " + docs[i].source_uri;
        return s;
    };

    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto [it, inserted] = seen.emplace(docs[i].doc_id, i);
        if (!inserted) {
            throw IngestError("duplicate doc_id '" + docs[i].doc_id + "' (" + describe(it->second) +
                              " and " + describe(i) + ")");
        }
    }

    ChunkedCorpus out;
    for (const auto& d : docs) {
        auto chunks = chunk_document(d, policy);
        out.stats.docs += 1;
        out.stats.document_tokens += chunks.back().end_token;
        for (auto& c : chunks) {
            out.stats.chunk_tokens += c.end_token - c.start_token;
            out.chunks.push_back(std::move(c));
        }
        out.documents.push_back({d.doc_id, d.title, d.source_uri, d.meta});
    }
    out.stats.chunks = out.chunks.size();
    return out;
}

std::string serialize_chunk(const Chunk& c) {
    ordered_json j;
    j["chunk_id"] = c.chunk_id;
    j["doc_id"] = c.doc_id;
    j["seq"] = c.seq;
    j["start_token"] = c.start_token;
    j["end_token"] = c.end_token;
    j["start_char"] = c.start_char;
    j["end_char"] = c.end_char;
    j["text"] = c.text;
    return j.dump();
}

Chunk parse_chunk(std::string_view json_line) {
    try {
        const auto j = json::parse(json_line);
        Chunk c;
        c.chunk_id = j.at("chunk_id").get<std::string>();
        c.doc_id = j.at("doc_id").get<std::string>();
        c.seq = j.at("seq").get<std::size_t>();
        c.start_token = j.at("start_token").get<std::size_t>();
        c.end_token = j.at("end_token").get<std::size_t>();
        c.start_char = j.at("start_char").get<std::size_t>();
        c.end_char = j.at("end_char").get<std::size_t>();
        c.text = j.at("text").get<std::string>();
        return c;
    } catch (const json::exception& e) {
        throw IngestError(std::string("malformed chunk record: ") + e.what());
    }
}

std::string documents_sidecar_path(const std::string& store_path) {
    return store_path + ".docs.jsonl";
}

void write_store(const ChunkedCorpus& corpus, const std::string& store_path) {
    std::string chunks;
    for (const auto& c : corpus.chunks) {
        chunks += serialize_chunk(c);
        chunks.push_back('\n');
    }
    std::string docs;
    for (const auto& d : corpus.documents) {
        ordered_json j;
        j["doc_id"] = d.doc_id;
        j["title"] = d.title;
        j["source_uri"] = d.source_uri;
        j["meta"] = d.meta;
        docs += j.dump();
        docs.push_back('\n');
    }
    write_file_atomic(documents_sidecar_path(store_path), docs);
    write_file_atomic(store_path, chunks);
}

CorpusStats ingest_corpus(const std::string& input_path, const ChunkPolicy& policy,
                          const std::string& store_path) {
    policy.validate();
    std::string content;
    try {
        content = read_file(input_path);
    } catch (const Error& e) {
        throw IngestError(e.what());
    }
    std::vector<std::string> origins;
    const auto docs = read_documents_jsonl(content, &origins);
    const auto corpus = chunk_corpus(docs, policy, &origins);
    write_store(corpus, store_path);
    return corpus.stats;
}

ChunkStore load_store(const std::string& store_path) {
    ChunkStore store;
    const auto content = read_file(store_path);
    std::size_t line_no = 0;
    for (const auto& line : split(content, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            store.chunks.push_back(parse_chunk(line));
        } catch (const IngestError& e) {
            throw IngestError(store_path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    const auto sidecar = documents_sidecar_path(store_path);
    if (std::filesystem::exists(sidecar)) {
        for (const auto& line : split(read_file(sidecar), '\n')) {
            if (trim(line).empty()) continue;
            const auto j = json::parse(line);
            DocumentInfo d;
            d.doc_id = j.at("doc_id").get<std::string>();
            d.title = j.value("title", "");
            d.source_uri = j.value("source_uri", "");
            d.meta = j.value("meta", std::map<std::string, std::string>{});
            store.documents.emplace(d.doc_id, std::move(d));
        }
    }
    return store;
}

}  // namespace esapiens::ingest
