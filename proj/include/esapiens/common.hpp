#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace esapiens {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (unknown tokenizer, bad policy, bad provider setup).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Ingestion failure; carries the offending document id or input line.
class IngestError : public Error {
public:
    using Error::Error;
};

/// Index construction or persistence failure.
class IndexError : public Error {
public:
    using Error::Error;
};

/// A provider (local mock or remote HTTP) failed. Retryable by callers.
class ProviderError : public Error {
public:
    using Error::Error;
};

/// Evaluation input problem (mismatched runs, duplicate ids).
class EvalError : public Error {
public:
    using Error::Error;
};

/// Half-open byte range [begin, end) into a UTF-8 string.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    [[nodiscard]] std::size_t length() const { return end > begin ? end - begin : 0; }
    friend bool operator==(const Span&, const Span&) = default;
};

/// Hex-encoded SHA-256 of `data`, truncated to `hex_chars` characters.
std::string sha256_hex(std::string_view data, std::size_t hex_chars = 64);

std::string to_lower_ascii(std::string_view s);
std::string trim(std::string_view s);
bool contains_icase(std::string_view haystack, std::string_view needle);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Collapse every whitespace run into one space and trim the ends.
std::string collapse_whitespace(std::string_view s);

/// Write `content` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::string& path, std::string_view content);
std::string read_file(const std::string& path);

}  // namespace esapiens
