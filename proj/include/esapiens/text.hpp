#pragma once

#include "esapiens/common.hpp"

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace esapiens::text {

/// Tokenization schemes. `word_punct` is the default: maximal runs of
/// letters/digits, plus every punctuation mark as its own token. Non-ASCII
/// code points count as letters unless they are Unicode spaces or
/// punctuation from the General Punctuation / Latin-1 blocks.
enum class TokenizerId { word_punct, whitespace };

TokenizerId parse_tokenizer_id(std::string_view name);
std::string_view to_string(TokenizerId id);

struct Token {
    Span span;      // byte offsets into the source text
    bool is_word;   // false for single punctuation tokens
};

std::vector<Token> tokenize(std::string_view text, TokenizerId id = TokenizerId::word_punct);
std::size_t count_tokens(std::string_view text, TokenizerId id = TokenizerId::word_punct);
std::size_t count_tokens(std::string_view text, std::string_view tokenizer_name);

/// Lower-cased word tokens in order, punctuation dropped. Used by the sparse
/// index, the hash embedder and the lexical scorers.
std::vector<std::string> index_terms(std::string_view text);

inline constexpr std::string_view kStopwordsVersion = "stopwords-v1";
bool is_stopword(std::string_view lowered_term);

/// Distinct index terms with stop-words removed.
std::set<std::string> content_terms(std::string_view text);

}  // namespace esapiens::text
