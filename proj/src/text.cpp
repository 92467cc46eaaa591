#include "esapiens/text.hpp"

#include <algorithm>
#include <cctype>
#include <iterator>

namespace esapiens::text {

namespace {

struct CodePoint {
    char32_t value;
    std::size_t length;
};

CodePoint decode_utf8(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return {b0, 1};
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return {0xFFFD, 1};
    }
    if (i + len > s.size()) return {0xFFFD, 1};
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len};
}

bool is_space_cp(char32_t c) {
    if (c < 0x80) return std::isspace(static_cast<int>(c)) != 0;
    return c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200B) ||
           c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000 ||
           c == 0xFEFF;
}

bool is_word_cp(char32_t c) {
    if (c < 0x80) return std::isalnum(static_cast<int>(c)) != 0;
    if (c == 0xFFFD || is_space_cp(c)) return false;
    if (c >= 0xA1 && c <= 0xBF) return c == 0xAA || c == 0xB5 || c == 0xBA;
    if (c == 0xD7 || c == 0xF7) return false;
    if (c >= 0x2010 && c <= 0x206F) return false;
    if (c >= 0x3001 && c <= 0x3003) return false;
    return true;
}

constexpr std::string_view kStopwords[] = {
    "a",       "about",   "above",  "after",   "again",   "against", "all",     "am",
    "an",      "and",     "any",    "are",     "as",      "at",      "be",      "because",
    "been",    "before",  "being",  "below",   "between", "both",    "but",     "by",
    "can",     "could",   "did",    "do",      "does",    "doing",   "down",    "during",
    "each",    "few",     "for",    "from",    "further", "had",     "has",     "have",
    "having",  "he",      "her",    "here",    "hers",    "herself", "him",     "himself",
    "his",     "how",     "i",      "if",      "in",      "into",    "is",      "it",
    "its",     "itself",  "just",   "me",      "more",    "most",    "my",      "myself",
    "no",      "nor",     "not",    "now",     "of",      "off",     "on",      "once",
    "only",    "or",      "other",  "our",     "ours",    "ourselves", "out",   "over",
    "own",     "same",    "she",    "should",  "so",      "some",    "such",    "than",
    "that",    "the",     "their",  "theirs",  "them",    "themselves", "then", "there",
    "these",   "they",    "this",   "those",   "through", "to",      "too",     "under",
    "until",   "up",      "very",   "was",     "we",      "were",    "what",    "when",
    "where",   "which",   "while",  "who",     "whom",    "why",     "will",    "with",
    "would",   "you",     "your",   "yours",   "yourself", "yourselves", "say",
};

}  // namespace

TokenizerId parse_tokenizer_id(std::string_view name) {
    if (name == "word-punct" || name == "default") return TokenizerId::word_punct;
    if (name == "whitespace") return TokenizerId::whitespace;
    throw ConfigError("unknown tokenizer_id: " + std::string(name));
}

std::string_view to_string(TokenizerId id) {
    switch (id) {
        case TokenizerId::word_punct: return "word-punct";
        case TokenizerId::whitespace: return "whitespace";
    }
    return "word-punct";
}

std::vector<Token> tokenize(std::string_view text, TokenizerId id) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    const std::size_t n = text.size();
    if (id == TokenizerId::whitespace) {
        while (i < n) {
            auto cp = decode_utf8(text, i);
            if (is_space_cp(cp.value)) {
                i += cp.length;
                continue;
            }
            const std::size_t start = i;
            while (i < n) {
                cp = decode_utf8(text, i);
                if (is_space_cp(cp.value)) break;
                i += cp.length;
            }
            tokens.push_back({{start, i}, true});
        }
        return tokens;
    }
    while (i < n) {
        auto cp = decode_utf8(text, i);
        if (is_space_cp(cp.value)) {
            i += cp.length;
            continue;
        }
        if (!is_word_cp(cp.value)) {
            tokens.push_back({{i, i + cp.length}, false});
            i += cp.length;
            continue;
        }
        const std::size_t start = i;
        while (i < n) {
            cp = decode_utf8(text, i);
            if (!is_word_cp(cp.value)) break;
            i += cp.length;
        }
        tokens.push_back({{start, i}, true});
    }
    return tokens;
}

std::size_t count_tokens(std::string_view text, TokenizerId id) {
    return tokenize(text, id).size();
}

std::size_t count_tokens(std::string_view text, std::string_view tokenizer_name) {
    return count_tokens(text, parse_tokenizer_id(tokenizer_name));
}

std::vector<std::string> index_terms(std::string_view text) {
    std::vector<std::string> terms;
    for (const auto& tok : tokenize(text, TokenizerId::word_punct)) {
        if (!tok.is_word) continue;
        terms.push_back(to_lower_ascii(text.substr(tok.span.begin, tok.span.length())));
    }
    return terms;
}

bool is_stopword(std::string_view lowered_term) {
    return std::find(std::begin(kStopwords), std::end(kStopwords), lowered_term) != std::end(kStopwords);
}

std::set<std::string> content_terms(std::string_view text) {
    std::set<std::string> out;
    for (auto& t : index_terms(text)) {
        if (!is_stopword(t)) out.insert(std::move(t));
    }
    return out;
}

}  // namespace esapiens::text
