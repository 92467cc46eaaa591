#pragma once

#include "esapiens/common.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

// Minimal dialect-tolerant SQL scanning: enough to classify a statement,
// find the columns it touches and rewrite spans of it. Not a grammar.
namespace esapiens::sql {

enum class TokenKind { word, quoted_identifier, string, number, symbol };

struct Token {
    TokenKind kind = TokenKind::symbol;
    std::string text;   // raw text; for quoted identifiers and strings, the unquoted value
    Span span;          // raw bytes in the source, quotes included
    int depth = 0;      // parenthesis depth at the token

    [[nodiscard]] bool is_word(std::string_view upper) const;
    [[nodiscard]] bool is_symbol(std::string_view s) const { return kind == TokenKind::symbol && text == s; }
    [[nodiscard]] bool is_identifier() const;  // word that is not a reserved keyword, or quoted identifier
    [[nodiscard]] std::string lower() const { return to_lower_ascii(text); }
};

class SqlSyntaxError : public Error {
public:
    using Error::Error;
};

/// Comments and whitespace are dropped. Throws SqlSyntaxError on an
/// unterminated string, quoted identifier or block comment.
std::vector<Token> tokenize(std::string_view sql);

bool is_keyword(std::string_view upper_word);

/// Split on top-level ';'. Empty statements are dropped; each piece is trimmed.
std::vector<std::string> split_statements(std::string_view sql);

enum class StatementClass { read_only, not_read_only, syntax_error };

struct Classification {
    StatementClass verdict = StatementClass::syntax_error;
    std::string reason;
};

/// Only a single SELECT (optionally introduced by WITH) is read-only.
/// Data-changing keywords anywhere, SELECT ... INTO, or several statements
/// are rejected.
Classification classify(std::string_view sql);

struct TableRef {
    std::string table;  // lower-cased
    std::string alias;  // lower-cased, equals table when absent
};

struct ColumnRef {
    std::string table;   // lower-cased
    std::string column;  // lower-cased
    Span span;           // of the column token ("*" for expansions)
    friend bool operator<(const ColumnRef& a, const ColumnRef& b) {
        return std::tie(a.table, a.column, a.span.begin) < std::tie(b.table, b.column, b.span.begin);
    }
};

/// table (lower-cased) -> ordered column names (lower-cased).
using Catalog = std::map<std::string, std::vector<std::string>>;

/// Tables named after FROM / JOIN (and comma lists following FROM) that
/// exist in `catalog`, with their aliases.
std::vector<TableRef> referenced_tables(const std::vector<Token>& tokens, const Catalog& catalog);

/// Every catalog column the statement can read. `*` and `t.*` expand to all
/// columns of the tables in scope; bare names resolve against every
/// referenced table that has them; unknown names are ignored.
std::vector<ColumnRef> referenced_columns(const std::vector<Token>& tokens, const Catalog& catalog);

/// Apply non-overlapping span replacements to `source`.
std::string apply_edits(std::string_view source, std::vector<std::pair<Span, std::string>> edits);

/// SQL string literal with single quotes doubled.
std::string quote_literal(std::string_view value);

}  // namespace esapiens::sql
