#include "esapiens/sql.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>

namespace esapiens::sql {

namespace {

constexpr std::string_view kKeywords[] = {
    "ALL",      "ALTER",     "ANALYZE",  "AND",      "AS",        "ASC",      "ATTACH",  "BEGIN",   "BETWEEN",
    "BY",       "CALL",      "CASE",     "CAST",     "COLLATE",   "COMMIT",   "CREATE",  "CROSS",   "DELETE",
    "DESC",     "DESCRIBE",  "DETACH",   "DISTINCT", "DROP",      "ELSE",     "END",     "ESCAPE",  "EXCEPT",
    "EXEC",     "EXECUTE",   "EXISTS",   "EXPLAIN",  "FALSE",     "FETCH",    "FILTER",  "FROM",    "FULL",
    "GLOB",     "GRANT",     "GROUP",    "HAVING",   "ILIKE",     "IN",       "INDEX",   "INNER",   "INSERT",
    "INTERSECT", "INTO",     "IS",       "ISNULL",   "JOIN",      "LEFT",     "LIKE",    "LIMIT",   "MERGE",
    "NATURAL",  "NOT",       "NOTNULL",  "NULL",     "NULLS",     "OFFSET",   "ON",      "OR",      "ORDER",
    "OUTER",    "OVER",      "PARTITION", "PRAGMA",  "QUALIFY",   "RECURSIVE", "REGEXP", "REINDEX", "RELEASE",
    "RENAME",   "REPLACE",   "REVOKE",   "RIGHT",    "ROLLBACK",  "SAVEPOINT", "SELECT", "SET",     "SHOW",
    "TABLE",    "THEN",      "TRIGGER",  "TRUE",     "TRUNCATE",  "UNION",    "UPDATE",  "UPSERT",  "USE",
    "USING",    "VACUUM",    "VALUES",   "VIEW",     "WHEN",      "WHERE",    "WINDOW",  "WITH",
};

constexpr std::string_view kBlocked[] = {
    "ALTER",  "ANALYZE", "ATTACH",  "BEGIN",  "CALL",    "COMMIT",   "CREATE",   "DELETE",  "DETACH",
    "DROP",   "EXEC",    "EXECUTE", "GRANT",  "INSERT",  "MERGE",    "PRAGMA",   "REINDEX", "RENAME",
    "REPLACE", "REVOKE", "ROLLBACK", "SAVEPOINT", "TRUNCATE", "UPDATE", "UPSERT", "VACUUM",
};

constexpr std::string_view kOtherStatements[] = {"SHOW", "DESCRIBE", "EXPLAIN", "USE", "SET", "VALUES", "RELEASE"};

template <std::size_t N>
bool in(const std::string_view (&list)[N], std::string_view w) {
    return std::find(std::begin(list), std::end(list), w) != std::end(list);
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

bool word_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; }

}  // namespace

bool Token::is_word(std::string_view up) const { return kind == TokenKind::word && upper(text) == up; }

bool Token::is_identifier() const {
    if (kind == TokenKind::quoted_identifier) return true;
    return kind == TokenKind::word && !is_keyword(upper(text));
}

bool is_keyword(std::string_view upper_word) { return in(kKeywords, upper_word); }

std::vector<Token> tokenize(std::string_view sql) {
    std::vector<Token> out;
    const std::size_t n = sql.size();
    std::size_t i = 0;
    int depth = 0;
    while (i < n) {
        const auto c = static_cast<unsigned char>(sql[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (c == '-' && i + 1 < n && sql[i + 1] == '-') {
            while (i < n && sql[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && sql[i + 1] == '*') {
            const auto end = sql.find("*/", i + 2);
            if (end == std::string_view::npos) throw SqlSyntaxError("unterminated block comment");
            i = end + 2;
            continue;
        }
        Token t;
        t.depth = depth;
        const std::size_t start = i;
        if (c == '\'' || c == '"' || c == '`' || c == '[') {
            const char close = c == '[' ? ']' : static_cast<char>(c);
            std::string value;
            ++i;
            bool closed = false;
            while (i < n) {
                if (sql[i] == close) {
                    if (close != ']' && i + 1 < n && sql[i + 1] == close) {
                        value.push_back(close);
                        i += 2;
                        continue;
                    }
                    ++i;
                    closed = true;
                    break;
                }
                value.push_back(sql[i++]);
            }
            if (!closed) {
                throw SqlSyntaxError(c == '\'' ? "unterminated string literal" : "unterminated quoted identifier");
            }
            t.kind = c == '\'' ? TokenKind::string : TokenKind::quoted_identifier;
            t.text = std::move(value);
        } else if (std::isdigit(c) || (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
            while (i < n && (std::isdigit(static_cast<unsigned char>(sql[i])) || sql[i] == '.')) ++i;
            if (i < n && (sql[i] == 'e' || sql[i] == 'E')) {
                std::size_t j = i + 1;
                if (j < n && (sql[j] == '+' || sql[j] == '-')) ++j;
                if (j < n && std::isdigit(static_cast<unsigned char>(sql[j]))) {
                    i = j;
                    while (i < n && std::isdigit(static_cast<unsigned char>(sql[i]))) ++i;
                }
            }
            t.kind = TokenKind::number;
            t.text = std::string(sql.substr(start, i - start));
        } else if (word_start(c)) {
            while (i < n && word_char(static_cast<unsigned char>(sql[i]))) ++i;
            t.kind = TokenKind::word;
            t.text = std::string(sql.substr(start, i - start));
        } else {
            static constexpr std::string_view kTwo[] = {"<=", ">=", "<>", "!=", "||", "::", "=="};
            const auto two = sql.substr(i, 2);
            i += (two.size() == 2 && in(kTwo, two)) ? 2 : 1;
            t.kind = TokenKind::symbol;
            t.text = std::string(sql.substr(start, i - start));
            if (t.text == "(") {
                ++depth;
            } else if (t.text == ")") {
                if (--depth < 0) throw SqlSyntaxError("unbalanced ')'");
                t.depth = depth;
            }
        }
        t.span = {start, i};
        out.push_back(std::move(t));
    }
    if (depth != 0) throw SqlSyntaxError("unbalanced '('");
    return out;
}

std::vector<std::string> split_statements(std::string_view sql) {
    std::vector<std::string> out;
    std::vector<Token> tokens;
    try {
        tokens = tokenize(sql);
    } catch (const SqlSyntaxError&) {
        const auto t = trim(sql);
        if (!t.empty()) out.push_back(t);
        return out;
    }
    std::size_t begin = 0;
    for (const auto& t : tokens) {
        if (t.is_symbol(";") && t.depth == 0) {
            auto piece = trim(sql.substr(begin, t.span.begin - begin));
            if (!piece.empty()) out.push_back(std::move(piece));
            begin = t.span.end;
        }
    }
    auto last = trim(sql.substr(begin));
    if (!last.empty()) out.push_back(std::move(last));
    return out;
}

Classification classify(std::string_view sql) {
    std::vector<Token> tokens;
    try {
        tokens = tokenize(sql);
    } catch (const SqlSyntaxError& e) {
        return {StatementClass::syntax_error, e.what()};
    }
    // Trailing semicolons are harmless; anything after one is a second statement.
    while (!tokens.empty() && tokens.back().is_symbol(";")) tokens.pop_back();
    if (tokens.empty()) return {StatementClass::syntax_error, "empty statement"};
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (t.is_symbol(";")) return {StatementClass::not_read_only, "multiple statements"};
        if (t.kind != TokenKind::word) continue;
        const auto up = upper(t.text);
        const bool call = i + 1 < tokens.size() && tokens[i + 1].is_symbol("(");
        if (in(kBlocked, up) && !call) return {StatementClass::not_read_only, up + " is not allowed"};
        if (up == "INTO") return {StatementClass::not_read_only, "SELECT ... INTO writes data"};
    }
    std::size_t first = 0;
    while (first < tokens.size() && tokens[first].is_symbol("(")) ++first;
    if (first == tokens.size()) return {StatementClass::syntax_error, "no statement"};
    const auto& head = tokens[first];
    if (head.is_word("SELECT") || (first == 0 && head.is_word("WITH"))) {
        if (head.is_word("WITH")) {
            const bool has_select = std::any_of(tokens.begin(), tokens.end(), [](const Token& t) { return t.is_word("SELECT"); });
            if (!has_select) return {StatementClass::not_read_only, "WITH without SELECT"};
        }
        return {StatementClass::read_only, ""};
    }
    if (head.kind == TokenKind::word && in(kOtherStatements, upper(head.text))) {
        return {StatementClass::not_read_only, upper(head.text) + " statements are not allowed"};
    }
    return {StatementClass::syntax_error, "expected SELECT near '" + head.text + "'"};
}

namespace {

struct Scan {
    std::vector<TableRef> tables;
    std::set<std::size_t> skip;  // token indices that name tables, aliases or CTEs
};

Scan scan_tables(const std::vector<Token>& tokens, const Catalog& catalog) {
    Scan s;
    const auto n = tokens.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = tokens[i];
        // CTE names: WITH name AS (   /   , name AS (
        if (t.is_identifier() && i + 2 < n && tokens[i + 1].is_word("AS") && tokens[i + 2].is_symbol("(") && i > 0 &&
            (tokens[i - 1].is_word("WITH") || tokens[i - 1].is_word("RECURSIVE") || tokens[i - 1].is_symbol(","))) {
            s.skip.insert(i);
            continue;
        }
        if (t.is_word("AS") && i + 1 < n && tokens[i + 1].is_identifier()) {
            s.skip.insert(i + 1);
            continue;
        }
        if (!(t.is_word("FROM") || t.is_word("JOIN"))) continue;
        const bool list = t.is_word("FROM");
        std::size_t j = i + 1;
        while (j < n) {
            if (!tokens[j].is_identifier()) break;
            std::size_t name_at = j;
            if (j + 2 < n && tokens[j + 1].is_symbol(".") && tokens[j + 2].is_identifier()) name_at = j + 2;
            for (std::size_t k = j; k <= name_at; ++k) s.skip.insert(k);
            TableRef ref;
            ref.table = tokens[name_at].lower();
            ref.alias = ref.table;
            j = name_at + 1;
            if (j < n && tokens[j].is_word("AS") && j + 1 < n && tokens[j + 1].is_identifier()) {
                ref.alias = tokens[j + 1].lower();
                s.skip.insert(j + 1);
                j += 2;
            } else if (j < n && tokens[j].is_identifier()) {
                ref.alias = tokens[j].lower();
                s.skip.insert(j);
                ++j;
            }
            if (catalog.count(ref.table)) s.tables.push_back(ref);
            if (list && j < n && tokens[j].is_symbol(",")) {
                ++j;
                continue;
            }
            break;
        }
    }
    return s;
}

}  // namespace

std::vector<TableRef> referenced_tables(const std::vector<Token>& tokens, const Catalog& catalog) {
    return scan_tables(tokens, catalog).tables;
}

std::vector<ColumnRef> referenced_columns(const std::vector<Token>& tokens, const Catalog& catalog) {
    const auto scan = scan_tables(tokens, catalog);
    std::map<std::string, std::string> alias_to_table;
    for (const auto& r : scan.tables) {
        alias_to_table[r.alias] = r.table;
        alias_to_table.emplace(r.table, r.table);
    }
    const auto has_column = [&](const std::string& table, const std::string& col) {
        const auto& cols = catalog.at(table);
        return std::find(cols.begin(), cols.end(), col) != cols.end();
    };
    std::vector<ColumnRef> out;
    const auto n = tokens.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = tokens[i];
        if (t.is_symbol("*")) {
            const bool expand = i > 0 && (tokens[i - 1].is_word("SELECT") || tokens[i - 1].is_word("DISTINCT") ||
                                          tokens[i - 1].is_word("ALL") || tokens[i - 1].is_symbol(","));
            if (!expand) continue;
            for (const auto& r : scan.tables) {
                for (const auto& c : catalog.at(r.table)) out.push_back({r.table, c, t.span});
            }
            continue;
        }
        if (!t.is_identifier() || scan.skip.count(i)) continue;
        if (i > 0 && tokens[i - 1].is_symbol(".")) continue;
        if (i + 2 < n && tokens[i + 1].is_symbol(".")) {
            const auto it = alias_to_table.find(t.lower());
            const auto& target = tokens[i + 2];
            if (it != alias_to_table.end()) {
                if (target.is_symbol("*")) {
                    for (const auto& c : catalog.at(it->second)) out.push_back({it->second, c, target.span});
                } else if (target.is_identifier() && has_column(it->second, target.lower())) {
                    out.push_back({it->second, target.lower(), target.span});
                }
            }
            i += 2;
            continue;
        }
        if (i + 1 < n && tokens[i + 1].is_symbol("(")) continue;
        const auto name = t.lower();
        for (const auto& r : scan.tables) {
            if (has_column(r.table, name)) out.push_back({r.table, name, t.span});
        }
    }
    return out;
}

std::string apply_edits(std::string_view source, std::vector<std::pair<Span, std::string>> edits) {
    std::sort(edits.begin(), edits.end(), [](const auto& a, const auto& b) { return a.first.begin < b.first.begin; });
    std::string out;
    std::size_t pos = 0;
    for (const auto& [span, text] : edits) {
        if (span.begin < pos) continue;
        out.append(source.substr(pos, span.begin - pos));
        out += text;
        pos = span.end;
    }
    out.append(source.substr(pos));
    return out;
}

std::string quote_literal(std::string_view value) {
    std::string out = "'";
    for (char c : value) {
        out.push_back(c);
        if (c == '\'') out.push_back('\'');
    }
    out.push_back('\'');
    return out;
}

}  // namespace esapiens::sql
