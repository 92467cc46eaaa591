#include "esapiens/t2s.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace esapiens::t2s {

using sql::Token;

std::vector<std::string> unauthorized_columns(const std::string& sql_text, const SchemaContext& schema) {
    std::vector<Token> tokens;
    try {
        tokens = sql::tokenize(sql_text);
    } catch (const sql::SqlSyntaxError&) {
        return {};
    }
    std::set<std::string> bad;
    for (const auto& ref : sql::referenced_columns(tokens, schema.catalog())) {
        if (!schema.authorized(ref.table, ref.column)) bad.insert(ref.table + "." + ref.column);
    }
    return {bad.begin(), bad.end()};
}

ValidationOutcome validate_sql(const std::string& sql_text, const SchemaContext& schema, Executor& executor,
                               std::size_t row_limit) {
    const auto cls = sql::classify(sql_text);
    if (cls.verdict == sql::StatementClass::syntax_error) return {Validation::syntax_error, cls.reason, std::nullopt};
    if (cls.verdict == sql::StatementClass::not_read_only) return {Validation::not_read_only, cls.reason, std::nullopt};
    if (const auto bad = unauthorized_columns(sql_text, schema); !bad.empty()) {
        return {Validation::unauthorized, "not authorized to read " + join(bad, ", "), std::nullopt};
    }
    const auto dry = executor.dry_run(sql_text);
    if (!dry.ok) {
        return {dry.unreachable ? Validation::execution_error : Validation::syntax_error,
                dry.error.value_or("dry run failed"), std::nullopt};
    }
    auto run = executor.execute(sql_text, row_limit);
    if (!run.table) return {Validation::execution_error, run.error.value_or("execution failed"), std::nullopt};
    if (run.table->rows.empty()) return {Validation::empty_result, "query returned no rows", std::move(run.table)};
    return {Validation::ok, std::nullopt, std::move(run.table)};
}

namespace {

struct Resolved {
    std::string table;
    const ColumnInfo* column = nullptr;
    Span span;            // qualifier included
    std::string as_text;  // as written, qualifier included
};

class Scope {
public:
    Scope(const std::vector<Token>& tokens, const std::string& source, const SchemaContext& schema)
        : tokens_(tokens), source_(source), schema_(schema) {
        refs_ = sql::referenced_tables(tokens, schema.catalog());
    }

    [[nodiscard]] const std::vector<sql::TableRef>& tables() const { return refs_; }

    // Column named by the identifier at token i, or nullopt. A qualified
    // reference is resolved at its column token.
    [[nodiscard]] std::optional<Resolved> resolve(std::size_t i) const {
        const auto& t = tokens_[i];
        if (!t.is_identifier()) return std::nullopt;
        if (i + 1 < tokens_.size() && tokens_[i + 1].is_symbol(".")) return std::nullopt;
        if (i + 1 < tokens_.size() && tokens_[i + 1].is_symbol("(")) return std::nullopt;
        Resolved r;
        if (i >= 2 && tokens_[i - 1].is_symbol(".")) {
            const auto alias = tokens_[i - 2].lower();
            for (const auto& ref : refs_) {
                if (ref.alias == alias || ref.table == alias) {
                    r.table = ref.table;
                    r.column = schema_.find_column(ref.table, t.text);
                    break;
                }
            }
            r.span = {tokens_[i - 2].span.begin, t.span.end};
        } else {
            for (const auto& ref : refs_) {
                if (const auto* c = schema_.find_column(ref.table, t.text)) {
                    r.table = ref.table;
                    r.column = c;
                    break;
                }
            }
            r.span = t.span;
        }
        if (!r.column) return std::nullopt;
        r.as_text = source_.substr(r.span.begin, r.span.length());
        return r;
    }

private:
    const std::vector<Token>& tokens_;
    const std::string& source_;
    const SchemaContext& schema_;
    std::vector<sql::TableRef> refs_;
};

bool is_clause_end(const Token& t) {
    for (const char* k : {"GROUP", "ORDER", "LIMIT", "HAVING", "UNION", "EXCEPT", "INTERSECT", "WINDOW", "QUALIFY", "OFFSET"}) {
        if (t.is_word(k)) return true;
    }
    return t.is_symbol(";");
}

struct UnitTarget {
    std::string suffix;
    std::string divisor;
};

std::optional<UnitTarget> requested_unit(const std::string& question) {
    static const std::regex miles(R"(\bmiles?\b|\bmi\b)", std::regex::icase);
    static const std::regex km(R"(\bkm\b|\bkilomet(er|re)s?\b)", std::regex::icase);
    if (std::regex_search(question, miles)) return UnitTarget{"miles", "1609.34"};
    if (std::regex_search(question, km)) return UnitTarget{"km", "1000"};
    return std::nullopt;
}

bool is_metres(const std::optional<std::string>& unit) {
    if (!unit) return false;
    const auto u = to_lower_ascii(*unit);
    return u == "metres" || u == "meters" || u == "m";
}

std::optional<int> number_word(const std::string& w) {
    static const std::vector<std::string> words = {"zero", "one",  "two", "three",  "four",   "five", "six",
                                                   "seven", "eight", "nine", "ten", "eleven", "twelve"};
    const auto it = std::find(words.begin(), words.end(), w);
    if (it != words.end()) return static_cast<int>(it - words.begin());
    if (!w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); })) {
        return std::stoi(w);
    }
    return std::nullopt;
}

struct Window {
    int count;
    std::string unit;  // day, week, month, year
};

std::optional<Window> requested_window(const std::string& question) {
    static const std::regex re(R"(\b(?:last|past|previous)\s+(?:(\d+|[a-z]+)\s+)?(day|week|month|year)s?\b)",
                               std::regex::icase);
    std::smatch m;
    const auto q = to_lower_ascii(question);
    if (!std::regex_search(q, m, re)) return std::nullopt;
    int n = 1;
    if (m[1].matched) {
        const auto parsed = number_word(m[1].str());
        if (!parsed) return std::nullopt;
        n = *parsed;
    }
    if (n <= 0) return std::nullopt;
    return Window{n, m[2].str()};
}

std::chrono::sys_days lower_bound(std::chrono::sys_days today, const Window& w) {
    using namespace std::chrono;
    if (w.unit == "day") return today - days{w.count};
    if (w.unit == "week") return today - days{7 * w.count};
    year_month_day ymd{today};
    if (w.unit == "month") {
        ymd = ymd - months{w.count};
    } else {
        ymd = ymd - years{w.count};
    }
    if (!ymd.ok()) ymd = year_month_day{ymd.year() / ymd.month() / last};
    return sys_days{ymd};
}

std::string like_pattern(const std::string& literal) {
    std::string out = "%";
    for (unsigned char c : to_lower_ascii(literal)) {
        if (std::isalnum(c) || c >= 0x80) {
            out.push_back(static_cast<char>(c));
        } else if (out.back() != '%') {
            out.push_back('%');
        }
    }
    if (out.back() != '%') out.push_back('%');
    return out;
}

bool has_separator(const std::string& s) {
    return std::any_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '-' || c == '_' || c == '/'; });
}

}  // namespace

GuardrailResult apply_guardrails(const std::string& question, const std::string& sql_text, const SchemaContext& schema,
                                 const Clock& clock, Executor* probe) {
    GuardrailResult out{sql_text, {}};
    std::vector<Token> tokens;
    try {
        tokens = sql::tokenize(sql_text);
    } catch (const sql::SqlSyntaxError&) {
        return out;
    }
    const Scope scope(tokens, sql_text, schema);
    std::vector<std::pair<Span, std::string>> edits;
    const auto n = tokens.size();

    // Unit conversion in select lists.
    if (const auto unit = requested_unit(question)) {
        std::set<std::string> converted;
        for (std::size_t s = 0; s < n; ++s) {
            if (!tokens[s].is_word("SELECT")) continue;
            const int depth = tokens[s].depth;
            for (std::size_t i = s + 1; i < n; ++i) {
                if (tokens[i].depth == depth && tokens[i].is_word("FROM")) break;
                if (tokens[i].depth < depth) break;
                const auto r = scope.resolve(i);
                if (!r || !is_metres(r->column->unit)) continue;
                if (i + 2 < n && tokens[i + 1].is_symbol("/") && tokens[i + 2].kind == sql::TokenKind::number) continue;
                const std::size_t first = r->span.begin == tokens[i].span.begin ? i : i - 2;
                const auto& prev = tokens[first - 1];
                const bool item_start = prev.is_word("SELECT") || prev.is_word("DISTINCT") || prev.is_word("ALL") ||
                                        (prev.is_symbol(",") && prev.depth == depth);
                const bool item_end = i + 1 >= n || (tokens[i + 1].depth == depth &&
                                                     (tokens[i + 1].is_symbol(",") || tokens[i + 1].is_word("FROM")));
                std::string expr = r->as_text + "/" + unit->divisor;
                if (item_start && item_end) {
                    expr += " AS " + r->column->name + "_" + unit->suffix;
                } else if (!(item_start && i + 1 < n && tokens[i + 1].is_word("AS")) &&
                           !(prev.is_symbol("(") && i + 1 < n && tokens[i + 1].is_symbol(")"))) {
                    expr = "(" + expr + ")";
                }
                edits.emplace_back(r->span, expr);
                converted.insert(r->table + "." + r->column->name);
            }
        }
        for (const auto& c : converted) {
            out.report.applied.push_back({Guardrail::unit_conversion, c + " converted from metres to " + unit->suffix});
        }
    }

    // Separator-tolerant equality on free text.
    for (std::size_t i = 0; i + 2 < n; ++i) {
        if (!tokens[i + 1].is_symbol("=") || tokens[i + 2].kind != sql::TokenKind::string) continue;
        const auto r = scope.resolve(i);
        if (!r || !is_text_type(r->column->type)) continue;
        const auto& literal = tokens[i + 2].text;
        if (!has_separator(literal)) continue;
        edits.emplace_back(Span{r->span.begin, tokens[i + 2].span.end},
                           "LOWER(" + r->as_text + ") LIKE " + sql::quote_literal(like_pattern(literal)));
        out.report.applied.push_back({Guardrail::fuzzy_match, r->table + "." + r->column->name + " = " +
                                                                   sql::quote_literal(literal) +
                                                                   " matched ignoring case and separators"});
    }

    // Relative date window on the first in-scope table with a date column.
    if (const auto window = requested_window(question)) {
        const sql::TableRef* ref = nullptr;
        const ColumnInfo* col = nullptr;
        for (const auto& t : scope.tables()) {
            if (const auto* info = schema.find_table(t.table)) {
                for (const auto& c : info->columns) {
                    if (is_temporal_type(c.type)) {
                        ref = &t;
                        col = &c;
                        break;
                    }
                }
            }
            if (col) break;
        }
        if (col) {
            const auto today = clock.today();
            const auto lo = iso_date(lower_bound(today, *window));
            const auto hi = iso_date(today);
            const auto qualified = scope.tables().size() > 1 ? ref->alias + "." + col->name : col->name;
            const auto bound = qualified + " >= " + sql::quote_literal(lo) + " AND " + qualified + " <= " +
                               sql::quote_literal(hi);
            if (sql_text.find(bound) == std::string::npos) {
                std::size_t from = n;
                for (std::size_t i = 0; i < n; ++i) {
                    if (tokens[i].depth == 0 && tokens[i].is_word("FROM")) {
                        from = i;
                        break;
                    }
                }
                if (from < n) {
                    std::size_t where = n, end = n;
                    for (std::size_t i = from + 1; i < n; ++i) {
                        if (tokens[i].depth != 0) continue;
                        if (tokens[i].is_word("WHERE") && where == n) where = i;
                        if (is_clause_end(tokens[i])) {
                            end = i;
                            break;
                        }
                    }
                    if (where < n && where + 1 < end) {
                        edits.emplace_back(Span{tokens[where + 1].span.begin, tokens[where + 1].span.begin}, "(");
                        edits.emplace_back(Span{tokens[end - 1].span.end, tokens[end - 1].span.end}, ") AND " + bound);
                    } else {
                        const std::size_t at = end < n ? tokens[end].span.begin : tokens[n - 1].span.end;
                        edits.emplace_back(Span{at, at}, end < n ? "WHERE " + bound + " " : " WHERE " + bound);
                    }
                    out.report.applied.push_back({Guardrail::date_bound, ref->table + "." + col->name + " bounded to [" +
                                                                             lo + ", " + hi + "]"});
                }
            }
            if (probe) {
                const auto count = probe->execute("SELECT COUNT(*) FROM " + ref->table + " WHERE " + col->name + " > " +
                                                      sql::quote_literal(hi),
                                                  1);
                if (count.table && !count.table->rows.empty()) {
                    const auto& v = count.table->rows[0][0];
                    if (const auto* k = std::get_if<std::int64_t>(&v); k && *k > 0) {
                        out.report.anomalies.push_back(std::to_string(*k) + " row(s) in " + ref->table +
                                                       " are dated after " + hi + " and were excluded");
                    }
                }
            }
        }
    }

    // Right to left on the original offsets; at a shared offset the
    // replacement goes first so an insertion lands in front of it.
    std::stable_partition(edits.begin(), edits.end(), [](const auto& e) { return e.first.length() > 0; });
    std::stable_sort(edits.begin(), edits.end(), [](const auto& a, const auto& b) { return a.first.begin > b.first.begin; });
    std::string rewritten = sql_text;
    for (const auto& [span, text] : edits) rewritten.replace(span.begin, span.length(), text);
    out.sql = rewritten;
    return out;
}

std::vector<std::string> introspect_on_empty(const SqlAttempt& failed, const SchemaContext& schema, Executor& executor) {
    std::vector<std::string> hints;
    std::vector<std::string> statements = sql::split_statements(failed.sql_text);
    std::set<std::string> seen;
    for (const auto& stmt : statements) {
        std::vector<Token> tokens;
        try {
            tokens = sql::tokenize(stmt);
        } catch (const sql::SqlSyntaxError&) {
            continue;
        }
        const Scope scope(tokens, stmt, schema);
        const auto n = tokens.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = scope.resolve(i);
            if (!r || !is_text_type(r->column->type) || !schema.authorized(r->table, r->column->name)) continue;
            std::size_t j = i + 1;
            if (j < n && tokens[j].is_symbol(")")) ++j;  // LOWER(col) LIKE ...
            if (j < n && tokens[j].is_word("NOT")) ++j;
            if (j >= n) continue;
            const auto& op = tokens[j];
            const bool compares = op.is_symbol("=") || op.is_symbol("<>") || op.is_symbol("!=") || op.is_word("LIKE") ||
                                  op.is_word("ILIKE") || op.is_word("IN") || op.is_word("GLOB");
            if (!compares) continue;
            const auto key = r->table + "." + r->column->name;
            if (!seen.insert(key).second) continue;
            const auto res = executor.execute("SELECT DISTINCT \"" + r->column->name + "\" FROM \"" + r->table +
                                                  "\" WHERE \"" + r->column->name + "\" IS NOT NULL LIMIT 20",
                                              20);
            if (!res.table || res.table->rows.empty()) continue;
            std::vector<std::string> values;
            for (const auto& row : res.table->rows) values.push_back(to_display(row[0]));
            hints.push_back(r->column->name + " ∈ {" + join(values, ", ") + "}");
        }
    }
    return hints;
}

}  // namespace esapiens::t2s
