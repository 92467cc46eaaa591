#include "esapiens/t2s.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

namespace esapiens::t2s {

std::string_view to_string(Validation v) {
    switch (v) {
        case Validation::ok: return "ok";
        case Validation::syntax_error: return "syntax_error";
        case Validation::unauthorized: return "unauthorized";
        case Validation::not_read_only: return "not_read_only";
        case Validation::empty_result: return "empty_result";
        case Validation::execution_error: return "execution_error";
    }
    return "?";
}

std::string_view to_string(Guardrail g) {
    switch (g) {
        case Guardrail::unit_conversion: return "unit_conversion";
        case Guardrail::date_bound: return "date_bound";
        case Guardrail::fuzzy_match: return "fuzzy_match";
        case Guardrail::readonly_reject: return "readonly_reject";
        case Guardrail::column_authorization: return "column_authorization";
    }
    return "?";
}

std::string_view to_string(ChartKind k) {
    switch (k) {
        case ChartKind::bar: return "bar";
        case ChartKind::line: return "line";
        case ChartKind::pie: return "pie";
        case ChartKind::none: return "none";
    }
    return "?";
}

std::string_view to_string(Final f) {
    switch (f) {
        case Final::answered: return "answered";
        case Final::fallback_placeholder: return "fallback_placeholder";
        case Final::reformulation_suggested: return "reformulation_suggested";
        case Final::rejected: return "rejected";
    }
    return "?";
}

bool GuardrailReport::has(Guardrail g) const {
    return std::any_of(applied.begin(), applied.end(), [g](const GuardrailNote& n) { return n.kind == g; });
}

nlohmann::json to_json(const SqlAttempt& a) {
    nlohmann::json notes = nlohmann::json::array();
    for (const auto& n : a.guardrails.applied) notes.push_back({{"kind", to_string(n.kind)}, {"note", n.note}});
    nlohmann::json j = {{"round", a.round},
                        {"sql", a.sql_text},
                        {"generated_sql", a.generated_sql},
                        {"validation", to_string(a.validation)},
                        {"error", a.error_message ? nlohmann::json(*a.error_message) : nlohmann::json(nullptr)},
                        {"row_count", a.rows ? a.rows->rows.size() : 0},
                        {"guardrails", notes},
                        {"anomalies", a.guardrails.anomalies},
                        {"hints", a.hints}};
    return j;
}

// ---------------------------------------------------------------------------

std::string build_prompt(const SchemaContext& schema, const std::string& question,
                         const std::vector<std::string>& history, const SqlAttempt* failure,
                         const std::vector<std::string>& hints) {
    std::ostringstream p;
    p << "You translate questions into SQL for a " << to_string(schema.dialect) << " database.\n"
      << "Return one read-only SELECT statement. If the question asks for two separate results, return two SELECT "
         "statements separated by ';' that share a join column.\n\n";
    p << "Tables:\n";
    bool any_rows = false;
    for (const auto& t : schema.tables) {
        p << "- " << t.name << "(";
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
            const auto& c = t.columns[i];
            if (i) p << ", ";
            p << c.name << " " << c.type;
            if (c.unit) p << " [unit: " << *c.unit << "]";
            if (!schema.authorized(t.name, c.name)) p << " [restricted]";
        }
        p << ")\n";
        any_rows = any_rows || !t.sample_rows.empty();
    }
    if (any_rows) {
        p << "\nSample rows:\n";
        for (const auto& t : schema.tables) {
            for (const auto& row : t.sample_rows) {
                p << t.name << ": ";
                for (std::size_t i = 0; i < row.size(); ++i) {
                    if (i) p << " | ";
                    p << (schema.authorized(t.name, t.columns[i].name) ? row[i] : "***");
                }
                p << "\n";
            }
        }
    }
    if (!history.empty()) {
        p << "\nConversation:\n";
        for (const auto& h : history) p << h << "\n";
    }
    p << "\nQuestion: " << question << "\n";
    if (!hints.empty()) {
        p << "\nValid values:\n";
        for (const auto& h : hints) p << "- " << h << "\n";
    }
    if (failure) {
        p << "\nCorrection: the previous SQL failed.\n"
          << "Previous SQL:\n" << failure->sql_text << "\n"
          << "Error (" << to_string(failure->validation) << "): " << failure->error_message.value_or("") << "\n";
    }
    p << "\nSQL:";
    return p.str();
}

std::string extract_sql(const std::string& reply) {
    std::string s = reply;
    static const std::regex fence(R"(```[a-zA-Z]*\s*\n?([\s\S]*?)```)");
    std::smatch m;
    if (std::regex_search(s, m, fence)) s = m[1].str();
    s = trim(s);
    if (s.size() >= 4 && to_lower_ascii(s.substr(0, 4)) == "sql:") s = trim(s.substr(4));
    return s;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const ChartDecision& c) {
    return {{"kind", to_string(c.kind)},
            {"x", c.x_column ? nlohmann::json(*c.x_column) : nlohmann::json(nullptr)},
            {"y", c.y_column ? nlohmann::json(*c.y_column) : nlohmann::json(nullptr)},
            {"reason", c.reason}};
}

ChartDecision chart_from_json(const nlohmann::json& j) {
    ChartDecision c;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "bar") c.kind = ChartKind::bar;
    else if (kind == "line") c.kind = ChartKind::line;
    else if (kind == "pie") c.kind = ChartKind::pie;
    else if (kind == "none") c.kind = ChartKind::none;
    else throw Error("unknown chart kind '" + kind + "'");
    if (j.contains("x") && !j["x"].is_null()) c.x_column = j["x"].get<std::string>();
    if (j.contains("y") && !j["y"].is_null()) c.y_column = j["y"].get<std::string>();
    c.reason = j.value("reason", "");
    return c;
}

namespace {

std::optional<double> as_number(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    return std::nullopt;
}

bool numeric_column(const ResultTable& t, std::size_t c) {
    bool any = false;
    for (const auto& r : t.rows) {
        if (std::holds_alternative<std::monostate>(r[c])) continue;
        if (!as_number(r[c])) return false;
        any = true;
    }
    return any;
}

bool temporal_column(const ResultTable& t, std::size_t c) {
    const auto name = to_lower_ascii(t.columns[c]);
    for (const char* k : {"date", "month", "year", "time", "day", "week"}) {
        if (name.find(k) != std::string::npos) return true;
    }
    static const std::regex iso(R"(\d{4}-\d{2}(-\d{2})?.*)");
    bool any = false;
    for (const auto& r : t.rows) {
        const auto* s = std::get_if<std::string>(&r[c]);
        if (!s) {
            if (std::holds_alternative<std::monostate>(r[c])) continue;
            return false;
        }
        if (!std::regex_match(*s, iso)) return false;
        any = true;
    }
    return any;
}

bool strictly_increasing(const ResultTable& t, std::size_t c) {
    if (t.rows.size() < 2) return false;
    for (std::size_t i = 1; i < t.rows.size(); ++i) {
        const auto a = as_number(t.rows[i - 1][c]), b = as_number(t.rows[i][c]);
        if (!a || !b || !(*b > *a)) return false;
    }
    return true;
}

bool mentions_word(const std::string& text, const std::vector<std::string>& words) {
    std::string w;
    const auto check = [&] { return std::find(words.begin(), words.end(), w) != words.end(); };
    for (unsigned char c : to_lower_ascii(text)) {
        if (std::isalnum(c)) {
            w.push_back(static_cast<char>(c));
        } else {
            if (check()) return true;
            w.clear();
        }
    }
    return check();
}

}  // namespace

ChartDecision decide_chart(const ResultTable& table, const std::string& user_hint) {
    ChartDecision d;
    if (table.columns.size() < 2 || table.rows.empty()) {
        d.reason = "needs at least two columns and one row";
        return d;
    }
    const std::size_t x = 0;
    std::vector<std::size_t> ys;
    for (std::size_t c = 1; c < table.columns.size(); ++c) {
        if (numeric_column(table, c)) ys.push_back(c);
    }
    if (ys.empty()) {
        d.reason = "no numeric measure";
        return d;
    }
    d.x_column = table.columns[x];
    d.y_column = table.columns[ys.front()];
    if (mentions_word(user_hint, {"bar", "bars"})) {
        d.kind = ChartKind::bar;
        d.reason = "requested bar chart";
        return d;
    }
    if (mentions_word(user_hint, {"line", "trend"})) {
        d.kind = ChartKind::line;
        d.reason = "requested line chart";
        return d;
    }
    if (mentions_word(user_hint, {"pie"})) {
        d.kind = ChartKind::pie;
        d.reason = "requested pie chart";
        return d;
    }
    const bool x_numeric = numeric_column(table, x);
    if (temporal_column(table, x) || (x_numeric && strictly_increasing(table, x))) {
        d.kind = ChartKind::line;
        d.reason = "ordered x axis with numeric measure";
        return d;
    }
    const auto n = table.rows.size();
    if (!x_numeric) {
        const bool non_negative = std::all_of(table.rows.begin(), table.rows.end(), [&](const auto& r) {
            const auto v = as_number(r[ys.front()]);
            return !v || *v >= 0;
        });
        if (n >= 2 && n <= 8 && ys.size() == 1 && non_negative &&
            mentions_word(user_hint, {"share", "shares", "proportion", "proportions", "percentage", "percent", "breakdown"})) {
            d.kind = ChartKind::pie;
            d.reason = "share of a small set of categories";
            return d;
        }
        if (n <= 30) {
            d.kind = ChartKind::bar;
            d.reason = "categorical x with numeric measure";
            return d;
        }
    }
    d.kind = ChartKind::none;
    d.x_column.reset();
    d.y_column.reset();
    d.reason = "no chart fits the result shape";
    return d;
}

// ---------------------------------------------------------------------------

void T2sConfig::validate() const {
    if (max_retries < 0) throw ConfigError("t2s.max_retries must be >= 0");
    if (row_limit == 0) throw ConfigError("t2s.row_limit must be positive");
}

nlohmann::json to_json(const T2sResult& r) {
    nlohmann::json attempts = nlohmann::json::array();
    for (const auto& a : r.attempts) attempts.push_back(to_json(a));
    return {{"final", to_string(r.final)},
            {"attempts", attempts},
            {"table", r.table ? to_json(*r.table) : nlohmann::json(nullptr)},
            {"chart", to_json(r.chart)},
            {"narrative", r.narrative},
            {"warnings", r.warnings},
            {"generation_calls", r.generation_calls}};
}

std::optional<ResultTable> merge_on_shared_column(const ResultTable& left, const ResultTable& right, std::string* key) {
    std::optional<std::size_t> li, ri;
    for (std::size_t i = 0; i < left.columns.size() && !li; ++i) {
        if (const auto r = right.column_index(left.columns[i])) {
            li = i;
            ri = r;
        }
    }
    if (!li) return std::nullopt;
    if (key) *key = left.columns[*li];
    ResultTable out;
    out.columns = left.columns;
    for (std::size_t c = 0; c < right.columns.size(); ++c) {
        if (c != *ri) out.columns.push_back(right.columns[c]);
    }
    for (const auto& lr : left.rows) {
        for (const auto& rr : right.rows) {
            if (to_display(lr[*li]) != to_display(rr[*ri])) continue;
            auto row = lr;
            for (std::size_t c = 0; c < rr.size(); ++c) {
                if (c != *ri) row.push_back(rr[c]);
            }
            out.rows.push_back(std::move(row));
        }
    }
    out.truncated = left.truncated || right.truncated;
    return out;
}

namespace {

std::string describe_guardrails(const std::vector<SqlAttempt>& attempts) {
    std::set<std::string> notes;
    for (const auto& a : attempts) {
        for (const auto& n : a.guardrails.applied) notes.insert(n.note);
    }
    if (notes.empty()) return "";
    return " Guardrails: " + join({notes.begin(), notes.end()}, "; ") + ".";
}

}  // namespace

T2sResult run_with_retry(const std::string& question, const SchemaContext& schema, providers::LanguageModel& llm,
                         Executor& executor, const Clock& clock, const T2sConfig& config,
                         const std::vector<std::string>& history) {
    config.validate();
    T2sResult result;
    std::vector<std::string> hints;
    const int rounds = 1 + config.max_retries;
    for (int round = 1; round <= rounds; ++round) {
        const SqlAttempt* failure = result.attempts.empty() ? nullptr : &result.attempts.back();
        const auto prompt = build_prompt(schema, question, history, failure, hints);
        SqlAttempt attempt;
        attempt.round = round;
        ++result.generation_calls;
        try {
            attempt.generated_sql = extract_sql(llm.complete(prompt));
        } catch (const ProviderError& e) {
            attempt.validation = Validation::syntax_error;
            attempt.error_message = std::string("generation failed: ") + e.what();
            result.attempts.push_back(std::move(attempt));
            continue;
        }
        const auto statements = sql::split_statements(attempt.generated_sql);
        attempt.sql_text = attempt.generated_sql;
        if (statements.empty()) {
            attempt.validation = Validation::syntax_error;
            attempt.error_message = "no SQL in the reply";
            result.attempts.push_back(std::move(attempt));
            continue;
        }

        // Statement type and column authorization for every statement before
        // anything reaches the executor.
        bool retry = false;
        for (const auto& s : statements) {
            const auto cls = sql::classify(s);
            if (cls.verdict == sql::StatementClass::not_read_only) {
                attempt.validation = Validation::not_read_only;
                attempt.error_message = cls.reason;
                attempt.guardrails.applied.push_back({Guardrail::readonly_reject, cls.reason});
                result.attempts.push_back(std::move(attempt));
                result.final = Final::rejected;
                result.narrative = "The generated query was rejected: " + cls.reason + ".";
                return result;
            }
            if (cls.verdict == sql::StatementClass::syntax_error) {
                attempt.validation = Validation::syntax_error;
                attempt.error_message = cls.reason;
                retry = true;
                break;
            }
            if (const auto bad = unauthorized_columns(s, schema); !bad.empty()) {
                attempt.validation = Validation::unauthorized;
                attempt.error_message = "not authorized to read " + join(bad, ", ");
                attempt.guardrails.applied.push_back({Guardrail::column_authorization, *attempt.error_message});
                result.attempts.push_back(std::move(attempt));
                result.final = Final::rejected;
                result.narrative = "The generated query was rejected: " + result.attempts.back().error_message.value() + ".";
                return result;
            }
        }
        if (retry) {
            result.attempts.push_back(std::move(attempt));
            continue;
        }

        std::vector<std::string> guarded;
        std::vector<ResultTable> tables;
        attempt.validation = Validation::ok;
        for (const auto& s : statements) {
            auto g = apply_guardrails(question, s, schema, clock, &executor);
            for (auto& n : g.report.applied) attempt.guardrails.applied.push_back(std::move(n));
            for (auto& a : g.report.anomalies) attempt.guardrails.anomalies.push_back(std::move(a));
            guarded.push_back(g.sql);
            auto outcome = validate_sql(g.sql, schema, executor, config.row_limit);
            if (outcome.validation != Validation::ok) {
                attempt.validation = outcome.validation;
                attempt.error_message = outcome.error;
                break;
            }
            tables.push_back(std::move(*outcome.table));
        }
        attempt.sql_text = join(guarded, ";\n");
        if (attempt.validation == Validation::ok) {
            ResultTable merged = tables.front();
            for (std::size_t i = 1; i < tables.size(); ++i) {
                auto m = merge_on_shared_column(merged, tables[i]);
                if (!m) {
                    attempt.validation = Validation::execution_error;
                    attempt.error_message = "statements share no column to merge on";
                    break;
                }
                merged = std::move(*m);
            }
            if (attempt.validation == Validation::ok && merged.rows.empty()) {
                attempt.validation = Validation::empty_result;
                attempt.error_message = "merged result has no rows";
            }
            if (attempt.validation == Validation::ok) attempt.rows = std::move(merged);
        }
        if (attempt.validation == Validation::empty_result && config.introspection) {
            attempt.hints = introspect_on_empty(attempt, schema, executor);
            for (const auto& h : attempt.hints) {
                if (std::find(hints.begin(), hints.end(), h) == hints.end()) hints.push_back(h);
            }
        }
        for (const auto& a : attempt.guardrails.anomalies) {
            if (std::find(result.warnings.begin(), result.warnings.end(), a) == result.warnings.end()) {
                result.warnings.push_back(a);
            }
        }
        result.attempts.push_back(std::move(attempt));
        const auto& done = result.attempts.back();
        if (done.validation == Validation::ok) {
            result.final = Final::answered;
            result.table = done.rows;
            result.chart = decide_chart(*result.table, question);
            std::ostringstream n;
            n << "Returned " << result.table->rows.size() << " row(s)";
            if (result.table->truncated) n << " (truncated at " << config.row_limit << ")";
            n << " after " << round << " attempt(s).";
            if (result.attempts.front().validation == Validation::empty_result) {
                n << " The first query returned no rows and was retried with valid values.";
            }
            n << describe_guardrails(result.attempts);
            result.narrative = n.str();
            return result;
        }
    }
    const auto last = result.attempts.back().validation;
    if (last == Validation::empty_result || last == Validation::execution_error) {
        result.final = Final::fallback_placeholder;
        result.narrative = "No matching data was found for this question." + describe_guardrails(result.attempts);
    } else {
        result.final = Final::reformulation_suggested;
        result.narrative =
            "The question could not be turned into a valid query. Try rephrasing it with the table or column names.";
    }
    return result;
}

}  // namespace esapiens::t2s
