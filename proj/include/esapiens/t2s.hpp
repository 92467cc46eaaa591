#pragma once

#include "esapiens/common.hpp"
#include "esapiens/providers.hpp"
#include "esapiens/sql.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

struct sqlite3;

namespace esapiens::t2s {

// ---------------------------------------------------------------------------
// Results and executors
// ---------------------------------------------------------------------------

using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

nlohmann::json to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);
std::string to_display(const Value& v);

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Value>> rows;
    bool truncated = false;

    [[nodiscard]] std::optional<std::size_t> column_index(std::string_view name) const;
    friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

nlohmann::json to_json(const ResultTable& t);
ResultTable table_from_json(const nlohmann::json& j);

struct ExecResult {
    std::optional<ResultTable> table;
    std::optional<std::string> error;
    bool unreachable = false;  // connection-level failure
};

struct DryRunResult {
    bool ok = false;
    std::optional<std::string> error;
    bool unreachable = false;
};

/// execute(sql, row_limit) -> columns + rows + error; dry_run(sql) -> ok/error.
class Executor {
public:
    virtual ~Executor() = default;
    virtual ExecResult execute(const std::string& sql, std::size_t row_limit) = 0;
    virtual DryRunResult dry_run(const std::string& sql) = 0;
};

/// SQLite-backed executor. The connection only authorizes reads once open.
class SqliteExecutor final : public Executor {
public:
    /// `path` may be ":memory:" or a database file (opened read-only).
    explicit SqliteExecutor(const std::string& path);
    /// Fresh in-memory database populated by `seed_sql`, then locked to reads.
    static std::unique_ptr<SqliteExecutor> from_script(const std::string& seed_sql);
    ~SqliteExecutor() override;
    SqliteExecutor(const SqliteExecutor&) = delete;
    SqliteExecutor& operator=(const SqliteExecutor&) = delete;

    ExecResult execute(const std::string& sql, std::size_t row_limit) override;
    DryRunResult dry_run(const std::string& sql) override;

    /// Table names with (column, declared type) pairs, in schema order.
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> describe();

    [[nodiscard]] bool connected() const { return db_ != nullptr; }

private:
    SqliteExecutor() = default;
    std::mutex mu_;
    sqlite3* db_ = nullptr;
    std::string open_error_;
    bool internal_ = false;  // bypasses the read-only authorizer for describe()
    static int authorize(void* self, int action, const char*, const char*, const char*, const char*);
};

// ---------------------------------------------------------------------------
// Schema context
// ---------------------------------------------------------------------------

enum class Dialect { generic, mysql_like, bigquery_like };
Dialect parse_dialect(std::string_view s);
std::string_view to_string(Dialect d);

struct ColumnInfo {
    std::string name;
    std::string type;
    std::optional<std::string> unit;  // e.g. "metres"
};

struct TableInfo {
    std::string name;
    std::vector<ColumnInfo> columns;
    std::vector<std::vector<std::string>> sample_rows;  // at most 3
};

struct SchemaContext {
    Dialect dialect = Dialect::generic;
    std::vector<TableInfo> tables;
    std::set<std::string> authorized_columns;  // "table.column", lower-cased

    void validate() const;
    [[nodiscard]] const TableInfo* find_table(std::string_view name) const;
    [[nodiscard]] const ColumnInfo* find_column(std::string_view table, std::string_view column) const;
    [[nodiscard]] bool authorized(std::string_view table, std::string_view column) const;
    [[nodiscard]] sql::Catalog catalog() const;
};

/// Schema from a live executor: all tables, up to 3 sample rows each.
/// Empty `authorized` authorizes every column; units map "table.column" to a unit.
SchemaContext introspect_schema(SqliteExecutor& executor, Dialect dialect, const std::set<std::string>& authorized,
                                const std::map<std::string, std::string>& units);

bool is_numeric_type(std::string_view declared);
bool is_text_type(std::string_view declared);
bool is_temporal_type(std::string_view declared);

// ---------------------------------------------------------------------------
// Fixtures: logistics and retail/music databases
// ---------------------------------------------------------------------------

enum class Fixture { logistics, retail };
std::unique_ptr<SqliteExecutor> make_fixture_executor(Fixture f);
SchemaContext fixture_schema(Fixture f);
/// Logical "today" the fixtures are written against.
inline constexpr const char* kFixtureToday = "2025-06-30";

// ---------------------------------------------------------------------------
// Clock
// ---------------------------------------------------------------------------

class Clock {
public:
    virtual ~Clock() = default;
    [[nodiscard]] virtual std::chrono::sys_days today() const = 0;
};

class FixedClock final : public Clock {
public:
    explicit FixedClock(std::chrono::sys_days day) : day_(day) {}
    explicit FixedClock(std::string_view iso_date);
    [[nodiscard]] std::chrono::sys_days today() const override { return day_; }

private:
    std::chrono::sys_days day_;
};

class SystemClock final : public Clock {
public:
    [[nodiscard]] std::chrono::sys_days today() const override;
};

std::string iso_date(std::chrono::sys_days d);
std::chrono::sys_days parse_iso_date(std::string_view s);

// ---------------------------------------------------------------------------
// Attempts, guardrails, prompt
// ---------------------------------------------------------------------------

enum class Validation { ok, syntax_error, unauthorized, not_read_only, empty_result, execution_error };
std::string_view to_string(Validation v);

enum class Guardrail { unit_conversion, date_bound, fuzzy_match, readonly_reject, column_authorization };
std::string_view to_string(Guardrail g);

struct GuardrailNote {
    Guardrail kind = Guardrail::unit_conversion;
    std::string note;
};

struct GuardrailReport {
    std::vector<GuardrailNote> applied;
    std::vector<std::string> anomalies;  // e.g. future-dated rows excluded
    [[nodiscard]] bool has(Guardrail g) const;
};

struct SqlAttempt {
    int round = 1;
    std::string sql_text;        // as executed, after guardrails
    std::string generated_sql;   // as produced by the model
    Validation validation = Validation::syntax_error;
    std::optional<std::string> error_message;
    std::optional<ResultTable> rows;
    GuardrailReport guardrails;
    std::vector<std::string> hints;  // introspection results gathered after this attempt
};

nlohmann::json to_json(const SqlAttempt& a);

/// Schema, sample rows (when any), dialect tag and question; valid-value
/// hints and the failed attempt go under their own sections.
std::string build_prompt(const SchemaContext& schema, const std::string& question,
                         const std::vector<std::string>& history, const SqlAttempt* failure,
                         const std::vector<std::string>& hints = {});

/// SQL from a model reply: code fences and a leading "SQL:" label removed.
std::string extract_sql(const std::string& reply);

struct ValidationOutcome {
    Validation validation = Validation::syntax_error;
    std::optional<std::string> error;
    std::optional<ResultTable> table;
};

/// Statement type, then column authorization, then dry run and execution.
/// The executor is only reached when the first two checks pass.
ValidationOutcome validate_sql(const std::string& sql_text, const SchemaContext& schema, Executor& executor,
                               std::size_t row_limit = 1000);

/// Authorization-only pre-check (no executor). Returns offending "table.column" names.
std::vector<std::string> unauthorized_columns(const std::string& sql_text, const SchemaContext& schema);

/// Distinct values of the text columns compared against literals in the
/// failed statement, as prompt hints "col ∈ {a, b}".
std::vector<std::string> introspect_on_empty(const SqlAttempt& failed, const SchemaContext& schema,
                                             Executor& executor);

struct GuardrailResult {
    std::string sql;
    GuardrailReport report;
};

/// Unit conversion in the select list, [now - N units, now] bounds on the
/// date column for "last N days/weeks/months/years", and separator-tolerant
/// case-insensitive matching for equality on free-text values. With a probe
/// executor, rows dated after today are counted and reported as anomalies.
GuardrailResult apply_guardrails(const std::string& question, const std::string& sql_text,
                                 const SchemaContext& schema, const Clock& clock, Executor* probe = nullptr);

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

enum class ChartKind { bar, line, pie, none };
std::string_view to_string(ChartKind k);

struct ChartDecision {
    ChartKind kind = ChartKind::none;
    std::optional<std::string> x_column;
    std::optional<std::string> y_column;
    std::string reason;
};

nlohmann::json to_json(const ChartDecision& c);
ChartDecision chart_from_json(const nlohmann::json& j);

/// Priority: explicit hint; temporal or ordered x with numeric y -> line;
/// 2-8 categories with one non-negative numeric y -> pie for share questions,
/// else bar; up to 30 categories with numeric y -> bar; otherwise none.
ChartDecision decide_chart(const ResultTable& table, const std::string& user_hint);

// ---------------------------------------------------------------------------
// Retry loop
// ---------------------------------------------------------------------------

enum class Final { answered, fallback_placeholder, reformulation_suggested, rejected };
std::string_view to_string(Final f);

struct T2sConfig {
    int max_retries = 2;
    std::size_t row_limit = 1000;
    bool introspection = true;
    void validate() const;
};

struct T2sResult {
    std::vector<SqlAttempt> attempts;
    Final final = Final::reformulation_suggested;
    std::optional<ResultTable> table;
    ChartDecision chart;
    std::string narrative;
    std::vector<std::string> warnings;
    std::size_t generation_calls = 0;
};

nlohmann::json to_json(const T2sResult& r);

/// Merge step results on their first shared column: each row of the first
/// table joins every matching row of the next.
std::optional<ResultTable> merge_on_shared_column(const ResultTable& left, const ResultTable& right,
                                                  std::string* key = nullptr);

T2sResult run_with_retry(const std::string& question, const SchemaContext& schema, providers::LanguageModel& llm,
                         Executor& executor, const Clock& clock, const T2sConfig& config = {},
                         const std::vector<std::string>& history = {});

}  // namespace esapiens::t2s
