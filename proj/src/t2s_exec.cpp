#include "esapiens/t2s.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace esapiens::t2s {

nlohmann::json to_json(const Value& v) {
    return std::visit(
        [](const auto& x) -> nlohmann::json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return nullptr;
            } else {
                return x;
            }
        },
        v);
}

Value value_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::monostate{};
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    return j.dump();
}

std::string to_display(const Value& v) {
    if (std::holds_alternative<std::monostate>(v)) return "NULL";
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&v)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.15g", *d);
        return buf;
    }
    return std::get<std::string>(v);
}

std::optional<std::size_t> ResultTable::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (to_lower_ascii(columns[i]) == to_lower_ascii(name)) return i;
    }
    return std::nullopt;
}

nlohmann::json to_json(const ResultTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& v : r) row.push_back(to_json(v));
        rows.push_back(std::move(row));
    }
    return {{"columns", t.columns}, {"rows", rows}, {"truncated", t.truncated}};
}

ResultTable table_from_json(const nlohmann::json& j) {
    ResultTable t;
    t.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) {
        std::vector<Value> row;
        for (const auto& v : r) row.push_back(value_from_json(v));
        t.rows.push_back(std::move(row));
    }
    t.truncated = j.value("truncated", false);
    return t;
}

// ---------------------------------------------------------------------------

SqliteExecutor::SqliteExecutor(const std::string& path) {
    const int flags = (path == ":memory:" ? SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE : SQLITE_OPEN_READONLY) |
                      SQLITE_OPEN_FULLMUTEX;
    if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
        open_error_ = "cannot open database '" + path + "': " + (db_ ? sqlite3_errmsg(db_) : "out of memory");
        sqlite3_close(db_);
        db_ = nullptr;
        return;
    }
    sqlite3_set_authorizer(db_, &SqliteExecutor::authorize, this);
}

std::unique_ptr<SqliteExecutor> SqliteExecutor::from_script(const std::string& seed_sql) {
    std::unique_ptr<SqliteExecutor> ex(new SqliteExecutor());
    if (sqlite3_open_v2(":memory:", &ex->db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
        throw Error("cannot open in-memory database");
    }
    char* err = nullptr;
    if (sqlite3_exec(ex->db_, seed_sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw Error("seed script failed: " + msg);
    }
    sqlite3_set_authorizer(ex->db_, &SqliteExecutor::authorize, ex.get());
    return ex;
}

SqliteExecutor::~SqliteExecutor() {
    if (db_) sqlite3_close(db_);
}

int SqliteExecutor::authorize(void* self, int action, const char*, const char*, const char*, const char*) {
    if (static_cast<SqliteExecutor*>(self)->internal_) return SQLITE_OK;
    switch (action) {
        case SQLITE_SELECT:
        case SQLITE_READ:
        case SQLITE_FUNCTION:
        case SQLITE_RECURSIVE:
            return SQLITE_OK;
        default:
            return SQLITE_DENY;
    }
}

namespace {

struct Stmt {
    sqlite3_stmt* p = nullptr;
    ~Stmt() { sqlite3_finalize(p); }
};

bool only_space(const char* s) {
    for (; s && *s; ++s) {
        if (!std::isspace(static_cast<unsigned char>(*s)) && *s != ';') return false;
    }
    return true;
}

}  // namespace

DryRunResult SqliteExecutor::dry_run(const std::string& sql) {
    std::lock_guard lock(mu_);
    if (!db_) return {false, open_error_, true};
    Stmt st;
    const char* tail = nullptr;
    if (sqlite3_prepare_v2(db_, sql.c_str(), static_cast<int>(sql.size()), &st.p, &tail) != SQLITE_OK) {
        return {false, std::string(sqlite3_errmsg(db_)), false};
    }
    if (!st.p) return {false, std::string("empty statement"), false};
    if (!only_space(tail)) return {false, std::string("multiple statements"), false};
    if (!sqlite3_stmt_readonly(st.p)) return {false, std::string("statement is not read-only"), false};
    return {true, std::nullopt, false};
}

ExecResult SqliteExecutor::execute(const std::string& sql, std::size_t row_limit) {
    std::lock_guard lock(mu_);
    ExecResult r;
    if (!db_) {
        r.error = open_error_;
        r.unreachable = true;
        return r;
    }
    Stmt st;
    const char* tail = nullptr;
    if (sqlite3_prepare_v2(db_, sql.c_str(), static_cast<int>(sql.size()), &st.p, &tail) != SQLITE_OK) {
        r.error = sqlite3_errmsg(db_);
        return r;
    }
    if (!st.p || !only_space(tail)) {
        r.error = st.p ? "multiple statements" : "empty statement";
        return r;
    }
    if (!internal_ && !sqlite3_stmt_readonly(st.p)) {
        r.error = "statement is not read-only";
        return r;
    }
    ResultTable t;
    const int ncol = sqlite3_column_count(st.p);
    for (int c = 0; c < ncol; ++c) t.columns.emplace_back(sqlite3_column_name(st.p, c));
    while (true) {
        const int rc = sqlite3_step(st.p);
        if (rc == SQLITE_DONE) break;
        if (rc != SQLITE_ROW) {
            r.error = sqlite3_errmsg(db_);
            return r;
        }
        if (t.rows.size() == row_limit) {
            t.truncated = true;
            break;
        }
        std::vector<Value> row;
        for (int c = 0; c < ncol; ++c) {
            switch (sqlite3_column_type(st.p, c)) {
                case SQLITE_INTEGER: row.emplace_back(static_cast<std::int64_t>(sqlite3_column_int64(st.p, c))); break;
                case SQLITE_FLOAT: row.emplace_back(sqlite3_column_double(st.p, c)); break;
                case SQLITE_NULL: row.emplace_back(std::monostate{}); break;
                default: {
                    const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(st.p, c));
                    row.emplace_back(std::string(text ? text : "", static_cast<std::size_t>(sqlite3_column_bytes(st.p, c))));
                }
            }
        }
        t.rows.push_back(std::move(row));
    }
    r.table = std::move(t);
    return r;
}

std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> SqliteExecutor::describe() {
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> out;
    std::unique_lock lock(mu_);
    if (!db_) throw Error(open_error_);
    internal_ = true;
    lock.unlock();
    const auto restore = [this] {
        std::lock_guard l(mu_);
        internal_ = false;
    };
    try {
        const auto tables =
            execute("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid", 10000);
        if (!tables.table) throw Error(tables.error.value_or("cannot list tables"));
        for (const auto& row : tables.table->rows) {
            const auto name = std::get<std::string>(row[0]);
            const auto info = execute("SELECT name, type FROM pragma_table_info(" + sql::quote_literal(name) + ")", 10000);
            if (!info.table) throw Error(info.error.value_or("cannot describe " + name));
            std::vector<std::pair<std::string, std::string>> cols;
            for (const auto& c : info.table->rows) cols.emplace_back(std::get<std::string>(c[0]), std::get<std::string>(c[1]));
            out.emplace_back(name, std::move(cols));
        }
    } catch (...) {
        restore();
        throw;
    }
    restore();
    return out;
}

// ---------------------------------------------------------------------------

Dialect parse_dialect(std::string_view s) {
    if (s == "generic") return Dialect::generic;
    if (s == "mysql-like" || s == "mysql") return Dialect::mysql_like;
    if (s == "bigquery-like" || s == "bigquery") return Dialect::bigquery_like;
    throw ConfigError("unknown SQL dialect '" + std::string(s) + "'");
}

std::string_view to_string(Dialect d) {
    switch (d) {
        case Dialect::mysql_like: return "mysql-like";
        case Dialect::bigquery_like: return "bigquery-like";
        default: return "generic";
    }
}

void SchemaContext::validate() const {
    if (tables.empty()) throw ConfigError("schema has no tables");
    for (const auto& t : tables) {
        if (t.sample_rows.size() > 3) throw ConfigError("table " + t.name + " has more than 3 sample rows");
        for (const auto& r : t.sample_rows) {
            if (r.size() != t.columns.size()) throw ConfigError("sample row arity mismatch in table " + t.name);
        }
    }
    for (const auto& a : authorized_columns) {
        const auto dot = a.find('.');
        if (dot == std::string::npos || !find_column(a.substr(0, dot), a.substr(dot + 1))) {
            throw ConfigError("authorized column '" + a + "' is not in the schema");
        }
    }
}

const TableInfo* SchemaContext::find_table(std::string_view name) const {
    for (const auto& t : tables) {
        if (to_lower_ascii(t.name) == to_lower_ascii(name)) return &t;
    }
    return nullptr;
}

const ColumnInfo* SchemaContext::find_column(std::string_view table, std::string_view column) const {
    const auto* t = find_table(table);
    if (!t) return nullptr;
    for (const auto& c : t->columns) {
        if (to_lower_ascii(c.name) == to_lower_ascii(column)) return &c;
    }
    return nullptr;
}

bool SchemaContext::authorized(std::string_view table, std::string_view column) const {
    return authorized_columns.count(to_lower_ascii(table) + "." + to_lower_ascii(column)) > 0;
}

sql::Catalog SchemaContext::catalog() const {
    sql::Catalog c;
    for (const auto& t : tables) {
        auto& cols = c[to_lower_ascii(t.name)];
        for (const auto& col : t.columns) cols.push_back(to_lower_ascii(col.name));
    }
    return c;
}

bool is_numeric_type(std::string_view declared) {
    const auto t = to_lower_ascii(declared);
    for (const char* k : {"int", "real", "floa", "doub", "num", "dec"}) {
        if (t.find(k) != std::string::npos) return true;
    }
    return false;
}

bool is_temporal_type(std::string_view declared) {
    const auto t = to_lower_ascii(declared);
    return t.find("date") != std::string::npos || t.find("time") != std::string::npos;
}

bool is_text_type(std::string_view declared) {
    const auto t = to_lower_ascii(declared);
    if (is_temporal_type(t)) return false;
    return t.empty() || t.find("char") != std::string::npos || t.find("text") != std::string::npos ||
           t.find("clob") != std::string::npos || t.find("string") != std::string::npos;
}

SchemaContext introspect_schema(SqliteExecutor& executor, Dialect dialect, const std::set<std::string>& authorized,
                                const std::map<std::string, std::string>& units) {
    SchemaContext s;
    s.dialect = dialect;
    for (const auto& [name, cols] : executor.describe()) {
        TableInfo t;
        t.name = name;
        for (const auto& [cname, ctype] : cols) {
            ColumnInfo c{cname, ctype, std::nullopt};
            const auto key = to_lower_ascii(name) + "." + to_lower_ascii(cname);
            if (const auto it = units.find(key); it != units.end()) c.unit = it->second;
            if (authorized.empty()) s.authorized_columns.insert(key);
            t.columns.push_back(std::move(c));
        }
        const auto sample = executor.execute("SELECT * FROM \"" + name + "\" LIMIT 3", 3);
        if (sample.table) {
            for (const auto& r : sample.table->rows) {
                std::vector<std::string> row;
                for (const auto& v : r) row.push_back(to_display(v));
                t.sample_rows.push_back(std::move(row));
            }
        }
        s.tables.push_back(std::move(t));
    }
    for (const auto& a : authorized) s.authorized_columns.insert(to_lower_ascii(a));
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kLogisticsSeed = R"sql(
CREATE TABLE shipments (
  shipment_id INTEGER PRIMARY KEY,
  origin TEXT, destination TEXT, carrier TEXT, status TEXT,
  distance REAL, shipped_at DATE);
INSERT INTO shipments VALUES
  (1, 'Oslo', 'Bergen', 'Nordfrakt', 'open', 463000, '2025-06-12'),
  (2, 'Oslo', 'Trondheim', 'Nordfrakt', 'closed', 494000, '2025-02-10'),
  (3, 'Bergen', 'Stavanger', 'Westline', 'shipped', 209000, '2025-05-02'),
  (4, 'Oslo', 'Stockholm', 'Baltic Cargo', 'shipped', 522000, '2025-04-18'),
  (5, 'Copenhagen', 'Oslo', 'Baltic Cargo', 'closed', 604000, '2024-12-20'),
  (6, 'Stockholm', 'Helsinki', 'Baltic Cargo', 'shipped', 396000, '2026-01-15'),
  (7, 'Trondheim', 'Bodo', 'Nordfrakt', 'open', 712000, '2026-03-02'),
  (8, 'Bergen', 'Oslo', 'Westline', 'shipped', 463000, '2025-06-25'),
  (9, 'Gothenburg', 'Malmo', 'Westline', 'closed', 272000, '2025-03-05'),
  (10, 'Oslo', 'Gothenburg', 'Baltic Cargo', 'shipped', 293000, '2025-01-28');
CREATE TABLE orders (
  order_id INTEGER PRIMARY KEY, customer TEXT, shipment_id INTEGER,
  amount REAL, order_date DATE);
INSERT INTO orders VALUES
  (100, 'Fjord Foods', 1, 1250.0, '2025-06-10'),
  (101, 'Nordic Tools', 2, 830.5, '2025-02-08'),
  (102, 'Fjord Foods', 3, 410.0, '2025-04-30'),
  (103, 'Baltic Home', 4, 2200.0, '2025-04-15'),
  (104, 'Nordic Tools', 8, 640.0, '2025-06-20'),
  (105, 'Baltic Home', 10, 980.0, '2025-01-25');
)sql";

constexpr const char* kRetailSeed = R"sql(
CREATE TABLE albums (
  album_id INTEGER PRIMARY KEY, title TEXT, artist TEXT, genre TEXT, price REAL);
INSERT INTO albums VALUES
  (1, 'Golden Hour', 'Kacey Musgraves', 'Country', 9.99),
  (2, 'DAMN.', 'Kendrick Lamar', 'Hip Hop', 11.99),
  (3, 'Illmatic', 'Nas', 'Hip Hop', 8.99),
  (4, 'Blue', 'Joni Mitchell', 'Folk', 7.99),
  (5, 'Kind of Blue', 'Miles Davis', 'Jazz', 9.49),
  (6, 'Random Access Memories', 'Daft Punk', 'Electronic', 12.99);
CREATE TABLE customers (
  customer_id INTEGER PRIMARY KEY, name TEXT, country TEXT, email TEXT, card_number TEXT);
INSERT INTO customers VALUES
  (1, 'Ana Lima', 'Brazil', 'ana@example.com', '4111111111111111'),
  (2, 'Ben Osei', 'Ghana', 'ben@example.com', '4222222222222222'),
  (3, 'Chloe Martin', 'France', 'chloe@example.com', '4333333333333333'),
  (4, 'Daniel Kim', 'South Korea', 'daniel@example.com', '4444444444444444'),
  (5, 'Eva Novak', 'Czechia', 'eva@example.com', '4555555555555555');
CREATE TABLE invoices (
  invoice_id INTEGER PRIMARY KEY, customer_id INTEGER, album_id INTEGER,
  quantity INTEGER, total REAL, invoice_date DATE);
INSERT INTO invoices VALUES
  (1, 1, 2, 3, 35.97, '2025-04-02'),
  (2, 2, 2, 1, 11.99, '2025-05-11'),
  (3, 3, 5, 2, 18.98, '2025-03-19'),
  (4, 4, 3, 4, 35.96, '2025-06-01'),
  (5, 1, 3, 1, 8.99, '2025-01-14'),
  (6, 5, 6, 2, 25.98, '2025-06-20'),
  (7, 3, 2, 2, 23.98, '2025-06-22'),
  (8, 2, 1, 1, 9.99, '2024-11-30'),
  (9, 4, 4, 1, 7.99, '2026-02-14'),
  (10, 5, 3, 2, 17.98, '2026-04-01');
)sql";

}  // namespace

std::unique_ptr<SqliteExecutor> make_fixture_executor(Fixture f) {
    return SqliteExecutor::from_script(f == Fixture::logistics ? kLogisticsSeed : kRetailSeed);
}

SchemaContext fixture_schema(Fixture f) {
    auto ex = make_fixture_executor(f);
    if (f == Fixture::logistics) {
        return introspect_schema(*ex, Dialect::generic, {}, {{"shipments.distance", "metres"}});
    }
    std::set<std::string> authorized;
    for (const auto& [table, cols] : ex->describe()) {
        for (const auto& [c, _] : cols) {
            if (table == "customers" && (c == "email" || c == "card_number")) continue;
            authorized.insert(table + "." + c);
        }
    }
    return introspect_schema(*ex, Dialect::generic, authorized, {});
}

// ---------------------------------------------------------------------------

FixedClock::FixedClock(std::string_view iso) : day_(parse_iso_date(iso)) {}

std::chrono::sys_days SystemClock::today() const {
    return std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now());
}

std::string iso_date(std::chrono::sys_days d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

std::chrono::sys_days parse_iso_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    const std::string str(s);
    if (std::sscanf(str.c_str(), "%4d-%2u-%2u", &y, &m, &d) != 3) throw ConfigError("bad date '" + str + "', expected YYYY-MM-DD");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw ConfigError("invalid date '" + str + "'");
    return std::chrono::sys_days{ymd};
}

}  // namespace esapiens::t2s
