#include "esapiens/config.hpp"

#include "esapiens/common.hpp"
#include "esapiens/http_providers.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <sstream>

namespace esapiens::config {

namespace pt = boost::property_tree;

namespace {

const std::vector<std::string> kProviderKinds = {"embed", "draft", "rerank", "verify", "route", "websearch", "sql"};

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

template <class T>
T parse_number(const std::string& section, const std::string& key, const std::string& value) {
    T out{};
    const auto v = trim(value);
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(where(section, key) + ": expected a number, got '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& value) {
    const auto v = to_lower_ascii(trim(value));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(where(section, key) + ": expected a boolean, got '" + value + "'");
}

using Setter = std::function<void(const std::string& value)>;

void apply_section(const pt::ptree& section, const std::string& name, const std::map<std::string, Setter>& setters) {
    for (const auto& [key, child] : section) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("unknown key " + where(name, key));
        try {
            it->second(child.data());
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(where(name, key) + ": " + e.what());
        }
    }
}

providers::ProviderConfig& provider_slot(ProviderSettings& p, const std::string& kind) {
    if (kind == "sql") return p.sql;
    return p.by_kind[providers::parse_provider_kind(kind)];
}

std::map<std::string, Setter> provider_setters(AppConfig& c) {
    auto& p = c.providers;
    std::map<std::string, Setter> s;
    for (const auto& kind : kProviderKinds) {
        s[kind + "_mode"] = [&p, kind](const std::string& v) {
            provider_slot(p, kind).mode = providers::parse_provider_mode(trim(v));
        };
        s[kind + "_endpoint"] = [&p, kind](const std::string& v) { provider_slot(p, kind).endpoint = trim(v); };
        s[kind + "_timeout_ms"] = [&p, kind](const std::string& v) {
            provider_slot(p, kind).timeout_ms = parse_number<int>("providers", kind + "_timeout_ms", v);
        };
        s[kind + "_retries"] = [&p, kind](const std::string& v) {
            provider_slot(p, kind).max_retries_transport = parse_number<int>("providers", kind + "_retries", v);
        };
    }
    s["draft_mock"] = [&p](const std::string& v) {
        p.draft_mock = to_lower_ascii(trim(v));
        if (p.draft_mock != "extractive" && p.draft_mock != "adversarial") {
            throw ConfigError("[providers] draft_mock: expected extractive or adversarial");
        }
    };
    s["sql_script"] = [&p](const std::string& v) { p.sql_script = trim(v); };
    s["embed_dimension"] = [&p](const std::string& v) {
        p.embed_dimension = parse_number<std::size_t>("providers", "embed_dimension", v);
    };
    return s;
}

}  // namespace

void AppConfig::validate() const {
    chunking.validate();
    retrieval.bm25.validate();
    orchestrator.validate();
    if (retrieval.n_candidates == 0 || retrieval.top_n == 0 || retrieval.leg_depth == 0) {
        throw ConfigError("retrieval depths must be positive");
    }
    if (retrieval.hnsw.M < 2 || retrieval.hnsw.ef_search == 0 || retrieval.hnsw.ef_construction == 0) {
        throw ConfigError("hnsw parameters out of range");
    }
    if (providers.embed_dimension < 8) throw ConfigError("embed_dimension must be at least 8");
    for (const auto& [kind, pc] : providers.by_kind) pc.validate();
    providers.sql.validate();
    if (service.port < 0 || service.port > 65535) throw ConfigError("port out of range");
    if (service.heartbeat_ms <= 0) throw ConfigError("heartbeat_ms must be positive");
}

AppConfig parse_config(const std::string& ini_text) {
    pt::ptree tree;
    std::istringstream in(ini_text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    AppConfig c;
    for (const auto& [kind, _] : std::map<std::string, int>{{"embed", 0}, {"draft", 0}, {"rerank", 0},
                                                            {"verify", 0}, {"route", 0}, {"websearch", 0}}) {
        c.providers.by_kind[providers::parse_provider_kind(kind)].kind = providers::parse_provider_kind(kind);
    }
    c.providers.sql.kind = providers::ProviderKind::draft;

    auto& o = c.orchestrator;
    const std::map<std::string, std::map<std::string, Setter>> sections = {
        {"chunking",
         {
             {"window_tokens", [&](const std::string& v) { c.chunking.window_tokens = parse_number<std::size_t>("chunking", "window_tokens", v); }},
             {"overlap_tokens", [&](const std::string& v) { c.chunking.overlap_tokens = parse_number<std::size_t>("chunking", "overlap_tokens", v); }},
             {"tokenizer", [&](const std::string& v) { c.chunking.tokenizer = text::parse_tokenizer_id(trim(v)); }},
         }},
        {"retrieval",
         {
             {"n_candidates", [&](const std::string& v) { c.retrieval.n_candidates = o.n_candidates = parse_number<std::size_t>("retrieval", "n_candidates", v); }},
             {"top_n", [&](const std::string& v) { c.retrieval.top_n = o.top_n = parse_number<std::size_t>("retrieval", "top_n", v); }},
             {"leg_depth", [&](const std::string& v) { c.retrieval.leg_depth = parse_number<std::size_t>("retrieval", "leg_depth", v); }},
             {"rrf_constant", [&](const std::string& v) { c.retrieval.rrf_constant = parse_number<double>("retrieval", "rrf_constant", v); }},
             {"bm25_k1", [&](const std::string& v) { c.retrieval.bm25.k1 = parse_number<double>("retrieval", "bm25_k1", v); }},
             {"bm25_b", [&](const std::string& v) { c.retrieval.bm25.b = parse_number<double>("retrieval", "bm25_b", v); }},
             {"hnsw_m", [&](const std::string& v) { c.retrieval.hnsw.M = parse_number<std::size_t>("retrieval", "hnsw_m", v); }},
             {"hnsw_ef_construction", [&](const std::string& v) { c.retrieval.hnsw.ef_construction = parse_number<std::size_t>("retrieval", "hnsw_ef_construction", v); }},
             {"hnsw_ef_search", [&](const std::string& v) { c.retrieval.hnsw.ef_search = parse_number<std::size_t>("retrieval", "hnsw_ef_search", v); }},
             {"hnsw_seed", [&](const std::string& v) { c.retrieval.hnsw.seed = parse_number<std::uint64_t>("retrieval", "hnsw_seed", v); }},
             {"relevance_floor", [&](const std::string& v) { o.relevance_floor = parse_number<double>("retrieval", "relevance_floor", v); }},
             {"web_results", [&](const std::string& v) { o.web_results = parse_number<std::size_t>("retrieval", "web_results", v); }},
         }},
        {"grounding",
         {
             {"max_rounds", [&](const std::string& v) { o.grounding.max_rounds = parse_number<int>("grounding", "max_rounds", v); }},
             {"support_threshold", [&](const std::string& v) { o.grounding.support_threshold = parse_number<double>("grounding", "support_threshold", v); }},
             {"mode", [&](const std::string& v) { o.grounding.mode = grounding::parse_mode(trim(v)); }},
         }},
        {"t2s",
         {
             {"max_retries", [&](const std::string& v) { o.t2s.max_retries = parse_number<int>("t2s", "max_retries", v); }},
             {"row_limit", [&](const std::string& v) { o.t2s.row_limit = parse_number<std::size_t>("t2s", "row_limit", v); }},
             {"introspection", [&](const std::string& v) { o.t2s.introspection = parse_bool("t2s", "introspection", v); }},
         }},
        {"providers", provider_setters(c)},
        {"service",
         {
             {"host", [&](const std::string& v) { c.service.host = trim(v); }},
             {"port", [&](const std::string& v) { c.service.port = parse_number<int>("service", "port", v); }},
             {"state_dir", [&](const std::string& v) { c.service.state_dir = trim(v); }},
             {"index_dir", [&](const std::string& v) { c.service.index_dir = trim(v); }},
             {"heartbeat_ms", [&](const std::string& v) { c.service.heartbeat_ms = parse_number<int>("service", "heartbeat_ms", v); }},
             {"dialogue_window", [&](const std::string& v) { o.dialogue_window = parse_number<std::size_t>("service", "dialogue_window", v); }},
             {"secondary_path", [&](const std::string& v) { o.secondary_path = parse_bool("service", "secondary_path", v); }},
         }},
    };

    for (const auto& [name, section] : tree) {
        const auto it = sections.find(name);
        if (it == sections.end()) {
            if (section.empty() && !section.data().empty()) throw ConfigError("key outside any section: " + name);
            throw ConfigError("unknown section [" + name + "]");
        }
        apply_section(section, name, it->second);
    }
    c.validate();
    return c;
}

AppConfig load_config(const std::string& path) {
    try {
        return parse_config(read_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

nlohmann::json to_json(const AppConfig& c) {
    nlohmann::json providers_json = nlohmann::json::object();
    auto provider_json = [](const providers::ProviderConfig& pc) {
        return nlohmann::json{{"mode", pc.mode == providers::ProviderMode::mock ? "mock" : "http"},
                              {"endpoint", pc.endpoint ? nlohmann::json(*pc.endpoint) : nlohmann::json(nullptr)},
                              {"timeout_ms", pc.timeout_ms},
                              {"retries", pc.max_retries_transport}};
    };
    for (const auto& [kind, pc] : c.providers.by_kind) providers_json[std::string(providers::to_string(kind))] = provider_json(pc);
    providers_json["sql"] = provider_json(c.providers.sql);
    providers_json["draft_mock"] = c.providers.draft_mock;
    providers_json["embed_dimension"] = c.providers.embed_dimension;
    const auto& o = c.orchestrator;
    return {
        {"chunking",
         {{"window_tokens", c.chunking.window_tokens},
          {"overlap_tokens", c.chunking.overlap_tokens},
          {"tokenizer", text::to_string(c.chunking.tokenizer)}}},
        {"retrieval",
         {{"n_candidates", c.retrieval.n_candidates},
          {"top_n", c.retrieval.top_n},
          {"leg_depth", c.retrieval.leg_depth},
          {"rrf_constant", c.retrieval.rrf_constant},
          {"bm25_k1", c.retrieval.bm25.k1},
          {"bm25_b", c.retrieval.bm25.b},
          {"hnsw_m", c.retrieval.hnsw.M},
          {"hnsw_ef_construction", c.retrieval.hnsw.ef_construction},
          {"hnsw_ef_search", c.retrieval.hnsw.ef_search},
          {"relevance_floor", o.relevance_floor},
          {"web_results", o.web_results}}},
        {"grounding",
         {{"max_rounds", o.grounding.max_rounds},
          {"support_threshold", o.grounding.support_threshold},
          {"mode", grounding::to_string(o.grounding.mode)}}},
        {"t2s", {{"max_retries", o.t2s.max_retries}, {"row_limit", o.t2s.row_limit}, {"introspection", o.t2s.introspection}}},
        {"providers", providers_json},
        {"service",
         {{"host", c.service.host},
          {"port", c.service.port},
          {"heartbeat_ms", c.service.heartbeat_ms},
          {"dialogue_window", o.dialogue_window},
          {"secondary_path", o.secondary_path}}},
    };
}

ProviderBundle build_providers(const ProviderSettings& p) {
    using providers::ProviderKind;
    using providers::ProviderMode;
    auto cfg = [&](ProviderKind k) {
        const auto it = p.by_kind.find(k);
        providers::ProviderConfig out;
        if (it != p.by_kind.end()) out = it->second;
        out.kind = k;
        return out;
    };
    auto http = [&](ProviderKind k) { return cfg(k).mode == ProviderMode::http; };

    ProviderBundle b;
    if (http(ProviderKind::embed)) {
        b.embedder = std::make_shared<providers::HttpEmbedder>(cfg(ProviderKind::embed), p.embed_dimension);
    } else {
        b.embedder = std::make_shared<providers::HashEmbedder>(p.embed_dimension);
    }

    auto& pr = b.providers;
    if (http(ProviderKind::draft)) {
        pr.drafter = std::make_shared<providers::HttpLanguageModel>(cfg(ProviderKind::draft));
    } else if (p.draft_mock == "adversarial") {
        pr.drafter = std::make_shared<providers::AdversarialLanguageModel>();
    } else {
        pr.drafter = std::make_shared<providers::ExtractiveLanguageModel>();
    }

    if (p.sql.mode == ProviderMode::http) {
        pr.sql_model = std::make_shared<providers::HttpLanguageModel>(p.sql);
    } else {
        std::vector<std::string> script;
        if (p.sql_script) {
            for (const auto& line : split(read_file(*p.sql_script), '\n')) {
                if (!trim(line).empty()) script.push_back(trim(line));
            }
        }
        if (script.empty()) script.emplace_back("SELECT 1 AS one");
        pr.sql_model = std::make_shared<providers::ScriptedLanguageModel>(
            std::move(script), providers::ScriptedLanguageModel::OnExhausted::repeat_last);
    }

    if (http(ProviderKind::rerank)) {
        pr.reranker = std::make_shared<providers::HttpReranker>(cfg(ProviderKind::rerank));
    } else {
        pr.reranker = std::make_shared<providers::LexicalReranker>();
    }
    if (http(ProviderKind::verify)) {
        pr.verifier = std::make_shared<providers::HttpVerifier>(cfg(ProviderKind::verify));
    } else {
        pr.verifier = std::make_shared<providers::LexicalVerifier>();
    }
    if (http(ProviderKind::route)) pr.router = std::make_shared<providers::HttpRouter>(cfg(ProviderKind::route));
    if (http(ProviderKind::websearch)) {
        pr.web = std::make_shared<providers::HttpWebSearch>(cfg(ProviderKind::websearch));
    }
    return b;
}

}  // namespace esapiens::config
