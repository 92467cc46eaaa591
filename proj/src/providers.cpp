#include "esapiens/providers.hpp"

#include "esapiens/sentences.hpp"
#include "esapiens/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace esapiens::providers {

ProviderKind parse_provider_kind(std::string_view s) {
    if (s == "embed") return ProviderKind::embed;
    if (s == "draft") return ProviderKind::draft;
    if (s == "rerank") return ProviderKind::rerank;
    if (s == "verify") return ProviderKind::verify;
    if (s == "route") return ProviderKind::route;
    if (s == "websearch") return ProviderKind::websearch;
    throw ConfigError("unknown provider kind: " + std::string(s));
}

ProviderMode parse_provider_mode(std::string_view s) {
    if (s == "mock") return ProviderMode::mock;
    if (s == "http") return ProviderMode::http;
    throw ConfigError("unknown provider mode: " + std::string(s));
}

std::string_view to_string(ProviderKind k) {
    switch (k) {
        case ProviderKind::embed: return "embed";
        case ProviderKind::draft: return "draft";
        case ProviderKind::rerank: return "rerank";
        case ProviderKind::verify: return "verify";
        case ProviderKind::route: return "route";
        case ProviderKind::websearch: return "websearch";
    }
    return "embed";
}

void ProviderConfig::validate() const {
    if (mode == ProviderMode::http && (!endpoint || endpoint->empty())) {
        throw ConfigError("provider '" + std::string(to_string(kind)) +
                          "' in http mode requires an endpoint");
    }
    if (timeout_ms <= 0) throw ConfigError("timeout_ms must be positive");
    if (max_retries_transport < 0) throw ConfigError("max_retries_transport must be >= 0");
}

std::size_t embed_bucket(std::string_view term, std::size_t dimension) {
    // FNV-1a, 64 bit: stable across platforms and runs.
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : term) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h % dimension);
}

std::vector<double> deterministic_embed(std::string_view text, std::size_t dimension) {
    if (dimension < 8) throw ConfigError("embedding dimension must be >= 8");
    std::vector<double> v(dimension, 0.0);
    const auto terms = text::index_terms(text);
    for (const auto& t : terms) v[embed_bucket(t, dimension)] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
        v[0] = 1.0;
        return v;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

double lexical_overlap_score(std::string_view left, std::string_view passage) {
    const auto l = text::content_terms(left);
    if (l.empty()) return 0.0;
    const auto p = text::content_terms(passage);
    std::size_t shared = 0;
    for (const auto& t : l) shared += p.contains(t) ? 1 : 0;
    return static_cast<double>(shared) / static_cast<double>(l.size());
}

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ < 8) throw ConfigError("embedding dimension must be >= 8");
}

std::vector<std::vector<double>> HashEmbedder::embed(std::span<const std::string> texts) const {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(deterministic_embed(t, dimension_));
    return out;
}

ScriptedLanguageModel::ScriptedLanguageModel(std::vector<std::string> responses, OnExhausted policy)
    : responses_(std::move(responses)), policy_(policy) {}

ScriptedLanguageModel::ScriptedLanguageModel(ScriptedLanguageModel&& other) noexcept
    : responses_(std::move(other.responses_)),
      rules_(std::move(other.rules_)),
      policy_(other.policy_),
      cursor_(other.cursor_),
      prompts_(std::move(other.prompts_)) {}

ScriptedLanguageModel ScriptedLanguageModel::with_rules(std::vector<Rule> rules) {
    ScriptedLanguageModel m;
    m.rules_ = std::move(rules);
    return m;
}

std::string ScriptedLanguageModel::complete(const std::string& prompt) {
    std::lock_guard lock(mu_);
    prompts_.push_back(prompt);
    if (!rules_.empty()) {
        for (const auto& r : rules_) {
            if (r.prompt_contains.empty() || prompt.find(r.prompt_contains) != std::string::npos) {
                return r.response;
            }
        }
        throw ProviderError("scripted model: no rule matches prompt");
    }
    if (cursor_ < responses_.size()) return responses_[cursor_++];
    if (policy_ == OnExhausted::repeat_last && !responses_.empty()) return responses_.back();
    throw ProviderError("scripted model: script exhausted after " +
                        std::to_string(responses_.size()) + " responses");
}

std::vector<std::string> ScriptedLanguageModel::prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
}

std::size_t ScriptedLanguageModel::calls() const {
    std::lock_guard lock(mu_);
    return prompts_.size();
}

namespace {

/// Text of the "[1] ..." line in the snippet block of a grounding prompt.
std::string first_snippet(const std::string& prompt) {
    const auto block = prompt.find("Snippets:\n");
    if (block == std::string::npos) return {};
    const auto line = prompt.find("\n[1] ", block);
    if (line == std::string::npos) return {};
    const auto begin = line + 5;
    const auto end = prompt.find('\n', begin);
    return prompt.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

std::string cite_sentence(std::string_view sentence, std::string_view marker) {
    std::string s = trim(sentence);
    // A snippet cut mid-sentence still yields a closed sentence.
    if (!s.empty() && s.back() != '.' && s.back() != '!' && s.back() != '?') s += '.';
    std::size_t cut = s.size();
    while (cut > 0 && (s[cut - 1] == '.' || s[cut - 1] == '!' || s[cut - 1] == '?')) --cut;
    return s.substr(0, cut) + " " + std::string(marker) + s.substr(cut);
}

}  // namespace

std::string ExtractiveLanguageModel::complete(const std::string& prompt) {
    calls_.fetch_add(1);
    const auto snippet = first_snippet(prompt);
    std::vector<std::string> out;
    for (const auto& span : text::sentence_spans(snippet)) {
        out.push_back(cite_sentence(std::string_view(snippet).substr(span.begin, span.length()), "[1]"));
    }
    return join(out, " ");
}

AdversarialLanguageModel::AdversarialLanguageModel(std::string fabricated)
    : fabricated_(std::move(fabricated)) {}

std::string AdversarialLanguageModel::complete(const std::string& prompt) {
    auto base = ExtractiveLanguageModel::complete(prompt);
    return base.empty() ? fabricated_ : base + " " + fabricated_;
}

std::vector<double> IdentityReranker::rerank(const std::string&, std::span<const std::string> passages,
                                             std::span<const double> prior) const {
    std::vector<double> out(passages.size(), 0.0);
    for (std::size_t i = 0; i < out.size() && i < prior.size(); ++i) out[i] = prior[i];
    return out;
}

std::vector<double> LexicalReranker::rerank(const std::string& query,
                                            std::span<const std::string> passages,
                                            std::span<const double>) const {
    std::vector<double> out;
    out.reserve(passages.size());
    for (const auto& p : passages) out.push_back(lexical_overlap_score(query, p));
    return out;
}

std::vector<double> LexicalVerifier::verify(const std::string& claim,
                                            std::span<const std::string> passages) const {
    std::vector<double> out;
    out.reserve(passages.size());
    for (const auto& p : passages) out.push_back(lexical_overlap_score(claim, p));
    return out;
}

RuleRouter::RuleRouter(std::vector<std::string> tables, std::vector<std::string> metrics,
                       std::vector<PluginTrigger> plugins)
    : tables_(std::move(tables)), metrics_(std::move(metrics)), plugins_(std::move(plugins)) {
    for (auto& t : tables_) t = to_lower_ascii(t);
    for (auto& m : metrics_) m = to_lower_ascii(m);
}

std::string RuleRouter::route(const std::string& query, const std::vector<std::string>&) const {
    const auto terms = text::index_terms(query);
    const std::set<std::string> term_set(terms.begin(), terms.end());
    const auto has = [&](std::string_view w) { return term_set.contains(std::string(w)); };
    const auto lowered = to_lower_ascii(query);

    bool chart = false;
    for (auto w : {"plot", "chart", "graph", "visualize", "visualise"}) chart = chart || has(w);
    const std::string suffix = chart ? "+chart" : "";

    for (auto w : {"image", "photo", "picture", "screenshot"}) {
        if (has(w)) return "image";
    }
    for (const auto& p : plugins_) {
        for (const auto& v : p.verbs) {
            if (has(to_lower_ascii(v))) return "plugin:" + p.plugin_id;
        }
    }
    for (auto phrase : {"search the web", "web search", "on the internet", "online"}) {
        if (lowered.find(phrase) != std::string::npos) return "web_search";
    }
    for (const auto& term : terms) {
        for (const auto& t : tables_) {
            if (term == t || term + "s" == t || term == t + "s") return "sql" + suffix;
        }
        for (const auto& m : metrics_) {
            if (term == m) return "sql" + suffix;
        }
    }
    return "documents" + suffix;
}

StaticWebSearch::StaticWebSearch(std::vector<WebResult> results) : results_(std::move(results)) {}

std::vector<WebResult> StaticWebSearch::search(const std::string&, std::size_t k) {
    calls_.fetch_add(1);
    std::vector<WebResult> out(results_.begin(),
                               results_.begin() + static_cast<std::ptrdiff_t>(std::min(k, results_.size())));
    return out;
}

}  // namespace esapiens::providers
