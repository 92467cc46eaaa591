#pragma once

#include "esapiens/common.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace esapiens::providers {

// ---------------------------------------------------------------------------
// Provider interfaces. Implementations must be safe to share across query
// workers; mocks with internal cursors serialize access themselves.
// ---------------------------------------------------------------------------

class Embedder {
public:
    virtual ~Embedder() = default;
    [[nodiscard]] virtual std::size_t dimension() const = 0;
    virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) const = 0;
};

/// Drafting LLM: prompt in, final text out.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

/// Scores in [0, 1], higher is better, one per passage. `prior` carries the
/// fused retrieval scores and may be ignored.
class Reranker {
public:
    virtual ~Reranker() = default;
    virtual std::vector<double> rerank(const std::string& query,
                                       std::span<const std::string> passages,
                                       std::span<const double> prior) const = 0;
};

/// Support score of `claim` against each passage, in [0, 1].
class Verifier {
public:
    virtual ~Verifier() = default;
    virtual std::vector<double> verify(const std::string& claim,
                                       std::span<const std::string> passages) const = 0;
};

/// Intent classifier. Returns a route label such as "sql", "documents",
/// "plugin:<id>", "web_search", "image", optionally suffixed "+chart".
class Router {
public:
    virtual ~Router() = default;
    virtual std::string route(const std::string& query,
                              const std::vector<std::string>& context) const = 0;
};

struct WebResult {
    std::string title;
    std::string url;
    std::string snippet;
};

class WebSearch {
public:
    virtual ~WebSearch() = default;
    virtual std::vector<WebResult> search(const std::string& query, std::size_t k) = 0;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class ProviderKind { embed, draft, rerank, verify, route, websearch };
enum class ProviderMode { mock, http };

ProviderKind parse_provider_kind(std::string_view s);
ProviderMode parse_provider_mode(std::string_view s);
std::string_view to_string(ProviderKind k);

struct ProviderConfig {
    ProviderKind kind = ProviderKind::embed;
    ProviderMode mode = ProviderMode::mock;
    std::optional<std::string> endpoint;
    int timeout_ms = 10000;
    int max_retries_transport = 1;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Deterministic scorers
// ---------------------------------------------------------------------------

/// Bucket of a lower-cased term under the feature-hashing embedder.
std::size_t embed_bucket(std::string_view term, std::size_t dimension);

/// Feature-hash token counts into `dimension` buckets and L2-normalize.
/// Text without terms maps to the first basis vector. Requires dimension >= 8.
std::vector<double> deterministic_embed(std::string_view text, std::size_t dimension = 64);

/// |content terms shared| / |content terms of left|; 0 when left has none.
double lexical_overlap_score(std::string_view left, std::string_view passage);

// ---------------------------------------------------------------------------
// Mocks
// ---------------------------------------------------------------------------

class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(std::size_t dimension = 64);
    [[nodiscard]] std::size_t dimension() const override { return dimension_; }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) const override;

private:
    std::size_t dimension_;
};

/// Replays a fixed script of responses and records every prompt.
class ScriptedLanguageModel final : public LanguageModel {
public:
    enum class OnExhausted { error, repeat_last };

    struct Rule {
        std::string prompt_contains;  // empty matches everything
        std::string response;
    };

    explicit ScriptedLanguageModel(std::vector<std::string> responses,
                                   OnExhausted policy = OnExhausted::error);
    /// Rule mode: the first rule whose pattern occurs in the prompt answers.
    static ScriptedLanguageModel with_rules(std::vector<Rule> rules);
    ScriptedLanguageModel(ScriptedLanguageModel&& other) noexcept;

    std::string complete(const std::string& prompt) override;

    [[nodiscard]] std::vector<std::string> prompts() const;
    [[nodiscard]] std::size_t calls() const;

private:
    ScriptedLanguageModel() = default;

    mutable std::mutex mu_;
    std::vector<std::string> responses_;
    std::vector<Rule> rules_;
    OnExhausted policy_ = OnExhausted::error;
    std::size_t cursor_ = 0;
    std::vector<std::string> prompts_;
};

/// Copies the first numbered snippet of a grounding prompt, citing "[1]" in
/// every sentence.
class ExtractiveLanguageModel : public LanguageModel {
public:
    std::string complete(const std::string& prompt) override;
    [[nodiscard]] std::size_t calls() const { return calls_.load(); }

protected:
    std::atomic<std::size_t> calls_{0};
};

/// Extractive output plus one uncited sentence absent from every snippet.
class AdversarialLanguageModel final : public ExtractiveLanguageModel {
public:
    explicit AdversarialLanguageModel(
        std::string fabricated = "Quantum giraffes negotiated the merger in 1850.");
    std::string complete(const std::string& prompt) override;

private:
    std::string fabricated_;
};

/// Returns the prior (fused) scores unchanged.
class IdentityReranker final : public Reranker {
public:
    std::vector<double> rerank(const std::string& query, std::span<const std::string> passages,
                               std::span<const double> prior) const override;
};

class LexicalReranker final : public Reranker {
public:
    std::vector<double> rerank(const std::string& query, std::span<const std::string> passages,
                               std::span<const double> prior) const override;
};

class LexicalVerifier final : public Verifier {
public:
    std::vector<double> verify(const std::string& claim,
                               std::span<const std::string> passages) const override;
};

/// Rule-based intent classifier over registered table/metric names and
/// plugin trigger words.
class RuleRouter final : public Router {
public:
    struct PluginTrigger {
        std::string plugin_id;
        std::vector<std::string> verbs;
    };

    RuleRouter(std::vector<std::string> tables, std::vector<std::string> metrics,
               std::vector<PluginTrigger> plugins = {});
    std::string route(const std::string& query,
                      const std::vector<std::string>& context) const override;

private:
    std::vector<std::string> tables_;
    std::vector<std::string> metrics_;
    std::vector<PluginTrigger> plugins_;
};

/// Canned web results; counts invocations.
class StaticWebSearch final : public WebSearch {
public:
    explicit StaticWebSearch(std::vector<WebResult> results);
    std::vector<WebResult> search(const std::string& query, std::size_t k) override;
    [[nodiscard]] std::size_t calls() const { return calls_.load(); }

private:
    std::vector<WebResult> results_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace esapiens::providers
