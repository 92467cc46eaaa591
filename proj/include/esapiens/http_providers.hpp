#pragma once

#include "esapiens/providers.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <string>

namespace esapiens::providers {

/// POSTs a JSON body to one endpoint URL and returns the JSON reply.
/// Transport failures and 5xx replies are retried `max_retries_transport`
/// times; anything still failing surfaces as ProviderError.
class HttpJsonClient {
public:
    HttpJsonClient(std::string url, int timeout_ms, int max_retries_transport);

    nlohmann::json post(const nlohmann::json& body) const;

    [[nodiscard]] const std::string& url() const { return url_; }

private:
    std::string url_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;
    int timeout_ms_;
    int max_retries_;
};

class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(const ProviderConfig& config, std::size_t dimension);
    [[nodiscard]] std::size_t dimension() const override { return dimension_; }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) const override;

private:
    HttpJsonClient client_;
    std::size_t dimension_;
};

class HttpLanguageModel final : public LanguageModel {
public:
    explicit HttpLanguageModel(const ProviderConfig& config);
    std::string complete(const std::string& prompt) override;

private:
    HttpJsonClient client_;
};

class HttpReranker final : public Reranker {
public:
    explicit HttpReranker(const ProviderConfig& config);
    std::vector<double> rerank(const std::string& query, std::span<const std::string> passages,
                               std::span<const double> prior) const override;

private:
    HttpJsonClient client_;
};

class HttpVerifier final : public Verifier {
public:
    explicit HttpVerifier(const ProviderConfig& config);
    std::vector<double> verify(const std::string& claim,
                               std::span<const std::string> passages) const override;

private:
    HttpJsonClient client_;
};

class HttpRouter final : public Router {
public:
    explicit HttpRouter(const ProviderConfig& config);
    std::string route(const std::string& query,
                      const std::vector<std::string>& context) const override;

private:
    HttpJsonClient client_;
};

class HttpWebSearch final : public WebSearch {
public:
    explicit HttpWebSearch(const ProviderConfig& config);
    std::vector<WebResult> search(const std::string& query, std::size_t k) override;

private:
    HttpJsonClient client_;
};

}  // namespace esapiens::providers
