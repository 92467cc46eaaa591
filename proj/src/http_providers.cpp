#include "esapiens/http_providers.hpp"

#include <httplib.h>

namespace esapiens::providers {

using nlohmann::json;

namespace {

std::vector<double> scores_from(const json& reply, std::size_t expected) {
    const auto it = reply.find("scores");
    if (it == reply.end() || !it->is_array()) throw ProviderError("reply lacks a 'scores' array");
    auto scores = it->get<std::vector<double>>();
    if (scores.size() != expected) {
        throw ProviderError("reply carries " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(expected) + " passages");
    }
    return scores;
}

const std::string& require_endpoint(const ProviderConfig& config) {
    config.validate();
    if (!config.endpoint) throw ConfigError("http provider requires an endpoint");
    return *config.endpoint;
}

}  // namespace

HttpJsonClient::HttpJsonClient(std::string url, int timeout_ms, int max_retries_transport)
    : url_(std::move(url)), timeout_ms_(timeout_ms), max_retries_(max_retries_transport) {
    const auto scheme = url_.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + url_);
    const auto slash = url_.find('/', scheme + 3);
    origin_ = url_.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url_.substr(slash);
}

json HttpJsonClient::post(const json& body) const {
    const auto payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        httplib::Client cli(origin_);
        const auto sec = timeout_ms_ / 1000;
        const auto usec = (timeout_ms_ % 1000) * 1000;
        cli.set_connection_timeout(sec, usec);
        cli.set_read_timeout(sec, usec);
        cli.set_write_timeout(sec, usec);
        auto res = cli.Post(path_, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw ProviderError(url_ + ": HTTP " + std::to_string(res->status));
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw ProviderError(url_ + ": malformed JSON reply: " + e.what());
        }
    }
    throw ProviderError(url_ + ": " + last_error);
}

HttpEmbedder::HttpEmbedder(const ProviderConfig& config, std::size_t dimension)
    : client_(require_endpoint(config), config.timeout_ms, config.max_retries_transport),
      dimension_(dimension) {}

std::vector<std::vector<double>> HttpEmbedder::embed(std::span<const std::string> texts) const {
    const auto reply = client_.post({{"texts", std::vector<std::string>(texts.begin(), texts.end())}});
    try {
        auto vectors = reply.at("vectors").get<std::vector<std::vector<double>>>();
        if (vectors.size() != texts.size()) throw ProviderError("embed reply size mismatch");
        return vectors;
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed embed reply: ") + e.what());
    }
}

HttpLanguageModel::HttpLanguageModel(const ProviderConfig& config)
    : client_(require_endpoint(config), config.timeout_ms, config.max_retries_transport) {}

std::string HttpLanguageModel::complete(const std::string& prompt) {
    const auto reply = client_.post({{"prompt", prompt}});
    const auto it = reply.find("text");
    if (it == reply.end() || !it->is_string()) throw ProviderError("draft reply lacks 'text'");
    return it->get<std::string>();
}

HttpReranker::HttpReranker(const ProviderConfig& config)
    : client_(require_endpoint(config), config.timeout_ms, config.max_retries_transport) {}

std::vector<double> HttpReranker::rerank(const std::string& query,
                                         std::span<const std::string> passages,
                                         std::span<const double>) const {
    const auto reply = client_.post(
        {{"query", query}, {"passages", std::vector<std::string>(passages.begin(), passages.end())}});
    return scores_from(reply, passages.size());
}

HttpVerifier::HttpVerifier(const ProviderConfig& config)
    : client_(require_endpoint(config), config.timeout_ms, config.max_retries_transport) {}

std::vector<double> HttpVerifier::verify(const std::string& claim,
                                         std::span<const std::string> passages) const {
    const auto reply = client_.post(
        {{"claim", claim}, {"passages", std::vector<std::string>(passages.begin(), passages.end())}});
    return scores_from(reply, passages.size());
}

HttpRouter::HttpRouter(const ProviderConfig& config)
    : client_(require_endpoint(config), config.timeout_ms, config.max_retries_transport) {}

std::string HttpRouter::route(const std::string& query, const std::vector<std::string>& context) const {
    const auto reply = client_.post({{"query", query}, {"context", context}});
    const auto it = reply.find("label");
    if (it == reply.end() || !it->is_string()) throw ProviderError("route reply lacks 'label'");
    return it->get<std::string>();
}

HttpWebSearch::HttpWebSearch(const ProviderConfig& config)
    : client_(require_endpoint(config), config.timeout_ms, config.max_retries_transport) {}

std::vector<WebResult> HttpWebSearch::search(const std::string& query, std::size_t k) {
    const auto reply = client_.post({{"query", query}, {"k", k}});
    std::vector<WebResult> out;
    try {
        for (const auto& r : reply.at("results")) {
            out.push_back({r.value("title", ""), r.value("url", ""), r.value("snippet", "")});
        }
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed websearch reply: ") + e.what());
    }
    return out;
}

}  // namespace esapiens::providers
