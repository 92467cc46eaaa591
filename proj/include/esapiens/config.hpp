#pragma once

#include "esapiens/ingest.hpp"
#include "esapiens/orchestrator.hpp"
#include "esapiens/providers.hpp"
#include "esapiens/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>

namespace esapiens::config {

/// Provider wiring. `sql` is the language model used for text-to-SQL; it
/// shares the draft wire contract.
struct ProviderSettings {
    std::map<providers::ProviderKind, providers::ProviderConfig> by_kind;
    providers::ProviderConfig sql;
    std::string draft_mock = "extractive";  // extractive | adversarial
    std::optional<std::string> sql_script;  // mock SQL responses, one per line
    std::size_t embed_dimension = 64;
};

struct ServiceSettings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::string> state_dir;
    std::optional<std::string> index_dir;
    int heartbeat_ms = 15000;
};

struct AppConfig {
    ingest::ChunkPolicy chunking;
    retrieval::RetrievalConfig retrieval;
    orchestrator::OrchestratorConfig orchestrator;
    ProviderSettings providers;
    ServiceSettings service;

    void validate() const;
};

/// INI text with sections [chunking] [retrieval] [grounding] [t2s]
/// [providers] [service]. Unknown sections or keys are errors.
AppConfig parse_config(const std::string& ini_text);
AppConfig load_config(const std::string& path);

nlohmann::json to_json(const AppConfig& c);

/// Mock or HTTP providers as configured.
struct ProviderBundle {
    std::shared_ptr<const providers::Embedder> embedder;
    orchestrator::Providers providers;
};

ProviderBundle build_providers(const ProviderSettings& p);

}  // namespace esapiens::config
