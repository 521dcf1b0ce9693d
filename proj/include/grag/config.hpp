#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "grag/corpus.hpp"
#include "grag/providers.hpp"
#include "grag/retrieval.hpp"

namespace grag {

struct ProviderConfig {
  std::string kind = "mock";  // mock | remote
  std::string base_url = "https://api.openai.com/v1";
  std::string chat_model = "gpt-4o-mini";
  std::string embedding_model = "text-embedding-3-small";
  std::int64_t timeout_ms = 60000;
  int max_retries = 3;
  std::size_t concurrency = 4;
  std::string mock_script;  // path; empty means no scripted replies
  std::size_t embedding_dim = kDefaultMockEmbeddingDim;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  RetrievalParams retrieval;
  bool allow_out_of_range = false;
  ChunkingParams chunking;
  ProviderConfig provider;
  std::string graph_path;
  std::string default_language = "en";
  bool debug_context = false;
  std::size_t extraction_concurrency = 1;

  /// Retrieval ranges (unless allow_out_of_range), chunking invariants,
  /// provider kind. Throws Error(config).
  void validate() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;
EnvLookup process_env();

/// JSON config. Every leaf "section.key" may be overridden by the variable
/// GRAG_<SECTION>_<KEY> (top-level keys: GRAG_<KEY>), parsed as the type of
/// the value it replaces. Missing keys keep their defaults.
ServiceConfig parse_config(std::string_view json, const EnvLookup& env = {});
ServiceConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env());
std::string config_to_json(const ServiceConfig& config);

inline constexpr const char* kApiKeyVariable = "GRAG_API_KEY";

struct ProviderSet {
  std::unique_ptr<ChatProvider> chat;
  std::unique_ptr<EmbeddingProvider> embedder;

  Providers handles() const { return Providers{*chat, *embedder}; }
};

/// Remote backends read the secret from GRAG_API_KEY.
ProviderSet make_providers(const ProviderConfig& config, const EnvLookup& env = process_env());

}  // namespace grag
