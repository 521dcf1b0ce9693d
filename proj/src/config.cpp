#include "grag/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "grag/error.hpp"

namespace grag {

using nlohmann::json;

void ServiceConfig::validate() const {
  retrieval.validate(allow_out_of_range);
  chunking.validate();
  if (provider.kind != "mock" && provider.kind != "remote") {
    throw Error(ErrorCode::config, "provider.kind must be 'mock' or 'remote'");
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::config, "bind.port out of range");
  if (default_language.empty()) throw Error(ErrorCode::config, "default_language must be set");
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

std::string config_to_json(const ServiceConfig& c) {
  const json j = {
      {"bind", {{"host", c.host}, {"port", c.port}}},
      {"retrieval",
       {{"k", c.retrieval.k},
        {"t", c.retrieval.t},
        {"o", c.retrieval.o},
        {"i", c.retrieval.i},
        {"c", c.retrieval.c},
        {"allow_out_of_range", c.allow_out_of_range}}},
      {"chunking", {{"chunk_size", c.chunking.chunk_size}, {"chunk_overlap", c.chunking.chunk_overlap}}},
      {"provider",
       {{"kind", c.provider.kind},
        {"base_url", c.provider.base_url},
        {"chat_model", c.provider.chat_model},
        {"embedding_model", c.provider.embedding_model},
        {"timeout_ms", c.provider.timeout_ms},
        {"max_retries", c.provider.max_retries},
        {"concurrency", c.provider.concurrency},
        {"mock_script", c.provider.mock_script},
        {"embedding_dim", c.provider.embedding_dim}}},
      {"graph_path", c.graph_path},
      {"default_language", c.default_language},
      {"debug_context", c.debug_context},
      {"extraction_concurrency", c.extraction_concurrency}};
  return j.dump(2);
}

namespace {

void merge_into(json& base, const json& patch, const std::string& where) {
  for (const auto& [k, v] : patch.items()) {
    const std::string path = where.empty() ? k : where + "." + k;
    if (!base.contains(k)) throw Error(ErrorCode::config, "unknown config key '" + path + "'");
    json& slot = base[k];
    if (slot.is_object()) {
      if (!v.is_object()) throw Error(ErrorCode::config, "config key '" + path + "' must be an object");
      merge_into(slot, v, path);
    } else {
      const bool numeric_ok = slot.is_number() && v.is_number();
      if (slot.type() != v.type() && !numeric_ok) {
        throw Error(ErrorCode::config, "config key '" + path + "' has the wrong type");
      }
      slot = v;
    }
  }
}

std::string env_name(const std::string& path) {
  std::string name = "GRAG_";
  for (char c : path) name.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return name;
}

void apply_env(json& node, const std::string& where, const EnvLookup& env) {
  for (auto& [k, v] : node.items()) {
    const std::string path = where.empty() ? k : where + "." + k;
    if (v.is_object()) {
      apply_env(v, path, env);
      continue;
    }
    const auto value = env(env_name(path));
    if (!value) continue;
    try {
      if (v.is_string()) {
        v = *value;
      } else {
        const json parsed = json::parse(*value);
        const bool numeric_ok = v.is_number() && parsed.is_number();
        if (parsed.type() != v.type() && !numeric_ok) throw std::invalid_argument("type");
        v = parsed;
      }
    } catch (const std::exception&) {
      throw Error(ErrorCode::config, "environment variable " + env_name(path) + " has an invalid value");
    }
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::config, std::string("config key '") + section + "." + key + "' is invalid");
  }
}

}  // namespace

ServiceConfig parse_config(std::string_view text, const EnvLookup& env) {
  json j = json::parse(config_to_json(ServiceConfig{}));
  if (!text.empty()) {
    json patch;
    try {
      patch = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::config, std::string("config: ") + e.what());
    }
    if (!patch.is_object()) throw Error(ErrorCode::config, "config must be a JSON object");
    merge_into(j, patch, "");
  }
  if (env) apply_env(j, "", env);

  ServiceConfig c;
  c.host = get<std::string>(j, "bind", "host");
  c.port = get<int>(j, "bind", "port");
  // Counts arrive as JSON numbers; negative values must not wrap.
  const auto count = [&](const char* section, const char* key) {
    const double v = get<double>(j, section, key);
    if (v < 0 || v != static_cast<double>(static_cast<long long>(v))) {
      throw Error(ErrorCode::config, std::string("config key '") + section + "." + key +
                                         "' must be a non-negative integer");
    }
    return static_cast<std::size_t>(v);
  };
  c.retrieval.k = count("retrieval", "k");
  c.retrieval.t = get<double>(j, "retrieval", "t");
  c.retrieval.o = count("retrieval", "o");
  c.retrieval.i = count("retrieval", "i");
  c.retrieval.c = count("retrieval", "c");
  c.allow_out_of_range = get<bool>(j, "retrieval", "allow_out_of_range");
  c.chunking.chunk_size = count("chunking", "chunk_size");
  c.chunking.chunk_overlap = count("chunking", "chunk_overlap");
  c.provider.kind = get<std::string>(j, "provider", "kind");
  c.provider.base_url = get<std::string>(j, "provider", "base_url");
  c.provider.chat_model = get<std::string>(j, "provider", "chat_model");
  c.provider.embedding_model = get<std::string>(j, "provider", "embedding_model");
  c.provider.timeout_ms = static_cast<std::int64_t>(count("provider", "timeout_ms"));
  c.provider.max_retries = static_cast<int>(count("provider", "max_retries"));
  c.provider.concurrency = count("provider", "concurrency");
  c.provider.mock_script = get<std::string>(j, "provider", "mock_script");
  c.provider.embedding_dim = count("provider", "embedding_dim");
  c.graph_path = j.at("graph_path").get<std::string>();
  c.default_language = j.at("default_language").get<std::string>();
  c.debug_context = j.at("debug_context").get<bool>();
  c.extraction_concurrency = static_cast<std::size_t>(j.at("extraction_concurrency").get<double>());
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  ServiceConfig c = parse_config(ss.str(), env);
  const auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (path.parent_path() / p).string();
  };
  resolve(c.provider.mock_script);
  resolve(c.graph_path);
  return c;
}

ProviderSet make_providers(const ProviderConfig& config, const EnvLookup& env) {
  ProviderSet set;
  if (config.kind == "mock") {
    MockScript script;
    if (!config.mock_script.empty()) {
      script = load_mock_script(config.mock_script);
    } else {
      script.default_response = "[]";
    }
    auto overrides = script.embeddings;
    set.chat = std::make_unique<MockChatProvider>(std::move(script));
    set.embedder = std::make_unique<MockEmbeddingProvider>(config.embedding_dim, std::move(overrides));
    return set;
  }
  if (config.kind != "remote") throw Error(ErrorCode::config, "unknown provider kind '" + config.kind + "'");
  RemoteConfig rc;
  rc.base_url = config.base_url;
  rc.chat_model = config.chat_model;
  rc.embedding_model = config.embedding_model;
  rc.timeout = std::chrono::milliseconds(config.timeout_ms);
  rc.max_retries = config.max_retries;
  rc.concurrency = config.concurrency;
  if (env) rc.api_key = env(kApiKeyVariable).value_or("");
  auto client = std::make_shared<RemoteClient>(rc);
  set.chat = std::make_unique<RemoteChatProvider>(client);
  set.embedder = std::make_unique<RemoteEmbeddingProvider>(client);
  return set;
}

}  // namespace grag
