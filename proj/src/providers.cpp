#include "grag/providers.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "grag/error.hpp"
#include "grag/md5.hpp"

namespace grag {

using nlohmann::json;

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

void UsageMeter::record_chat(double latency_ms) {
  ++chat_calls_;
  std::lock_guard lock(mutex_);
  chat_latency_ms_.push_back(latency_ms);
}

void UsageMeter::record_embedding(std::size_t texts, double latency_ms) {
  ++embedding_calls_;
  embedded_texts_ += texts;
  std::lock_guard lock(mutex_);
  embedding_latency_ms_.push_back(latency_ms);
}

ProviderUsage UsageMeter::snapshot() const {
  ProviderUsage u;
  u.chat_calls = chat_calls_.load();
  u.embedding_calls = embedding_calls_.load();
  u.embedded_texts = embedded_texts_.load();
  std::lock_guard lock(mutex_);
  u.chat_latency_ms = chat_latency_ms_;
  u.embedding_latency_ms = embedding_latency_ms_;
  return u;
}

void UsageMeter::reset() {
  chat_calls_ = 0;
  embedding_calls_ = 0;
  embedded_texts_ = 0;
  std::lock_guard lock(mutex_);
  chat_latency_ms_.clear();
  embedding_latency_ms_.clear();
}

std::string ChatProvider::chat(std::string_view prompt) {
  if (prompt.empty()) throw Error(ErrorCode::invalid_argument, "chat: empty prompt");
  const auto start = std::chrono::steady_clock::now();
  // Failed calls are metered too: they were issued.
  try {
    std::string reply = complete(prompt);
    usage_.record_chat(elapsed_ms(start));
    return reply;
  } catch (...) {
    usage_.record_chat(elapsed_ms(start));
    throw;
  }
}

std::vector<EmbeddingVector> EmbeddingProvider::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw Error(ErrorCode::invalid_argument, "embed: empty batch");
  for (const auto& t : texts) {
    if (t.empty()) throw Error(ErrorCode::invalid_argument, "embed: empty text in batch");
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<EmbeddingVector> out;
  try {
    out = compute(texts);
  } catch (...) {
    usage_.record_embedding(texts.size(), elapsed_ms(start));
    throw;
  }
  usage_.record_embedding(texts.size(), elapsed_ms(start));
  if (out.size() != texts.size()) {
    throw Error(ErrorCode::malformed_response, "embed: backend returned " + std::to_string(out.size()) +
                                                   " vectors for " + std::to_string(texts.size()) +
                                                   " texts");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mock

MockScript parse_mock_script(std::string_view text) {
  MockScript script;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("mock script: ") + e.what());
  }
  const json* rules = nullptr;
  if (j.is_array()) {
    rules = &j;
  } else if (j.is_object()) {
    if (j.contains("chat")) rules = &j["chat"];
    if (j.contains("default_response")) script.default_response = j["default_response"].get<std::string>();
    if (j.contains("embeddings")) {
      for (const auto& e : j["embeddings"]) {
        const auto& comps = e.at("vector");
        EmbeddingVector v(static_cast<Eigen::Index>(comps.size()));
        for (std::size_t i = 0; i < comps.size(); ++i) v[static_cast<Eigen::Index>(i)] = comps[i].get<double>();
        script.embeddings[e.at("text").get<std::string>()] = std::move(v);
      }
    }
  } else {
    throw Error(ErrorCode::config, "mock script must be an array or an object");
  }
  if (rules) {
    for (const auto& r : *rules) {
      MockRule rule;
      if (r.contains("prompt_hash")) {
        rule.match = MockRule::Match::prompt_hash;
        rule.pattern = r["prompt_hash"].get<std::string>();
      } else if (r.contains("prompt_substring")) {
        rule.match = MockRule::Match::prompt_substring;
        rule.pattern = r["prompt_substring"].get<std::string>();
      } else {
        throw Error(ErrorCode::config, "mock rule needs prompt_hash or prompt_substring");
      }
      rule.response = r.at("response").get<std::string>();
      script.chat.push_back(std::move(rule));
    }
  }
  return script;
}

MockScript load_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open mock script " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_mock_script(ss.str());
}

MockChatProvider::MockChatProvider(MockScript script) : script_(std::move(script)) {}
MockChatProvider::MockChatProvider(Responder responder) : responder_(std::move(responder)) {}

std::string MockChatProvider::complete(std::string_view prompt) {
  if (responder_) return responder_(prompt);
  const std::string hash = md5_hex(prompt);
  for (const auto& r : script_.chat) {
    if (r.match == MockRule::Match::prompt_hash && r.pattern == hash) return r.response;
  }
  for (const auto& r : script_.chat) {
    if (r.match == MockRule::Match::prompt_substring && prompt.find(r.pattern) != std::string_view::npos) {
      return r.response;
    }
  }
  if (script_.default_response) return *script_.default_response;
  throw Error(ErrorCode::scripting_gap, "mock chat has no reply scripted for prompt " + hash);
}

EmbeddingVector mock_embedding(std::string_view text, std::size_t dim) {
  EmbeddingVector v(static_cast<Eigen::Index>(dim));
  std::string input(text);
  input.push_back('#');
  const std::size_t base = input.size();
  for (std::size_t j = 0; j < dim; ++j) {
    input.resize(base);
    input += std::to_string(j);
    const Md5Digest d = md5(input);
    std::uint64_t h = 0;
    for (int b = 0; b < 8; ++b) h = (h << 8) | d[b];
    const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
    v[static_cast<Eigen::Index>(j)] = 2.0 * unit - 1.0;
  }
  const double norm = v.norm();
  if (norm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / norm;
}

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dim,
                                             std::map<std::string, EmbeddingVector> overrides)
    : dim_(dim), overrides_(std::move(overrides)) {
  if (dim_ == 0) throw Error(ErrorCode::config, "mock embedding dimension must be positive");
  for (const auto& [text, v] : overrides_) {
    if (static_cast<std::size_t>(v.size()) != dim_) {
      throw Error(ErrorCode::config, "mock embedding override for '" + text + "' has dimension " +
                                         std::to_string(v.size()));
    }
  }
}

std::vector<EmbeddingVector> MockEmbeddingProvider::compute(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const auto it = overrides_.find(t);
    out.push_back(it != overrides_.end() ? it->second : mock_embedding(t, dim_));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Remote

void CallLimiter::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return available_ > 0; });
  --available_;
}

void CallLimiter::release() {
  {
    std::lock_guard lock(mutex_);
    ++available_;
  }
  cv_.notify_one();
}

struct RemoteClient::Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

void RemoteClient::parse_endpoint(const std::string& url, Endpoint* out) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::config, "base_url '" + url + "' has no scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  out->scheme_host_port = url.substr(0, path_start);
  out->path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out->path_prefix.empty() && out->path_prefix.back() == '/') out->path_prefix.pop_back();
}

RemoteClient::RemoteClient(RemoteConfig config)
    : config_(std::move(config)), endpoint_(std::make_unique<Endpoint>()), limiter_(config_.concurrency) {
  parse_endpoint(config_.base_url, endpoint_.get());
  if (config_.max_retries < 1) config_.max_retries = 1;
}

RemoteClient::~RemoteClient() = default;

std::string RemoteClient::post_json(std::string_view path, const std::string& body) {
  if (config_.api_key.empty()) {
    throw Error(ErrorCode::auth, std::string("remote provider: ") + "no API key configured");
  }
  struct Permit {
    CallLimiter& l;
    explicit Permit(CallLimiter& limiter) : l(limiter) { l.acquire(); }
    ~Permit() { l.release(); }
  } permit(limiter_);

  const std::string full_path = endpoint_->path_prefix + std::string(path);
  auto backoff = config_.backoff_initial;
  for (int attempt = 1;; ++attempt) {
    httplib::Client client(endpoint_->scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
    auto res = client.Post(full_path, headers, body, "application/json");

    std::optional<Error> failure;
    if (!res) {
      const auto err = res.error();
      failure.emplace(err == httplib::Error::Read || err == httplib::Error::Write ||
                              err == httplib::Error::ConnectionTimeout
                          ? ErrorCode::timeout
                          : ErrorCode::transport,
                      "remote provider: " + httplib::to_string(err));
    } else if (res->status == 200) {
      return res->body;
    } else if (res->status == 401 || res->status == 403) {
      throw Error(ErrorCode::auth, "remote provider: HTTP " + std::to_string(res->status));
    } else if (res->status == 429) {
      failure.emplace(ErrorCode::rate_limit, "remote provider: rate limited");
    } else if (res->status >= 500) {
      failure.emplace(ErrorCode::transport, "remote provider: HTTP " + std::to_string(res->status));
    } else {
      throw Error(ErrorCode::malformed_response,
                  "remote provider: HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    if (attempt >= config_.max_retries) throw *failure;
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, config_.backoff_max);
  }
}

RemoteChatProvider::RemoteChatProvider(std::shared_ptr<RemoteClient> client)
    : client_(std::move(client)) {}

std::string RemoteChatProvider::complete(std::string_view prompt) {
  const json body = {{"model", client_->config().chat_model},
                     {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})}};
  const std::string raw = client_->post_json("/chat/completions", body.dump());
  try {
    const json j = json::parse(raw);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("chat completion: ") + e.what());
  }
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::shared_ptr<RemoteClient> client)
    : client_(std::move(client)) {}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::compute(std::span<const std::string> texts) {
  const json body = {{"model", client_->config().embedding_model},
                     {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  const std::string raw = client_->post_json("/embeddings", body.dump());
  try {
    const json j = json::parse(raw);
    const auto& data = j.at("data");
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<bool> filled(texts.size(), false);
    for (std::size_t n = 0; n < data.size(); ++n) {
      const auto& item = data[n];
      const std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : n;
      if (idx >= texts.size() || filled[idx]) {
        throw Error(ErrorCode::malformed_response, "embeddings: bad index in response");
      }
      const auto& comps = item.at("embedding");
      EmbeddingVector v(static_cast<Eigen::Index>(comps.size()));
      for (std::size_t i = 0; i < comps.size(); ++i) v[static_cast<Eigen::Index>(i)] = comps[i].get<double>();
      out[idx] = std::move(v);
      filled[idx] = true;
    }
    for (bool f : filled) {
      if (!f) throw Error(ErrorCode::malformed_response, "embeddings: response is missing vectors");
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("embeddings: ") + e.what());
  }
}

}  // namespace grag
