#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grag/embedding.hpp"

namespace grag {

struct ProviderUsage {
  std::size_t chat_calls = 0;
  std::size_t embedding_calls = 0;  // batches
  std::size_t embedded_texts = 0;
  std::vector<double> chat_latency_ms;
  std::vector<double> embedding_latency_ms;
};

/// Thread-safe call counters. Counts only grow; reset() is meant for use
/// between runs.
class UsageMeter {
 public:
  void record_chat(double latency_ms);
  void record_embedding(std::size_t texts, double latency_ms);

  std::size_t chat_calls() const { return chat_calls_.load(); }
  std::size_t embedding_calls() const { return embedding_calls_.load(); }
  std::size_t embedded_texts() const { return embedded_texts_.load(); }

  ProviderUsage snapshot() const;
  void reset();

 private:
  std::atomic<std::size_t> chat_calls_{0};
  std::atomic<std::size_t> embedding_calls_{0};
  std::atomic<std::size_t> embedded_texts_{0};
  mutable std::mutex mutex_;
  std::vector<double> chat_latency_ms_;
  std::vector<double> embedding_latency_ms_;
};

/// Chat-completion backend. chat() validates, meters and forwards to
/// complete(); implementations must be safe for concurrent use.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;

  std::string chat(std::string_view prompt);

  virtual std::string_view kind() const = 0;
  const UsageMeter& usage() const { return usage_; }
  UsageMeter& usage() { return usage_; }

 protected:
  virtual std::string complete(std::string_view prompt) = 0;

 private:
  UsageMeter usage_;
};

/// Text-embedding backend. One embed() call is one batch; output order
/// matches input order.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);

  virtual std::string_view kind() const = 0;
  const UsageMeter& usage() const { return usage_; }
  UsageMeter& usage() { return usage_; }

 protected:
  virtual std::vector<EmbeddingVector> compute(std::span<const std::string> texts) = 0;

 private:
  UsageMeter usage_;
};

/// Non-owning pair of handles passed through the pipeline.
struct Providers {
  ChatProvider& chat;
  EmbeddingProvider& embedder;
};

// Forwarding wrappers observing only the calls made through them. Used for
// per-request diagnostics while the wrapped provider keeps global totals.
class CountingChat final : public ChatProvider {
 public:
  explicit CountingChat(ChatProvider& inner) : inner_(inner) {}
  std::string_view kind() const override { return inner_.kind(); }

 protected:
  std::string complete(std::string_view prompt) override { return inner_.chat(prompt); }

 private:
  ChatProvider& inner_;
};

class CountingEmbedder final : public EmbeddingProvider {
 public:
  explicit CountingEmbedder(EmbeddingProvider& inner) : inner_(inner) {}
  std::string_view kind() const override { return inner_.kind(); }

 protected:
  std::vector<EmbeddingVector> compute(std::span<const std::string> texts) override {
    return inner_.embed(texts);
  }

 private:
  EmbeddingProvider& inner_;
};

// ---------------------------------------------------------------------------
// Mock backends

struct MockRule {
  enum class Match { prompt_hash, prompt_substring };
  Match match = Match::prompt_substring;
  std::string pattern;  // lowercase hex MD5 of the prompt, or a substring
  std::string response;
};

struct MockScript {
  std::vector<MockRule> chat;
  std::map<std::string, EmbeddingVector> embeddings;  // exact text overrides
  std::optional<std::string> default_response;
};

/// Reads a mock script: either a JSON array of chat rules or an object
/// {"chat": [...], "embeddings": [{"text", "vector"}], "default_response"}.
/// A rule is {"prompt_hash" | "prompt_substring", "response"}.
MockScript load_mock_script(const std::filesystem::path& path);
MockScript parse_mock_script(std::string_view json);

/// Scripted chat. Hash rules win over substring rules; substring rules are
/// tried in script order. With no match, returns default_response when set,
/// otherwise throws Error(scripting_gap) naming the prompt hash.
class MockChatProvider final : public ChatProvider {
 public:
  using Responder = std::function<std::string(std::string_view prompt)>;

  explicit MockChatProvider(MockScript script);
  explicit MockChatProvider(Responder responder);

  std::string_view kind() const override { return "mock"; }

 protected:
  std::string complete(std::string_view prompt) override;

 private:
  MockScript script_;
  Responder responder_;
};

inline constexpr std::size_t kDefaultMockEmbeddingDim = 16;

/// Hash-expanded pseudo-random unit vector: component j is derived from the
/// first 8 bytes of MD5("<text>#<j>") read big-endian, mapped to [-1, 1).
EmbeddingVector mock_embedding(std::string_view text, std::size_t dim = kDefaultMockEmbeddingDim);

class MockEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(std::size_t dim = kDefaultMockEmbeddingDim,
                                 std::map<std::string, EmbeddingVector> overrides = {});

  std::string_view kind() const override { return "mock"; }
  std::size_t dim() const { return dim_; }

 protected:
  std::vector<EmbeddingVector> compute(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
  std::map<std::string, EmbeddingVector> overrides_;
};

// ---------------------------------------------------------------------------
// Remote backend (OpenAI-compatible JSON API)

struct RemoteConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string chat_model;
  std::string embedding_model;
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;  // total attempts
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_max{8000};
  std::size_t concurrency = 4;
};

/// Counting semaphore with a runtime limit.
class CallLimiter {
 public:
  explicit CallLimiter(std::size_t limit) : available_(limit == 0 ? 1 : limit) {}
  void acquire();
  void release();

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t available_;
};

/// Issues JSON POSTs with bearer auth, timeouts and bounded exponential
/// backoff. Only transport failures, 429 and 5xx are retried.
class RemoteClient {
 public:
  explicit RemoteClient(RemoteConfig config);
  ~RemoteClient();

  std::string post_json(std::string_view path, const std::string& body);
  const RemoteConfig& config() const { return config_; }

 private:
  struct Endpoint;
  static void parse_endpoint(const std::string& url, Endpoint* out);
  RemoteConfig config_;
  std::unique_ptr<Endpoint> endpoint_;
  CallLimiter limiter_;
};

class RemoteChatProvider final : public ChatProvider {
 public:
  explicit RemoteChatProvider(std::shared_ptr<RemoteClient> client);
  std::string_view kind() const override { return "remote"; }

 protected:
  std::string complete(std::string_view prompt) override;

 private:
  std::shared_ptr<RemoteClient> client_;
};

class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(std::shared_ptr<RemoteClient> client);
  std::string_view kind() const override { return "remote"; }

 protected:
  std::vector<EmbeddingVector> compute(std::span<const std::string> texts) override;

 private:
  std::shared_ptr<RemoteClient> client_;
};

}  // namespace grag
