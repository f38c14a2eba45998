#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ideaeval/concurrency.hpp"
#include "ideaeval/error.hpp"
#include "ideaeval/io.hpp"

namespace ideaeval::providers {

struct GenerationConfig {
  std::string model_name;
  int max_tokens = 512;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;

  /// max_tokens > 0 and temperature >= 0, else ValidationError.
  void validate() const;
};

io::Json to_json(const GenerationConfig& c);
GenerationConfig generation_config_from_json(const io::Json& doc);

struct ChatRequest {
  std::string system;
  std::string user;
  GenerationConfig config;
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::optional<TokenUsage> usage;
};

/// One logged call. The response is kept byte-for-byte as returned.
struct ChatExchange {
  std::string provider_id;
  std::string model;
  std::string system;
  std::string user;
  std::string response;
  double wall_seconds = 0.0;
  std::optional<TokenUsage> usage;
  bool from_cache = false;
  int attempts = 0;
};

io::Json to_json(const ChatExchange& e);

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string id() const = 0;
  virtual bool uses_network() const { return false; }
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string text_hash;  ///< SHA-256 of the source text

  std::size_t dimension() const noexcept { return values.size(); }
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual bool uses_network() const { return false; }
  /// One raw vector per input, same order.
  virtual std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) = 0;
};

// ---------------------------------------------------------------------------
// Offline providers

/// Returns the user prompt unchanged.
class EchoChatProvider final : public ChatProvider {
 public:
  std::string id() const override { return "echo"; }
  ChatResponse complete(const ChatRequest& request) override { return {request.user, std::nullopt}; }
};

/// Answers through a caller-supplied function; counts calls.
class ScriptedChatProvider final : public ChatProvider {
 public:
  using Script = std::function<std::string(const ChatRequest&)>;

  explicit ScriptedChatProvider(Script script, std::string id = "scripted")
      : script_(std::move(script)), id_(std::move(id)) {}

  /// Rule table: {"rules": [{"model"?, "contains"?, "response"}], "default"?}.
  /// The first rule whose model equals the request model (when given) and whose
  /// `contains` occurs in the user prompt (when given) answers.
  static std::unique_ptr<ScriptedChatProvider> from_rules(const io::Json& spec, std::string id = "scripted");

  std::string id() const override { return id_; }
  ChatResponse complete(const ChatRequest& request) override {
    ++calls_;
    return {script_(request), std::nullopt};
  }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  Script script_;
  std::string id_;
  std::atomic<std::size_t> calls_{0};
};

/// Deterministic embedder for offline use: coordinates come from SHA-256 of
/// (seed, block counter, text), mapped to [-1, 1] and unit-normalized.
class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(std::size_t dimension = 64, std::uint64_t seed = 0);

  std::string id() const override;
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;

  std::vector<double> embed_one(std::string_view text) const;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

/// Validates a provider's batch: non-empty input, one finite vector per text,
/// uniform dimension. Attaches source-text hashes.
std::vector<EmbeddingVector> embed(EmbeddingProvider& provider, std::span<const std::string> texts);

// ---------------------------------------------------------------------------
// Client-side infrastructure

struct RetryPolicy {
  int max_retries = 2;  ///< attempts = max_retries + 1
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};

  std::chrono::milliseconds backoff(int retry_index) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

Sleeper real_sleeper();

/// Content-addressed response store: <dir>/<key[0:2]>/<key>.txt.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  static std::string key(std::string_view provider_id, const GenerationConfig& config, std::string_view system,
                         std::string_view user);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, std::string_view response) const;

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path dir_;
};

struct ClientOptions {
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
  double requests_per_second = 0.0;  ///< 0 = unlimited
  double burst = 1.0;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> exchange_log;  ///< JSON Lines
  Sleeper sleep = real_sleeper();
};

/// Retries `call` on retryable ProviderErrors per `policy`; the last error is rethrown.
/// `attempts_out`, when given, receives the number of attempts made.
template <class Fn>
auto with_retry(const RetryPolicy& policy, const Sleeper& sleep, Fn&& call, int* attempts_out = nullptr);

/// Shared front end for a chat provider: cache, retry, bounded in-flight
/// requests, rate limiting, exchange log. Safe to share across threads.
class ChatClient {
 public:
  ChatClient(std::shared_ptr<ChatProvider> provider, ClientOptions options = {});

  std::string chat(std::string_view system, std::string_view user, const GenerationConfig& config);

  std::vector<ChatExchange> exchanges() const;
  ChatProvider& provider() const noexcept { return *provider_; }

 private:
  void log(ChatExchange exchange);

  std::shared_ptr<ChatProvider> provider_;
  ClientOptions options_;
  std::optional<ResponseCache> cache_;
  Semaphore in_flight_;
  TokenBucket bucket_;
  mutable std::mutex log_mu_;
  std::vector<ChatExchange> exchanges_;
};

/// Embedding counterpart of ChatClient (retry, bound, rate limit; no cache).
class EmbeddingClient {
 public:
  EmbeddingClient(std::shared_ptr<EmbeddingProvider> provider, ClientOptions options = {});

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);
  EmbeddingVector embed_one(const std::string& text);

  EmbeddingProvider& provider() const noexcept { return *provider_; }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  ClientOptions options_;
  Semaphore in_flight_;
  TokenBucket bucket_;
};

// ---------------------------------------------------------------------------
// HTTP providers (chat-completions style)

struct HttpEndpoint {
  std::string base_url;  ///< scheme://host[:port][/prefix]
  std::string model;  ///< embedding model; chat models come from GenerationConfig
  std::string api_key_env;  ///< empty = no Authorization header
  std::string chat_path = "/chat/completions";
  std::string embeddings_path = "/embeddings";
  std::chrono::seconds timeout{120};
};

/// Reads the credential named by `api_key_env`; ValidationError when unset.
std::string resolve_credential(const std::string& api_key_env);

class OpenAiChatProvider final : public ChatProvider {
 public:
  explicit OpenAiChatProvider(HttpEndpoint endpoint);

  std::string id() const override { return "http:" + endpoint_.base_url; }
  bool uses_network() const override { return true; }
  ChatResponse complete(const ChatRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  std::string api_key_;
};

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEndpoint endpoint);

  std::string id() const override { return "http:" + endpoint_.base_url + "#" + endpoint_.model; }
  bool uses_network() const override { return true; }
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;

 private:
  HttpEndpoint endpoint_;
  std::string api_key_;
};

/// Builds a provider from a config object {"kind": "openai"|"echo"|"scripted", ...}.
/// `offline` rejects network-backed kinds with ValidationError.
std::shared_ptr<ChatProvider> make_chat_provider(const io::Json& cfg, bool offline,
                                                 const std::filesystem::path& base_dir = {});
/// {"kind": "hash"|"http", ...}.
std::shared_ptr<EmbeddingProvider> make_embedding_provider(const io::Json& cfg, bool offline);
ClientOptions client_options_from_json(const io::Json& cfg);

// ---------------------------------------------------------------------------

template <class Fn>
auto with_retry(const RetryPolicy& policy, const Sleeper& sleep, Fn&& call, int* attempts_out) {
  for (int attempt = 0;; ++attempt) {
    try {
      if (attempts_out) *attempts_out = attempt + 1;
      return call();
    } catch (const ProviderError& e) {
      if (!e.retryable() || attempt >= policy.max_retries) throw;
      sleep(policy.backoff(attempt));
    }
  }
}

}  // namespace ideaeval::providers
