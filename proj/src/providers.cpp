#include "ideaeval/providers.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "ideaeval/error.hpp"
#include "ideaeval/text.hpp"

namespace ideaeval::providers {

namespace fs = std::filesystem;
using io::Json;

void GenerationConfig::validate() const {
  if (max_tokens <= 0) throw ValidationError("max_tokens must be positive");
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be non-negative");
}

Json to_json(const GenerationConfig& c) {
  Json doc{{"model_name", c.model_name}, {"max_tokens", c.max_tokens}, {"temperature", c.temperature}};
  doc["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  return doc;
}

GenerationConfig generation_config_from_json(const Json& doc) {
  GenerationConfig c;
  c.model_name = doc.value("model_name", std::string{});
  c.max_tokens = doc.value("max_tokens", 512);
  c.temperature = doc.value("temperature", 0.0);
  if (doc.contains("seed") && !doc["seed"].is_null()) c.seed = doc["seed"].get<std::int64_t>();
  c.validate();
  return c;
}

Json to_json(const ChatExchange& e) {
  Json doc{{"provider", e.provider_id}, {"model", e.model},           {"system", e.system},
           {"user", e.user},            {"response", e.response},     {"wall_seconds", e.wall_seconds},
           {"from_cache", e.from_cache}, {"attempts", e.attempts}};
  if (e.usage) {
    doc["usage"] = {{"prompt_tokens", e.usage->prompt_tokens}, {"completion_tokens", e.usage->completion_tokens}};
  }
  return doc;
}

// ---------------------------------------------------------------------------

std::unique_ptr<ScriptedChatProvider> ScriptedChatProvider::from_rules(const Json& spec, std::string id) {
  struct Rule {
    std::optional<std::string> model;
    std::optional<std::string> contains;
    std::string response;
  };
  std::vector<Rule> rules;
  if (spec.contains("rules")) {
    for (const auto& r : spec.at("rules")) {
      Rule rule;
      if (r.contains("model")) rule.model = r.at("model").get<std::string>();
      if (r.contains("contains")) rule.contains = r.at("contains").get<std::string>();
      if (!r.contains("response")) throw ValidationError("scripted rule without 'response'");
      rule.response = r.at("response").get<std::string>();
      rules.push_back(std::move(rule));
    }
  }
  std::optional<std::string> fallback;
  if (spec.contains("default")) fallback = spec.at("default").get<std::string>();

  return std::make_unique<ScriptedChatProvider>(
      [rules = std::move(rules), fallback = std::move(fallback)](const ChatRequest& req) {
        for (const auto& r : rules) {
          if (r.model && *r.model != req.config.model_name) continue;
          if (r.contains && req.user.find(*r.contains) == std::string::npos) continue;
          return r.response;
        }
        if (fallback) return *fallback;
        throw ProviderError(ProviderErrorKind::Request, "no scripted response matches the request");
      },
      std::move(id));
}

HashEmbedder::HashEmbedder(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw ValidationError("embedding dimension must be positive");
}

std::string HashEmbedder::id() const {
  return "hash-sha256-d" + std::to_string(dimension_) + "-s" + std::to_string(seed_);
}

std::vector<double> HashEmbedder::embed_one(std::string_view text) const {
  std::vector<double> v;
  v.reserve(dimension_);
  for (std::uint64_t block = 0; v.size() < dimension_; ++block) {
    std::string material = std::to_string(seed_) + ":" + std::to_string(block) + ":";
    material.append(text);
    const auto digest = text::sha256(material);
    for (std::size_t k = 0; k + 4 <= digest.size() && v.size() < dimension_; k += 4) {
      const std::uint32_t word = (std::uint32_t{digest[k]} << 24) | (std::uint32_t{digest[k + 1]} << 16) |
                                 (std::uint32_t{digest[k + 2]} << 8) | std::uint32_t{digest[k + 3]};
      v.push_back(static_cast<double>(word) / 4294967295.0 * 2.0 - 1.0);
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<std::vector<double>> HashEmbedder::embed_batch(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

std::vector<EmbeddingVector> embed(EmbeddingProvider& provider, std::span<const std::string> texts) {
  if (texts.empty()) throw ValidationError("embed requires at least one text");
  auto raw = provider.embed_batch(texts);
  if (raw.size() != texts.size()) {
    throw ProviderError(ProviderErrorKind::MalformedResponse,
                        "expected " + std::to_string(texts.size()) + " embeddings, got " + std::to_string(raw.size()));
  }
  std::vector<EmbeddingVector> out;
  out.reserve(raw.size());
  const std::size_t dim = raw.front().size();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].size() != dim || dim == 0) {
      throw ValidationError("embedding dimension mismatch in batch: index " + std::to_string(i) + " has " +
                            std::to_string(raw[i].size()) + ", expected " + std::to_string(dim));
    }
    for (double x : raw[i]) {
      if (!std::isfinite(x)) throw ProviderError(ProviderErrorKind::MalformedResponse, "non-finite embedding value");
    }
    out.push_back({std::move(raw[i]), text::sha256_hex(texts[i])});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::backoff(int retry_index) const {
  double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, retry_index);
  ms = std::min(ms, static_cast<double>(max_backoff.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string ResponseCache::key(std::string_view provider_id, const GenerationConfig& config,
                               std::string_view system, std::string_view user) {
  Json material{{"provider", provider_id}, {"system", system}, {"user", user}, {"config", to_json(config)}};
  return text::sha256_hex(material.dump());
}

fs::path ResponseCache::path_for(const std::string& key) const { return dir_ / key.substr(0, 2) / (key + ".txt"); }

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  const auto p = path_for(key);
  if (!fs::exists(p)) return std::nullopt;
  return io::read_file(p);
}

void ResponseCache::put(const std::string& key, std::string_view response) const {
  io::write_file_atomic(path_for(key), response);
}

// ---------------------------------------------------------------------------

ChatClient::ChatClient(std::shared_ptr<ChatProvider> provider, ClientOptions options)
    : provider_(std::move(provider)),
      options_(std::move(options)),
      in_flight_(options_.max_in_flight == 0 ? 1 : options_.max_in_flight),
      bucket_(options_.requests_per_second, options_.burst) {
  if (!provider_) throw ValidationError("chat client without provider");
  if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
}

std::string ChatClient::chat(std::string_view system, std::string_view user, const GenerationConfig& config) {
  config.validate();
  ChatExchange ex;
  ex.provider_id = provider_->id();
  ex.model = config.model_name;
  ex.system = system;
  ex.user = user;

  std::string key;
  if (cache_) {
    key = ResponseCache::key(ex.provider_id, config, system, user);
    if (auto hit = cache_->get(key)) {
      ex.response = *hit;
      ex.from_cache = true;
      log(ex);
      return std::move(*hit);
    }
  }

  const auto started = std::chrono::steady_clock::now();
  ChatRequest req{std::string(system), std::string(user), config};
  ChatResponse resp;
  {
    Semaphore::Guard guard(in_flight_);
    resp = with_retry(
        options_.retry, options_.sleep,
        [&] {
          bucket_.acquire();
          return provider_->complete(req);
        },
        &ex.attempts);
  }
  ex.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  ex.response = resp.text;
  ex.usage = resp.usage;
  if (cache_) cache_->put(key, resp.text);
  log(std::move(ex));
  return resp.text;
}

void ChatClient::log(ChatExchange exchange) {
  std::lock_guard lock(log_mu_);
  if (options_.exchange_log) {
    if (options_.exchange_log->has_parent_path()) fs::create_directories(options_.exchange_log->parent_path());
    std::ofstream out(*options_.exchange_log, std::ios::app | std::ios::binary);
    out << to_json(exchange).dump() << '\n';
  }
  exchanges_.push_back(std::move(exchange));
}

std::vector<ChatExchange> ChatClient::exchanges() const {
  std::lock_guard lock(log_mu_);
  return exchanges_;
}

EmbeddingClient::EmbeddingClient(std::shared_ptr<EmbeddingProvider> provider, ClientOptions options)
    : provider_(std::move(provider)),
      options_(std::move(options)),
      in_flight_(options_.max_in_flight == 0 ? 1 : options_.max_in_flight),
      bucket_(options_.requests_per_second, options_.burst) {
  if (!provider_) throw ValidationError("embedding client without provider");
}

std::vector<EmbeddingVector> EmbeddingClient::embed(std::span<const std::string> texts) {
  Semaphore::Guard guard(in_flight_);
  return with_retry(options_.retry, options_.sleep, [&] {
    bucket_.acquire();
    return providers::embed(*provider_, texts);
  });
}

EmbeddingVector EmbeddingClient::embed_one(const std::string& text) {
  return std::move(embed(std::span<const std::string>(&text, 1)).front());
}

// ---------------------------------------------------------------------------

std::string resolve_credential(const std::string& api_key_env) {
  if (api_key_env.empty()) return {};
  const char* value = std::getenv(api_key_env.c_str());
  if (value == nullptr || *value == '\0') {
    throw ValidationError("credential environment variable '" + api_key_env + "' is not set");
  }
  return value;
}

namespace {

HttpEndpoint endpoint_from_json(const Json& cfg) {
  HttpEndpoint ep;
  if (!cfg.contains("base_url")) throw ValidationError("http provider config without 'base_url'");
  ep.base_url = cfg.at("base_url").get<std::string>();
  ep.model = cfg.value("model", std::string{});
  ep.api_key_env = cfg.value("api_key_env", std::string{});
  ep.chat_path = cfg.value("chat_path", ep.chat_path);
  ep.embeddings_path = cfg.value("embeddings_path", ep.embeddings_path);
  ep.timeout = std::chrono::seconds(cfg.value("timeout_seconds", 120));
  return ep;
}

}  // namespace

std::shared_ptr<ChatProvider> make_chat_provider(const Json& cfg, bool offline, const fs::path& base_dir) {
  const auto kind = cfg.value("kind", std::string{});
  if (kind == "echo") return std::make_shared<EchoChatProvider>();
  if (kind == "scripted") {
    Json spec = cfg;
    if (cfg.contains("script")) {
      fs::path p = cfg.at("script").get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      spec = io::read_json(p);
    }
    return ScriptedChatProvider::from_rules(spec, cfg.value("id", std::string{"scripted"}));
  }
  if (kind == "openai") {
    if (offline) throw ValidationError("offline mode forbids the network chat provider 'openai'");
    return std::make_shared<OpenAiChatProvider>(endpoint_from_json(cfg));
  }
  throw ValidationError("unknown chat provider kind '" + kind + "'");
}

std::shared_ptr<EmbeddingProvider> make_embedding_provider(const Json& cfg, bool offline) {
  const auto kind = cfg.value("kind", std::string{});
  if (kind == "hash") {
    return std::make_shared<HashEmbedder>(cfg.value("dimension", std::size_t{64}), cfg.value("seed", std::uint64_t{0}));
  }
  if (kind == "http") {
    if (offline) throw ValidationError("offline mode forbids the network embedding provider 'http'");
    return std::make_shared<HttpEmbeddingProvider>(endpoint_from_json(cfg));
  }
  throw ValidationError("unknown embedding provider kind '" + kind + "'");
}

ClientOptions client_options_from_json(const Json& cfg) {
  ClientOptions o;
  o.max_in_flight = cfg.value("max_in_flight", std::size_t{4});
  o.requests_per_second = cfg.value("requests_per_second", 0.0);
  o.burst = cfg.value("burst", 1.0);
  o.retry.max_retries = cfg.value("max_retries", 2);
  o.retry.initial_backoff = std::chrono::milliseconds(cfg.value("initial_backoff_ms", 250));
  return o;
}

}  // namespace ideaeval::providers
