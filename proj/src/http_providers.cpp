#include <httplib.h>

#include "ideaeval/error.hpp"
#include "ideaeval/providers.hpp"

namespace ideaeval::providers {

using io::Json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("base_url needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = base_url.substr(0, path_start);
  if (path_start != std::string::npos) out.prefix = base_url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

ProviderError classify(const httplib::Result& res) {
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      return {ProviderErrorKind::Timeout, httplib::to_string(err)};
    }
    return {ProviderErrorKind::Transport, httplib::to_string(err)};
  }
  const int status = res->status;
  const std::string detail = "HTTP " + std::to_string(status);
  if (status == 401 || status == 403) return {ProviderErrorKind::Authentication, detail};
  if (status == 429) return {ProviderErrorKind::RateLimit, detail};
  if (status == 408) return {ProviderErrorKind::Timeout, detail};
  if (status >= 500) return {ProviderErrorKind::Transport, detail};
  return {ProviderErrorKind::Request, detail + ": " + res->body.substr(0, 200)};
}

Json post_json(const HttpEndpoint& ep, const std::string& api_key, const std::string& path, const Json& body) {
  const auto url = split_url(ep.base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(ep.timeout);
  client.set_read_timeout(ep.timeout);
  client.set_write_timeout(ep.timeout);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  auto res = client.Post(url.prefix + path, headers, body.dump(), "application/json");
  if (!res || res->status < 200 || res->status >= 300) throw classify(res);
  try {
    return Json::parse(res->body);
  } catch (const Json::parse_error& e) {
    throw ProviderError(ProviderErrorKind::MalformedResponse, e.what());
  }
}

}  // namespace

OpenAiChatProvider::OpenAiChatProvider(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), api_key_(resolve_credential(endpoint_.api_key_env)) {
  split_url(endpoint_.base_url);
}

ChatResponse OpenAiChatProvider::complete(const ChatRequest& request) {
  Json body{{"model", request.config.model_name},
            {"max_tokens", request.config.max_tokens},
            {"temperature", request.config.temperature}};
  Json messages = Json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  body["messages"] = std::move(messages);
  if (request.config.seed) body["seed"] = *request.config.seed;

  const auto doc = post_json(endpoint_, api_key_, endpoint_.chat_path, body);
  try {
    ChatResponse out;
    out.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    if (doc.contains("usage") && doc["usage"].is_object()) {
      out.usage = TokenUsage{doc["usage"].value("prompt_tokens", std::int64_t{0}),
                             doc["usage"].value("completion_tokens", std::int64_t{0})};
    }
    return out;
  } catch (const Json::exception& e) {
    throw ProviderError(ProviderErrorKind::MalformedResponse, std::string("chat response: ") + e.what());
  }
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), api_key_(resolve_credential(endpoint_.api_key_env)) {
  split_url(endpoint_.base_url);
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  Json body{{"model", endpoint_.model}, {"input", Json(std::vector<std::string>(texts.begin(), texts.end()))}};
  const auto doc = post_json(endpoint_, api_key_, endpoint_.embeddings_path, body);
  try {
    const auto& data = doc.at("data");
    std::vector<std::vector<double>> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t idx = data[i].value("index", i);
      if (idx >= out.size()) throw ProviderError(ProviderErrorKind::MalformedResponse, "embedding index out of range");
      out[idx] = data[i].at("embedding").get<std::vector<double>>();
    }
    return out;
  } catch (const Json::exception& e) {
    throw ProviderError(ProviderErrorKind::MalformedResponse, std::string("embedding response: ") + e.what());
  }
}

}  // namespace ideaeval::providers
