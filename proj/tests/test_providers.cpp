#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "ideaeval/error.hpp"
#include "ideaeval/providers.hpp"
#include "ideaeval/vecmath.hpp"
#include "test_support.hpp"

using namespace ideaeval;
using namespace ideaeval::providers;
using testsupport::TempDir;

namespace {

GenerationConfig cfg(const std::string& model = "m") {
  GenerationConfig c;
  c.model_name = model;
  return c;
}

ClientOptions quiet_options(std::vector<std::chrono::milliseconds>* sleeps = nullptr) {
  ClientOptions o;
  o.sleep = [sleeps](std::chrono::milliseconds d) {
    if (sleeps) sleeps->push_back(d);
  };
  return o;
}

// Throws `failures` errors of `kind` before answering.
class FlakyProvider final : public ChatProvider {
 public:
  FlakyProvider(int failures, ProviderErrorKind kind) : failures_(failures), kind_(kind) {}
  std::string id() const override { return "flaky"; }
  ChatResponse complete(const ChatRequest& r) override {
    ++calls;
    if (calls <= failures_) throw ProviderError(kind_, "injected");
    return {"ok:" + r.user, std::nullopt};
  }
  std::atomic<int> calls{0};

 private:
  int failures_;
  ProviderErrorKind kind_;
};

// Local chat-completions endpoint whose first `failures` replies carry `status`.
struct FakeEndpoint {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::string last_auth;
  std::string last_body;

  FakeEndpoint(int failures, int status) {
    server.Post("/v1/chat/completions", [this, failures, status](const httplib::Request& req, httplib::Response& res) {
      const int n = ++hits;
      last_auth = req.get_header_value("Authorization");
      last_body = req.body;
      if (n <= failures) {
        res.status = status;
        res.set_content("{\"error\":\"nope\"}", "application/json");
        return;
      }
      res.set_content(R"({"choices":[{"message":{"content":"- idea one\n- idea two"}}],)"
                      R"("usage":{"prompt_tokens":11,"completion_tokens":7}})",
                      "application/json");
    });
    server.Post("/v1/embeddings", [this](const httplib::Request&, httplib::Response& res) {
      ++hits;
      res.set_content(R"({"data":[{"index":1,"embedding":[0,1]},{"index":0,"embedding":[1,0]}]})", "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeEndpoint() {
    server.stop();
    thread.join();
  }
  HttpEndpoint endpoint() const {
    HttpEndpoint ep;
    ep.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    ep.model = "emb";
    ep.timeout = std::chrono::seconds(5);
    return ep;
  }
};

}  // namespace

TEST(HashEmbedder, DeterministicUnitVectors) {
  HashEmbedder e(64, 0);
  const auto a = e.embed_one("hello world");
  const auto b = e.embed_one("hello world");
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 64u);
  EXPECT_NEAR(vecmath::norm(a), 1.0, 1e-12);
  EXPECT_NE(a, e.embed_one("hello world!"));
  EXPECT_NE(a, HashEmbedder(64, 1).embed_one("hello world"));
  EXPECT_EQ(e.id(), "hash-sha256-d64-s0");
  EXPECT_EQ(HashEmbedder(8, 3).embed_one("x").size(), 8u);
}

TEST(Embed, ValidatesBatch) {
  HashEmbedder e;
  EXPECT_THROW(embed(e, std::vector<std::string>{}), ValidationError);
  const std::vector<std::string> texts{"a", "b"};
  const auto vecs = embed(e, texts);
  ASSERT_EQ(vecs.size(), 2u);
  EXPECT_EQ(vecs[0].dimension(), 64u);
  EXPECT_EQ(vecs[0].text_hash, "ca978112ca1bbdcafac231b39a23dc4da786eff8147c4e72b9807785afee48bb");
}

TEST(Retry, BackoffIsExponentialAndCapped) {
  RetryPolicy p;
  EXPECT_EQ(p.backoff(0).count(), 250);
  EXPECT_EQ(p.backoff(1).count(), 500);
  EXPECT_EQ(p.backoff(2).count(), 1000);
  EXPECT_EQ(p.backoff(10).count(), 8000);
}

TEST(Retry, TransientFailuresRecover) {
  auto provider = std::make_shared<FlakyProvider>(2, ProviderErrorKind::RateLimit);
  std::vector<std::chrono::milliseconds> sleeps;
  ChatClient client(provider, quiet_options(&sleeps));
  EXPECT_EQ(client.chat("", "u", cfg()), "ok:u");
  EXPECT_EQ(provider->calls, 3);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(250), std::chrono::milliseconds(500)}));
  EXPECT_EQ(client.exchanges().back().attempts, 3);
}

TEST(Retry, ThreeFailuresSurfaceTheError) {
  auto provider = std::make_shared<FlakyProvider>(3, ProviderErrorKind::Transport);
  ChatClient client(provider, quiet_options());
  try {
    client.chat("", "u", cfg());
    FAIL() << "no error";
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.kind(), ProviderErrorKind::Transport);
  }
  EXPECT_EQ(provider->calls, 3);
}

TEST(Retry, AuthenticationIsNotRetried) {
  auto provider = std::make_shared<FlakyProvider>(5, ProviderErrorKind::Authentication);
  ChatClient client(provider, quiet_options());
  EXPECT_THROW(client.chat("", "u", cfg()), ProviderError);
  EXPECT_EQ(provider->calls, 1);
}

TEST(Cache, HitMakesNoProviderCall) {
  TempDir dir;
  auto provider = std::make_shared<FlakyProvider>(0, ProviderErrorKind::Transport);
  auto opts = quiet_options();
  opts.cache_dir = dir.path();
  {
    ChatClient client(provider, opts);
    EXPECT_EQ(client.chat("sys", "u", cfg()), "ok:u");
  }
  EXPECT_EQ(provider->calls, 1);
  ChatClient warm(provider, opts);
  EXPECT_EQ(warm.chat("sys", "u", cfg()), "ok:u");
  EXPECT_EQ(provider->calls, 1);
  EXPECT_TRUE(warm.exchanges().back().from_cache);
  // Any change in the request is a different key.
  warm.chat("sys", "u", cfg("other"));
  EXPECT_EQ(provider->calls, 2);
}

TEST(Cache, KeyCoversAllInputs) {
  const auto base = ResponseCache::key("p", cfg(), "s", "u");
  EXPECT_EQ(base.size(), 64u);
  EXPECT_EQ(base, ResponseCache::key("p", cfg(), "s", "u"));
  EXPECT_NE(base, ResponseCache::key("q", cfg(), "s", "u"));
  EXPECT_NE(base, ResponseCache::key("p", cfg(), "s2", "u"));
  EXPECT_NE(base, ResponseCache::key("p", cfg(), "s", "u2"));
  auto c = cfg();
  c.temperature = 0.5;
  EXPECT_NE(base, ResponseCache::key("p", c, "s", "u"));
  TempDir dir;
  ResponseCache cache(dir.path());
  cache.put(base, "resp\xC3\xA9");
  EXPECT_TRUE(std::filesystem::exists(dir.path() / base.substr(0, 2) / (base + ".txt")));
  EXPECT_EQ(cache.get(base), "resp\xC3\xA9");
  EXPECT_FALSE(cache.get(ResponseCache::key("z", cfg(), "s", "u")).has_value());
}

TEST(Client, InFlightBoundHolds) {
  std::atomic<int> current{0};
  std::atomic<int> peak{0};
  auto provider = std::make_shared<ScriptedChatProvider>([&](const ChatRequest&) {
    const int now = ++current;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --current;
    return std::string("x");
  });
  auto opts = quiet_options();
  opts.max_in_flight = 2;
  ChatClient client(provider, opts);
  parallel_for(16, 8, [&](std::size_t i) { client.chat("", std::to_string(i), cfg()); });
  EXPECT_LE(peak.load(), 2);
  EXPECT_EQ(provider->calls(), 16u);
  EXPECT_EQ(client.exchanges().size(), 16u);
}

TEST(Client, ExchangeLogIsJsonLines) {
  TempDir dir;
  auto opts = quiet_options();
  opts.exchange_log = dir / "log.jsonl";
  ChatClient client(std::make_shared<EchoChatProvider>(), opts);
  client.chat("s", "first", cfg());
  client.chat("s", "second", cfg());
  const auto log = io::read_file(dir / "log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
  const auto first = io::Json::parse(log.substr(0, log.find('\n')));
  EXPECT_EQ(first["user"], "first");
  EXPECT_EQ(first["response"], "first");
  EXPECT_EQ(first["provider"], "echo");
}

TEST(Client, InvalidConfigRejected) {
  ChatClient client(std::make_shared<EchoChatProvider>(), quiet_options());
  auto c = cfg();
  c.max_tokens = 0;
  EXPECT_THROW(client.chat("", "u", c), ValidationError);
  c = cfg();
  c.temperature = -1;
  EXPECT_THROW(client.chat("", "u", c), ValidationError);
}

TEST(Scripted, RulesMatchModelAndContent) {
  auto p = ScriptedChatProvider::from_rules(io::Json::parse(R"({
    "rules": [{"model": "a", "contains": "cat", "response": "A-cat"},
              {"contains": "cat", "response": "any-cat"}],
    "default": "fallback"})"));
  EXPECT_EQ(p->complete({"", "a cat", cfg("a")}).text, "A-cat");
  EXPECT_EQ(p->complete({"", "a cat", cfg("b")}).text, "any-cat");
  EXPECT_EQ(p->complete({"", "dog", cfg("b")}).text, "fallback");
  auto strict = ScriptedChatProvider::from_rules(io::Json::parse(R"({"rules": []})"));
  EXPECT_THROW(strict->complete({"", "dog", cfg()}), ProviderError);
}

TEST(Factory, OfflineForbidsNetworkKinds) {
  EXPECT_THROW(make_chat_provider({{"kind", "openai"}, {"base_url", "http://x"}}, true), ValidationError);
  EXPECT_THROW(make_embedding_provider({{"kind", "http"}, {"base_url", "http://x"}}, true), ValidationError);
  EXPECT_THROW(make_chat_provider({{"kind", "bogus"}}, false), ValidationError);
  EXPECT_EQ(make_embedding_provider({{"kind", "hash"}, {"dimension", 16}}, true)->id(), "hash-sha256-d16-s0");
}

TEST(Factory, MissingCredentialFailsAtConstruction) {
  ::unsetenv("IDEAEVAL_TEST_UNSET_KEY");
  EXPECT_THROW(
      make_chat_provider({{"kind", "openai"}, {"base_url", "http://x"}, {"api_key_env", "IDEAEVAL_TEST_UNSET_KEY"}},
                         false),
      ValidationError);
}

TEST(Http, ChatRoundTripWithCredential) {
  FakeEndpoint fake(0, 200);
  ::setenv("IDEAEVAL_TEST_KEY", "sekret", 1);
  auto ep = fake.endpoint();
  ep.api_key_env = "IDEAEVAL_TEST_KEY";
  OpenAiChatProvider provider(ep);
  auto c = cfg("gpt-x");
  c.seed = 5;
  const auto resp = provider.complete({"sys", "user", c});
  EXPECT_EQ(resp.text, "- idea one\n- idea two");
  ASSERT_TRUE(resp.usage);
  EXPECT_EQ(resp.usage->completion_tokens, 7);
  EXPECT_EQ(fake.last_auth, "Bearer sekret");
  const auto body = io::Json::parse(fake.last_body);
  EXPECT_EQ(body["model"], "gpt-x");
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "user");
  EXPECT_EQ(body["seed"], 5);
}

TEST(Http, RateLimitRetriedThenSucceeds) {
  FakeEndpoint fake(2, 429);
  ChatClient client(std::make_shared<OpenAiChatProvider>(fake.endpoint()), quiet_options());
  EXPECT_EQ(client.chat("", "u", cfg()), "- idea one\n- idea two");
  EXPECT_EQ(fake.hits.load(), 3);
}

TEST(Http, ThreeServerErrorsExhaustRetries) {
  FakeEndpoint fake(3, 503);
  ChatClient client(std::make_shared<OpenAiChatProvider>(fake.endpoint()), quiet_options());
  try {
    client.chat("", "u", cfg());
    FAIL() << "no error";
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.kind(), ProviderErrorKind::Transport);
  }
  EXPECT_EQ(fake.hits.load(), 3);
}

TEST(Http, AuthErrorSurfacesImmediately) {
  FakeEndpoint fake(10, 401);
  ChatClient client(std::make_shared<OpenAiChatProvider>(fake.endpoint()), quiet_options());
  try {
    client.chat("", "u", cfg());
    FAIL() << "no error";
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.kind(), ProviderErrorKind::Authentication);
  }
  EXPECT_EQ(fake.hits.load(), 1);
}

TEST(Http, ConnectionRefusedIsTransport) {
  int port = 0;
  {
    FakeEndpoint fake(0, 200);
    port = fake.port;
  }
  HttpEndpoint ep;
  ep.base_url = "http://127.0.0.1:" + std::to_string(port);
  ep.timeout = std::chrono::seconds(2);
  OpenAiChatProvider provider(ep);
  try {
    provider.complete({"", "u", cfg()});
    FAIL() << "no error";
  } catch (const ProviderError& e) {
    EXPECT_TRUE(e.retryable());
  }
}

TEST(Http, EmbeddingsOrderedByIndex) {
  FakeEndpoint fake(0, 200);
  HttpEmbeddingProvider provider(fake.endpoint());
  const std::vector<std::string> texts{"a", "b"};
  const auto v = provider.embed_batch(texts);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0], (std::vector<double>{1, 0}));
  EXPECT_EQ(v[1], (std::vector<double>{0, 1}));
}

TEST(Concurrency, ParallelForRethrowsLowestFailingIndex) {
  try {
    parallel_for(20, 4, [](std::size_t i) {
      if (i == 7 || i == 13) throw std::runtime_error("fail " + std::to_string(i));
    });
    FAIL() << "no error";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "fail 7");
  }
}
