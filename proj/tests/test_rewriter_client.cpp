#include "densesteer/rewriter_client.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>
#include <vector>

#include "densesteer/errors.hpp"
#include "densesteer/pairgen.hpp"
#include "densesteer/prompts.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/gen.hpp"
#include "support/mock_models.hpp"
#include "support/oracles.hpp"
#include "support/stub_server.hpp"

using namespace densesteer;
using testing_support::StubChatServer;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("ds_rw_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

struct Credential {
  Credential() { ::setenv("DS_TEST_KEY", "sk-test", 1); }
};
const Credential kCredential;

ExternalRewriterConfig config_for(const StubChatServer& server, const TempDir& cache) {
  ExternalRewriterConfig c;
  c.base_url = server.base_url();
  c.model = "stub-model";
  c.credential_env = "DS_TEST_KEY";
  c.cache_dir = cache.path;
  c.timeout_seconds = 5;
  return c;
}

std::string collapse(const std::string& s) {
  std::string out;
  bool space = false;
  for (char ch : s) {
    if (ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r') {
      space = true;
    } else {
      if (space && !out.empty()) out.push_back(' ');
      space = false;
      out.push_back(ch);
    }
  }
  return out;
}

std::vector<long long> as_ms(const std::vector<std::chrono::milliseconds>& v) {
  std::vector<long long> out;
  for (auto d : v) out.push_back(d.count());
  return out;
}

}  // namespace

TEST_CASE("the request carries the verbatim rewrite prompt and the reply is cached") {
  std::string seen;
  StubChatServer server([&](const std::string& user) {
    seen = user;
    return std::make_pair(200, std::string("A. B.\n\n\\boxed{3}"));
  });
  TempDir cache("cache");
  const ReasoningTrace neg = ReasoningTrace::make("Q?", "A.\n\nB.\n\n\\boxed{3}");
  ChatCompletionsClient client(config_for(server, cache));
  const ReasoningTrace pos = external_rewrite(client, "Q?", neg);
  CHECK(seen == prompts::format_dense_rewrite("Q?", neg.solution));
  CHECK(pos.solution == "A. B.\n\n\\boxed{3}");
  CHECK(pos.n_steps() == 2);
  CHECK(client.network_calls() == 1);
  const auto cached = cache.path / (client.cache_key(seen) + ".json");
  REQUIRE(std::filesystem::exists(cached));
  const std::string stored = read_file(cached);

  // A fresh client on the same cache never touches the network.
  ChatCompletionsClient again(config_for(server, cache));
  CHECK(external_rewrite(again, "Q?", neg).solution == pos.solution);
  CHECK(again.network_calls() == 0);
  CHECK(server.requests() == 1);
  CHECK(read_file(cached) == stored);
}

TEST_CASE("the request body is keyed deterministically") {
  StubChatServer server([](const std::string&) { return std::make_pair(200, std::string("x")); });
  TempDir cache("key");
  ChatCompletionsClient client(config_for(server, cache));
  CHECK(client.cache_key("p") == client.cache_key("p"));
  CHECK(client.cache_key("p") != client.cache_key("q"));
  CHECK(client.cache_key("p") == sha256_hex(client.request_body("p")));
  const json body = json::parse(client.request_body("p"));
  CHECK(body["model"] == "stub-model");
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == "p");
  CHECK(body["temperature"] == 0);
}

TEST_CASE("a blank reply is an EmptyResponse") {
  StubChatServer server([](const std::string&) { return std::make_pair(200, std::string(" \n\t ")); });
  TempDir cache("blank");
  ChatCompletionsClient client(config_for(server, cache));
  CHECK_THROWS_AS(external_rewrite(client, "q", ReasoningTrace::make("q", "a\n\nb")), EmptyResponse);
}

TEST_CASE("transient failures are retried on the documented schedule") {
  std::atomic<int> calls{0};
  StubChatServer server([&](const std::string&) {
    return ++calls <= 2 ? std::make_pair(503, std::string()) : std::make_pair(200, std::string("ok"));
  });
  TempDir cache("retry");
  std::vector<std::chrono::milliseconds> sleeps;
  ExternalRewriterConfig cfg = config_for(server, cache);
  cfg.backoff_initial_ms = 100;
  cfg.backoff_factor = 3.0;
  ChatCompletionsClient client(cfg, [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  CHECK(client.complete("hello") == "ok");
  CHECK(as_ms(sleeps) == std::vector<long long>{100, 300});
  CHECK(client.network_calls() == 3);
}

TEST_CASE("exhausted retries and rejected requests raise NetworkError") {
  StubChatServer busy([](const std::string&) { return std::make_pair(429, std::string()); });
  TempDir cache("exhaust");
  std::vector<std::chrono::milliseconds> sleeps;
  ExternalRewriterConfig cfg = config_for(busy, cache);
  cfg.max_retries = 3;
  ChatCompletionsClient client(cfg, [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  CHECK_THROWS_AS(client.complete("x"), NetworkError);
  CHECK(as_ms(sleeps) == std::vector<long long>{500, 1000, 2000});
  CHECK(busy.requests() == 4);
  CHECK(std::filesystem::is_empty(cache.path));

  StubChatServer reject([](const std::string&) { return std::make_pair(400, std::string()); });
  sleeps.clear();
  ChatCompletionsClient c2(config_for(reject, cache), [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  CHECK_THROWS_AS(c2.complete("x"), NetworkError);
  CHECK(sleeps.empty());
  CHECK(reject.requests() == 1);

  StubChatServer gone([](const std::string&) { return std::make_pair(200, std::string("x")); });
  ExternalRewriterConfig down = config_for(gone, cache);
  gone.stop();
  down.max_retries = 1;
  down.timeout_seconds = 1;
  ChatCompletionsClient c3(down, [](std::chrono::milliseconds) {});
  CHECK_THROWS_AS(c3.complete("x"), NetworkError);
}

TEST_CASE("offline mode serves only the cache") {
  StubChatServer server([](const std::string&) { return std::make_pair(200, std::string("fresh")); });
  TempDir cache("offline");
  ExternalRewriterConfig cfg = config_for(server, cache);
  cfg.offline = true;
  ChatCompletionsClient offline(cfg);
  CHECK_THROWS_AS(offline.complete("p"), CacheMiss);
  CHECK(server.requests() == 0);

  cfg.offline = false;
  ChatCompletionsClient online(cfg);
  CHECK(online.complete("p") == "fresh");
  server.stop();
  CHECK(offline.complete("p") == "fresh");
}

TEST_CASE("configuration errors") {
  StubChatServer server([](const std::string&) { return std::make_pair(200, std::string("x")); });
  TempDir cache("config");
  ExternalRewriterConfig cfg = config_for(server, cache);
  cfg.credential_env = "DS_TEST_KEY_THAT_IS_NOT_SET";
  ChatCompletionsClient no_key(cfg);
  CHECK_THROWS_AS(no_key.complete("p"), ConfigError);
  CHECK(server.requests() == 0);

  ExternalRewriterConfig bad = config_for(server, cache);
  bad.base_url.clear();
  CHECK_THROWS_AS(ChatCompletionsClient{bad}, ConfigError);
  bad = config_for(server, cache);
  bad.model.clear();
  CHECK_THROWS_AS(ChatCompletionsClient{bad}, ConfigError);
  bad = config_for(server, cache);
  bad.max_concurrency = 0;
  CHECK_THROWS_AS(ChatCompletionsClient{bad}, ConfigError);
  bad = config_for(server, cache);
  bad.base_url = "127.0.0.1/v1";
  ChatCompletionsClient no_scheme(bad);
  CHECK_THROWS_AS(no_scheme.complete("p"), ConfigError);
}

TEST_CASE("concurrent requests respect the cap") {
  std::atomic<int> active{0}, peak{0};
  StubChatServer server([&](const std::string& user) {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --active;
    return std::make_pair(200, user);
  });
  TempDir cache("cap");
  ExternalRewriterConfig cfg = config_for(server, cache);
  cfg.max_concurrency = 2;
  ChatCompletionsClient client(cfg);
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&client, i] { CHECK(client.complete(std::to_string(i)) == std::to_string(i)); });
  }
  for (auto& t : threads) t.join();
  CHECK(peak.load() <= 2);
  CHECK(server.requests() == 6);
}

TEST_CASE("external build_pairs against a stub that collapses whitespace") {
  StubChatServer server([](const std::string& user) {
    return std::make_pair(200, collapse(testing_support::original_from_prompt(user)));
  });
  TempDir cache("pairs");
  const testing_support::ScriptedModel model([](const std::string& prompt, const InjectionHook*) {
    gen::Rng rng(oracle::fnv1a(prompt));
    return gen::math_trace(rng).solution;
  });
  RewriterConfig rc;
  rc.mode = RewriterMode::kExternal;
  rc.external = config_for(server, cache);
  ChatCompletionsClient client(rc.external);
  BuildPairsOptions opts;
  opts.client = &client;
  opts.generation.workers = 2;
  std::vector<EvalItem> qs(fixtures::gsm8k_small().begin(), fixtures::gsm8k_small().begin() + 8);
  const PairSet set = build_pairs(model, qs, rc, 8, opts);
  REQUIRE(set.pairs.size() == 8);
  for (const auto& p : set.pairs) {
    CHECK(p.rewriter_tag == "external");
    CHECK(p.positive.solution == collapse(p.negative.solution));
    CHECK(p.positive.n_steps() == 1);
  }
  CHECK(server.requests() == 8);

  // Replaying offline against the cache reproduces the same pairs.
  rc.external.offline = true;
  ChatCompletionsClient replay(rc.external);
  opts.client = &replay;
  server.stop();
  const PairSet again = build_pairs(model, qs, rc, 8, opts);
  REQUIRE(again.pairs.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(again.pairs[i].positive.solution == set.pairs[i].positive.solution);
  CHECK(replay.network_calls() == 0);

  RewriterConfig missing = rc;
  BuildPairsOptions no_client;
  CHECK_THROWS_AS(build_pairs(model, qs, missing, 1, no_client), ConfigError);
}
