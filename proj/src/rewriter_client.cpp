#include "densesteer/rewriter_client.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "densesteer/errors.hpp"
#include "densesteer/prompts.hpp"
#include "httplib.h"

namespace densesteer {

void ExternalRewriterConfig::validate() const {
  if (base_url.empty()) throw ConfigError("external rewriter needs an endpoint (base URL)");
  if (model.empty()) throw ConfigError("external rewriter needs a model name");
  if (max_retries < 0 || backoff_initial_ms < 0 || backoff_factor < 1.0) {
    throw ConfigError("invalid retry schedule");
  }
  if (max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
}

ChatCompletionsClient::ChatCompletionsClient(ExternalRewriterConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  config_.validate();
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string ChatCompletionsClient::request_body(const std::string& user_prompt) const {
  const json body = {
      {"model", config_.model},
      {"messages", json::array({{{"role", "user"}, {"content", user_prompt}}})},
      {"temperature", 0},
  };
  return json_dump(body);
}

std::string ChatCompletionsClient::cache_key(const std::string& user_prompt) const {
  return sha256_hex(request_body(user_prompt));
}

std::size_t ChatCompletionsClient::network_calls() const {
  std::lock_guard lock(mu_);
  return network_calls_;
}

namespace {

std::string content_of(const std::string& response_body) {
  try {
    const json r = json::parse(response_body);
    const json& msg = r.at("choices").at(0).at("message");
    if (!msg.contains("content") || msg["content"].is_null()) return {};
    return msg["content"].get<std::string>();
  } catch (const json::exception& e) {
    throw NetworkError(std::string("malformed chat-completions response: ") + e.what());
  }
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& base_url) {
  const std::size_t scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + base_url);
  const std::size_t path_start = base_url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  e.path = prefix + "/chat/completions";
  return e;
}

}  // namespace

std::string ChatCompletionsClient::fetch(const std::string& body) {
  const char* credential = std::getenv(config_.credential_env.c_str());
  if (credential == nullptr || *credential == '\0') {
    throw ConfigError("credential environment variable " + config_.credential_env + " is not set");
  }

  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < config_.max_concurrency; });
    ++in_flight_;
  }
  struct Release {
    ChatCompletionsClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  const Endpoint ep = split_url(config_.base_url);
  httplib::Client cli(ep.origin);
  cli.set_connection_timeout(config_.timeout_seconds, 0);
  cli.set_read_timeout(config_.timeout_seconds, 0);
  cli.set_write_timeout(config_.timeout_seconds, 0);
  const httplib::Headers headers = {{"Authorization", std::string("Bearer ") + credential}};

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double ms = config_.backoff_initial_ms * std::pow(config_.backoff_factor, attempt - 1);
      sleeper_(std::chrono::milliseconds(static_cast<long long>(ms)));
    }
    {
      std::lock_guard lock(mu_);
      ++network_calls_;
    }
    const httplib::Result res = cli.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    last_error = "HTTP " + std::to_string(res->status);
    const bool transient = res->status == 429 || res->status >= 500;
    if (!transient) throw NetworkError("rewriter request rejected: " + last_error);
  }
  throw NetworkError("rewriter request failed after " + std::to_string(config_.max_retries + 1) +
                     " attempts: " + last_error);
}

std::string ChatCompletionsClient::complete(const std::string& user_prompt) {
  const std::string body = request_body(user_prompt);
  const std::filesystem::path cached = config_.cache_dir / (sha256_hex(body) + ".json");
  if (std::filesystem::exists(cached)) return content_of(read_file(cached));
  if (config_.offline) {
    throw CacheMiss("offline mode and no cached response for request " + sha256_hex(body));
  }
  const std::string response = fetch(body);
  // Parse before caching so a malformed reply is never replayed.
  std::string content = content_of(response);
  std::filesystem::create_directories(config_.cache_dir);
  write_file_atomic(cached, response);
  return content;
}

ReasoningTrace external_rewrite(ChatCompletionsClient& client, const std::string& question,
                                const ReasoningTrace& trace, const TokenizeFn& tokenize) {
  const std::string prompt = prompts::format_dense_rewrite(question, trace.solution);
  std::string content = client.complete(prompt);
  if (is_blank(content)) throw EmptyResponse("rewriter returned a blank response");
  return ReasoningTrace::make(question, std::move(content), tokenize);
}

}  // namespace densesteer
