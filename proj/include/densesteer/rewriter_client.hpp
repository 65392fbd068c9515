#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>

#include "densesteer/io.hpp"
#include "densesteer/trace.hpp"

namespace densesteer {

struct ExternalRewriterConfig {
  // OpenAI-compatible base URL, e.g. "https://api.example.com/v1"; requests go
  // to <base_url>/chat/completions.
  std::string base_url;
  std::string model;
  std::string credential_env = "OPENAI_API_KEY";
  std::filesystem::path cache_dir = "rewrite-cache";
  // Serve only from the cache; a miss throws CacheMiss.
  bool offline = false;
  // Retry schedule for transient failures (connection errors, 429, 5xx):
  // attempt k (k >= 1) is preceded by a sleep of
  // backoff_initial_ms * backoff_factor^(k-1).
  int max_retries = 4;
  int backoff_initial_ms = 500;
  double backoff_factor = 2.0;
  int timeout_seconds = 120;
  int max_concurrency = 4;

  // Throws ConfigError when base_url or model is missing.
  void validate() const;
};

// Chat-completions client with a response cache keyed by the SHA-256 of the
// request body. Cached bodies are stored verbatim as <cache_dir>/<key>.json.
class ChatCompletionsClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit ChatCompletionsClient(ExternalRewriterConfig config, Sleeper sleeper = {});

  // Assistant message content for a single user message.
  // Throws NetworkError, CacheMiss, ConfigError (missing credential).
  std::string complete(const std::string& user_prompt);

  std::string request_body(const std::string& user_prompt) const;
  std::string cache_key(const std::string& user_prompt) const;

  // Requests that actually hit the network since construction.
  std::size_t network_calls() const;

  const ExternalRewriterConfig& config() const { return config_; }

 private:
  std::string fetch(const std::string& body);

  ExternalRewriterConfig config_;
  Sleeper sleeper_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  std::size_t network_calls_ = 0;
};

// Sends the dense-rewriting prompt for (question, trace) and returns the
// rewrite as a trace. Throws EmptyResponse for a blank reply.
ReasoningTrace external_rewrite(ChatCompletionsClient& client, const std::string& question,
                                const ReasoningTrace& trace,
                                const TokenizeFn& tokenize = ByteTokenizer::tokenize);

}  // namespace densesteer
