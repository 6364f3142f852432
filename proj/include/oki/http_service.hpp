#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oki/embedding.hpp"
#include "oki/util.hpp"

namespace oki {

struct ChatMessage {
  std::string role;
  std::string content;
};

// Shared settings for the chat-completion and embedding service clients.
// The API key is read from the environment, never from config files.
struct ServiceConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OKI_API_KEY";
  std::size_t max_retries = 3;      // attempts beyond the first
  int initial_backoff_ms = 250;
  double backoff_factor = 2.0;
  int timeout_seconds = 120;
  std::size_t max_concurrency = 4;
  std::optional<double> temperature;  // unset -> service default
  std::size_t embedding_dimension = 0;  // required for RemoteEncoder
};

// POST {base_url}/chat/completions with {"model", "messages":[{role,content}]}
// and a bearer token; retries transient failures (connect errors, 429, 5xx)
// with exponential backoff. Safe for concurrent use up to max_concurrency.
class ChatCompletionClient {
 public:
  explicit ChatCompletionClient(ServiceConfig config);
  ~ChatCompletionClient();

  // first choice's message content; ProviderError once retries are exhausted
  std::string complete(const std::vector<ChatMessage>& messages);

  const ServiceConfig& config() const { return config_; }
  std::size_t http_attempts() const { return http_attempts_.load(); }

 private:
  ServiceConfig config_;
  std::atomic<std::size_t> http_attempts_{0};
  struct Gate;
  std::unique_ptr<Gate> gate_;
};

// POST {base_url}/embeddings with {"model", "input":[texts]}
class EmbeddingServiceClient {
 public:
  explicit EmbeddingServiceClient(ServiceConfig config);
  ~EmbeddingServiceClient();

  std::vector<Vec> embed(const std::vector<std::string>& texts);
  const ServiceConfig& config() const { return config_; }

 private:
  ServiceConfig config_;
  struct Gate;
  std::unique_ptr<Gate> gate_;
};

// Encoder facade over the embedding service; dimension comes from the config
// and every response is checked against it.
class RemoteEncoder : public Encoder {
 public:
  explicit RemoteEncoder(ServiceConfig config);

  std::size_t dimension() const override;
  Vec encode(const std::string& text) const override;
  std::string name() const override;

 private:
  mutable EmbeddingServiceClient client_;
};

}  // namespace oki
