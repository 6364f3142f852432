#include "oki/http_service.hpp"

#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace oki {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix, possibly empty
};

SplitUrl split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("base_url must include a scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

std::string api_key_from_env(const std::string& env_name) {
  const char* v = std::getenv(env_name.c_str());
  return v ? std::string(v) : std::string();
}

bool retryable_status(int status) {
  return status == 429 || status >= 500;
}

// One request; throws ProviderError on failure and marks whether retrying
// could help.
struct AttemptFailure {
  std::string message;
  bool retryable = false;
};

json post_json_once(const ServiceConfig& config, const std::string& path, const json& body,
                    AttemptFailure* failure) {
  SplitUrl url = split_base_url(config.base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(config.timeout_seconds, 0);
  client.set_read_timeout(config.timeout_seconds, 0);
  client.set_write_timeout(config.timeout_seconds, 0);

  httplib::Headers headers;
  std::string key = api_key_from_env(config.api_key_env);
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

  auto res = client.Post(url.prefix + path, headers, body.dump(), "application/json");
  if (!res) {
    *failure = {"connection failed: " + httplib::to_string(res.error()), true};
    return json();
  }
  if (res->status != 200) {
    *failure = {"http status " + std::to_string(res->status) + ": " + res->body,
                retryable_status(res->status)};
    return json();
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    *failure = {std::string("invalid JSON response: ") + e.what(), false};
    return json();
  }
}

json post_json_with_retries(const ServiceConfig& config, const std::string& path,
                            const json& body, std::atomic<std::size_t>* attempt_counter) {
  AttemptFailure failure;
  double backoff_ms = static_cast<double>(config.initial_backoff_ms);
  for (std::size_t attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<int>(backoff_ms)));
      backoff_ms *= config.backoff_factor;
    }
    if (attempt_counter) attempt_counter->fetch_add(1);
    failure = AttemptFailure{};
    json result = post_json_once(config, path, body, &failure);
    if (failure.message.empty()) return result;
    if (!failure.retryable) break;
  }
  throw ProviderError("request to " + path + " failed: " + failure.message);
}

}  // namespace

// Bounds in-flight requests.
struct ChatCompletionClient::Gate {
  explicit Gate(std::size_t n) : sem(static_cast<std::ptrdiff_t>(n == 0 ? 1 : n)) {}
  std::counting_semaphore<> sem;
};

struct EmbeddingServiceClient::Gate {
  explicit Gate(std::size_t n) : sem(static_cast<std::ptrdiff_t>(n == 0 ? 1 : n)) {}
  std::counting_semaphore<> sem;
};

ChatCompletionClient::ChatCompletionClient(ServiceConfig config)
    : config_(std::move(config)), gate_(std::make_unique<Gate>(config_.max_concurrency)) {}

ChatCompletionClient::~ChatCompletionClient() = default;

std::string ChatCompletionClient::complete(const std::vector<ChatMessage>& messages) {
  json body;
  body["model"] = config_.model;
  body["messages"] = json::array();
  for (const ChatMessage& m : messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  if (config_.temperature) body["temperature"] = *config_.temperature;

  gate_->sem.acquire();
  json response;
  try {
    response = post_json_with_retries(config_, "/chat/completions", body, &http_attempts_);
  } catch (...) {
    gate_->sem.release();
    throw;
  }
  gate_->sem.release();

  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("unexpected chat completion response shape: ") + e.what());
  }
}

EmbeddingServiceClient::EmbeddingServiceClient(ServiceConfig config)
    : config_(std::move(config)), gate_(std::make_unique<Gate>(config_.max_concurrency)) {}

EmbeddingServiceClient::~EmbeddingServiceClient() = default;

std::vector<Vec> EmbeddingServiceClient::embed(const std::vector<std::string>& texts) {
  json body;
  body["model"] = config_.model;
  body["input"] = texts;

  gate_->sem.acquire();
  json response;
  try {
    response = post_json_with_retries(config_, "/embeddings", body, nullptr);
  } catch (...) {
    gate_->sem.release();
    throw;
  }
  gate_->sem.release();

  try {
    std::vector<Vec> out(texts.size());
    for (const json& item : response.at("data")) {
      std::size_t index = item.at("index").get<std::size_t>();
      if (index >= out.size()) throw ProviderError("embedding index out of range");
      out[index] = item.at("embedding").get<Vec>();
    }
    return out;
  } catch (const json::exception& e) {
    throw ProviderError(std::string("unexpected embedding response shape: ") + e.what());
  }
}

RemoteEncoder::RemoteEncoder(ServiceConfig config) : client_(std::move(config)) {
  if (client_.config().embedding_dimension == 0) {
    throw ConfigError("remote encoder requires embedding_dimension in the service config");
  }
}

std::size_t RemoteEncoder::dimension() const { return client_.config().embedding_dimension; }

Vec RemoteEncoder::encode(const std::string& text) const {
  if (text.empty()) throw DomainError("cannot encode empty text");
  std::vector<Vec> vs = client_.embed({text});
  if (vs.size() != 1 || vs[0].size() != dimension()) {
    throw ShapeError("embedding service returned dimension " +
                     std::to_string(vs.empty() ? 0 : vs[0].size()) + ", expected " +
                     std::to_string(dimension()));
  }
  return vs[0];
}

std::string RemoteEncoder::name() const { return "remote:" + client_.config().model; }

}  // namespace oki
