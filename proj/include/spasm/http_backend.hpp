#pragma once

// OpenAI-compatible HTTP backend (chat completions + embeddings).
//
// Base URL and key come from SPASM_API_BASE / SPASM_API_KEY unless given
// explicitly. Transport errors, 429 and 5xx responses are retried with
// exponential backoff; other 4xx responses fail immediately.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>

#include "spasm/backend.hpp"

namespace spasm {

struct HttpEndpoint {
  std::string scheme_host_port; // e.g. "https://api.openai.com"
  std::string path_prefix;      // e.g. "/v1"
};

inline HttpEndpoint parse_base_url(std::string_view base) {
  const auto scheme_end = base.find("://");
  if (scheme_end == std::string_view::npos)
    throw ConfigError("API base URL must include a scheme: '" + std::string(base) + "'");
  const auto path_start = base.find('/', scheme_end + 3);
  HttpEndpoint ep;
  ep.scheme_host_port = std::string(base.substr(0, path_start));
  if (path_start != std::string_view::npos) {
    ep.path_prefix = std::string(base.substr(path_start));
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  }
  return ep;
}

inline std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

struct HttpBackendOptions {
  std::string api_base = env_or("SPASM_API_BASE", "https://api.openai.com/v1");
  std::string api_key = env_or("SPASM_API_KEY", "");
  RetryPolicy retry;
  double rate_per_second = 0; // 0 disables the shared rate limiter
  double burst = 1;
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
};

// Request body for /chat/completions. Integral extra_decoding values (seed,
// n, ...) are sent as integers.
inline json chat_request_body(const GenerationConfig& config, std::span<const ChatMessage> messages) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json body{{"model", config.model_id},
            {"messages", std::move(msgs)},
            {"temperature", config.temperature},
            {"max_tokens", config.max_output_tokens}};
  for (const auto& [k, v] : config.extra_decoding) {
    if (v == std::floor(v) && std::fabs(v) < 9.0e15) body[k] = static_cast<long long>(v);
    else body[k] = v;
  }
  return body;
}

inline std::string parse_chat_response(const std::string& body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw BackendUnavailable("chat response is not JSON");
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("unexpected chat response shape: ") + e.what());
  }
}

// Vectors are returned in input order regardless of the order of `data`.
inline std::vector<EmbeddingVector> parse_embedding_response(const std::string& body,
                                                             std::size_t expected,
                                                             const std::string& model_id) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw BackendUnavailable("embedding response is not JSON");
  std::vector<EmbeddingVector> out(expected);
  std::vector<bool> seen(expected, false);
  try {
    for (const auto& item : j.at("data")) {
      const auto idx = item.at("index").get<std::size_t>();
      if (idx >= expected || seen[idx])
        throw BackendUnavailable("embedding response has bad index " + std::to_string(idx));
      seen[idx] = true;
      out[idx] = {item.at("embedding").get<std::vector<double>>(), model_id};
    }
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("unexpected embedding response shape: ") + e.what());
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw BackendUnavailable("embedding response is missing vectors");
  return out;
}

class HttpBackend : public ChatBackend, public EmbeddingBackend {
public:
  explicit HttpBackend(HttpBackendOptions opts = {})
      : opts_(std::move(opts)), endpoint_(parse_base_url(opts_.api_base)),
        bucket_(opts_.rate_per_second, opts_.burst) {}

  std::string complete(const GenerationConfig& config,
                       std::span<const ChatMessage> messages) override {
    const auto body = chat_request_body(config, messages).dump();
    return parse_chat_response(post("/chat/completions", body));
  }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts,
                                           const std::string& model_id) override {
    const json body{{"model", model_id}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    return parse_embedding_response(post("/embeddings", body.dump()), texts.size(), model_id);
  }

  std::size_t requests_sent() const noexcept { return requests_.load(); }

  // Overridable so tests need not wait out real backoff.
  std::function<void(std::chrono::milliseconds)> sleeper = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };

private:
  std::string post(const std::string& route, const std::string& body) {
    const std::string path = endpoint_.path_prefix + route;
    return with_retries(
        opts_.retry,
        [&]() -> std::string {
          bucket_.acquire();
          ++requests_;
          httplib::Client client(endpoint_.scheme_host_port);
          client.set_connection_timeout(opts_.connect_timeout_s, 0);
          client.set_read_timeout(opts_.read_timeout_s, 0);
          httplib::Headers headers;
          if (!opts_.api_key.empty()) headers.emplace("Authorization", "Bearer " + opts_.api_key);
          auto res = client.Post(path, headers, body, "application/json");
          if (!res) throw RetryableError("transport error: " + httplib::to_string(res.error()));
          if (res->status == 429 || res->status >= 500)
            throw RetryableError("HTTP " + std::to_string(res->status) + " from " + path);
          if (res->status < 200 || res->status >= 300)
            throw BackendUnavailable("HTTP " + std::to_string(res->status) + " from " + path + ": " +
                                     res->body.substr(0, 300));
          return res->body;
        },
        sleeper);
  }

  HttpBackendOptions opts_;
  HttpEndpoint endpoint_;
  TokenBucket bucket_;
  std::atomic<std::size_t> requests_{0};
};

} // namespace spasm
