#pragma once

// Uniform access to chat-completion and embedding backends.
//
// Everything that talks to a model goes through ChatBackend / EmbeddingBackend.
// Two implementations ship with the library: the OpenAI-compatible HTTP client
// in http_backend.hpp and the deterministic offline mock in mock_backend.hpp.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "spasm/error.hpp"
#include "spasm/hash.hpp"

namespace spasm {

using json = nlohmann::json;

// Backbone identity, decoding parameters and the instruction context of one
// agent role.
struct GenerationConfig {
  std::string model_id;
  double temperature = 0.7;
  int max_output_tokens = 512;
  std::string system_prompt;
  std::map<std::string, double> extra_decoding;

  void validate() const {
    if (model_id.empty())
      throw std::invalid_argument("GenerationConfig: model_id must be nonempty");
    if (!(temperature >= 0.0))
      throw std::invalid_argument("GenerationConfig: temperature must be >= 0");
    if (max_output_tokens <= 0)
      throw std::invalid_argument("GenerationConfig: max_output_tokens must be positive");
  }

  bool operator==(const GenerationConfig&) const = default;
};

inline void to_json(json& j, const GenerationConfig& c) {
  j = json{{"model_id", c.model_id},
           {"temperature", c.temperature},
           {"max_output_tokens", c.max_output_tokens},
           {"system_prompt", c.system_prompt},
           {"extra_decoding", c.extra_decoding}};
}

inline void from_json(const json& j, GenerationConfig& c) {
  c.model_id = j.value("model_id", c.model_id);
  c.temperature = j.value("temperature", c.temperature);
  c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
  c.system_prompt = j.value("system_prompt", c.system_prompt);
  if (j.contains("extra_decoding"))
    c.extra_decoding = j.at("extra_decoding").get<std::map<std::string, double>>();
}

enum class MessageRole { system, user, assistant };

inline std::string_view to_string(MessageRole r) {
  switch (r) {
  case MessageRole::system: return "system";
  case MessageRole::user: return "user";
  case MessageRole::assistant: return "assistant";
  }
  return "?";
}

struct ChatMessage {
  MessageRole role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;

  std::size_t dimension() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

// Stable fingerprint of a request. The mock backend keys on this and so do
// scripted-response tables in tests.
inline std::uint64_t request_hash(const GenerationConfig& config,
                                  std::span<const ChatMessage> messages) {
  Fnv1a h;
  h.field(config.model_id);
  h.field(std::to_string(config.temperature));
  h.field(static_cast<std::uint64_t>(config.max_output_tokens));
  h.field(config.system_prompt);
  for (const auto& [k, v] : config.extra_decoding) {
    h.field(k);
    h.field(std::to_string(v));
  }
  h.field(static_cast<std::uint64_t>(messages.size()));
  for (const auto& msg : messages) {
    h.field(to_string(msg.role));
    h.field(msg.content);
  }
  return h.digest();
}

// Hash of the message sequence alone, independent of the generation config.
inline std::uint64_t messages_hash(std::span<const ChatMessage> messages) {
  Fnv1a m;
  for (const auto& msg : messages) {
    m.field(to_string(msg.role));
    m.field(msg.content);
  }
  return m.digest();
}

class ChatBackend {
public:
  virtual ~ChatBackend() = default;
  // Raw completion. Implementations must be callable from several threads.
  virtual std::string complete(const GenerationConfig& config,
                               std::span<const ChatMessage> messages) = 0;
};

class EmbeddingBackend {
public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts,
                                                   const std::string& model_id) = 0;
};

namespace detail {
inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}
} // namespace detail

inline std::string chat_complete(ChatBackend& backend, const GenerationConfig& config,
                                 std::span<const ChatMessage> messages) {
  config.validate();
  if (messages.empty())
    throw std::invalid_argument("chat_complete: messages must be nonempty");
  if (!config.system_prompt.empty() && messages.front().role != MessageRole::system)
    throw std::invalid_argument("chat_complete: first message must be the system prompt");
  for (const auto& m : messages)
    if (m.role != MessageRole::system && m.content.empty())
      throw std::invalid_argument("chat_complete: empty non-system message");

  std::string out = backend.complete(config, messages);
  if (detail::is_blank(out))
    throw EmptyCompletion("backend '" + config.model_id + "' returned an empty completion");
  return out;
}

inline std::vector<EmbeddingVector> embed(EmbeddingBackend& backend,
                                          std::span<const std::string> texts,
                                          const std::string& model_id) {
  for (const auto& t : texts)
    if (t.empty()) throw std::invalid_argument("embed: texts must be nonempty");
  if (texts.empty()) return {};
  auto out = backend.embed_batch(texts, model_id);
  if (out.size() != texts.size())
    throw EmbeddingDimensionMismatch("embed: backend returned " + std::to_string(out.size()) +
                                     " vectors for " + std::to_string(texts.size()) + " texts");
  const auto dim = out.front().dimension();
  if (dim == 0) throw EmbeddingDimensionMismatch("embed: zero-dimensional embedding");
  for (const auto& v : out)
    if (v.dimension() != dim)
      throw EmbeddingDimensionMismatch("embed: mixed dimensions " + std::to_string(dim) +
                                       " and " + std::to_string(v.dimension()));
  return out;
}

inline EmbeddingVector embed_one(EmbeddingBackend& backend, const std::string& text,
                                 const std::string& model_id) {
  std::string t = text;
  return embed(backend, std::span<const std::string>(&t, 1), model_id).front();
}

// Finds the first balanced {...} substring that parses as a JSON object.
// Models are told to return bare JSON but often wrap it in prose or fences.
inline std::optional<json> extract_first_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        auto parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
        break;
      }
    }
  }
  return std::nullopt;
}

// Completion parsed as a key/value verdict. `required_fields` must all be
// present; anything else is a MalformedVerdict and the caller picks the
// fallback.
inline json chat_complete_structured(ChatBackend& backend, const GenerationConfig& config,
                                     std::span<const ChatMessage> messages,
                                     std::span<const std::string> required_fields) {
  const std::string text = chat_complete(backend, config, messages);
  auto obj = extract_first_object(text);
  if (!obj) throw MalformedVerdict("no JSON object in completion: " + text.substr(0, 200));
  for (const auto& f : required_fields)
    if (!obj->contains(f)) throw MalformedVerdict("verdict lacks field '" + f + "'");
  return *obj;
}

inline json chat_complete_structured(ChatBackend& backend, const GenerationConfig& config,
                                     std::span<const ChatMessage> messages,
                                     std::initializer_list<std::string> required_fields) {
  std::vector<std::string> f(required_fields);
  return chat_complete_structured(backend, config, messages, f);
}

// Structured completion with a bounded number of re-asks on MalformedVerdict.
inline json structured_with_retry(ChatBackend& backend, const GenerationConfig& config,
                                  std::span<const ChatMessage> messages,
                                  std::initializer_list<std::string> required_fields,
                                  int attempts = 2) {
  std::vector<std::string> f(required_fields);
  for (int i = 1;; ++i) {
    try {
      return chat_complete_structured(backend, config, messages, f);
    } catch (const MalformedVerdict&) {
      if (i >= attempts) throw;
    }
  }
}

// Interprets a verdict field as a boolean, accepting the string spellings
// models sometimes emit.
inline bool verdict_bool(const json& verdict, const std::string& field) {
  const auto& v = verdict.at(field);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number()) return v.get<double>() != 0.0;
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
  }
  throw MalformedVerdict("field '" + field + "' is not boolean: " + v.dump());
}

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};

  std::chrono::milliseconds backoff_after(int attempt) const {
    double ms = static_cast<double>(initial_backoff.count());
    for (int i = 1; i < attempt; ++i) ms *= multiplier;
    ms = std::min(ms, static_cast<double>(max_backoff.count()));
    return std::chrono::milliseconds(static_cast<long long>(ms));
  }
};

// Thrown by transports for failures worth another attempt.
class RetryableError : public Error {
public:
  using Error::Error;
};

template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn,
                  const std::function<void(std::chrono::milliseconds)>& sleep =
                      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
    -> decltype(fn()) {
  const int attempts = std::max(1, policy.max_attempts);
  std::string last;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    try {
      return fn();
    } catch (const RetryableError& e) {
      last = e.what();
      if (attempt < attempts) sleep(policy.backoff_after(attempt));
    }
  }
  throw BackendUnavailable("gave up after " + std::to_string(attempts) +
                           " attempts: " + last);
}

// Shared rate limiter. `rate_per_second` <= 0 disables limiting.
class TokenBucket {
public:
  using clock = std::chrono::steady_clock;

  TokenBucket(double rate_per_second, double burst)
      : rate_(rate_per_second), capacity_(std::max(1.0, burst)), tokens_(capacity_),
        last_(clock::now()) {}

  void acquire() {
    if (rate_ <= 0) return;
    std::unique_lock lock(mutex_);
    for (;;) {
      refill(clock::now());
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      cv_.wait_for(lock, std::chrono::duration_cast<clock::duration>(wait));
    }
  }

  bool try_acquire() {
    if (rate_ <= 0) return true;
    std::lock_guard lock(mutex_);
    refill(clock::now());
    if (tokens_ < 1.0) return false;
    tokens_ -= 1.0;
    return true;
  }

private:
  void refill(clock::time_point now) {
    const double dt = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + dt * rate_);
    last_ = now;
  }

  double rate_;
  double capacity_;
  double tokens_;
  clock::time_point last_;
  std::mutex mutex_;
  std::condition_variable cv_;
};

} // namespace spasm
