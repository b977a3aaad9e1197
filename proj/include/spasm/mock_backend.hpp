#pragma once

// Deterministic offline backends.
//
// MockChatBackend answers, in order of precedence:
//   1. a scripted response keyed by the exact message-sequence hash,
//   2. the first registered rule that returns a value,
//   3. "<model_id>:<12 hex digits of request_hash>".
// The output is a pure function of (config, messages) plus the scripts and
// rules installed before use.
//
// make_offline_mock() installs rules that play every pipeline role well
// enough to run campaigns, drift probes and judging end to end without a
// network.

#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spasm/backend.hpp"
#include "spasm/echo.hpp"
#include "spasm/persona.hpp"
#include "spasm/prompts.hpp"

namespace spasm {

class MockChatBackend : public ChatBackend {
public:
  using RuleFn = std::function<std::optional<std::string>(const GenerationConfig&,
                                                          std::span<const ChatMessage>)>;

  // Sequence of responses for one exact message sequence; once exhausted the
  // last response repeats.
  void script(std::uint64_t messages_key, std::vector<std::string> responses) {
    std::lock_guard lock(mutex_);
    scripts_[messages_key] = Script{std::move(responses), 0};
  }

  void script(std::span<const ChatMessage> messages, std::string response) {
    script(messages_hash(messages), std::vector<std::string>{std::move(response)});
  }

  void add_rule(std::string name, RuleFn fn) {
    std::lock_guard lock(mutex_);
    rules_.push_back({std::move(name), std::move(fn)});
  }

  std::string complete(const GenerationConfig& config,
                       std::span<const ChatMessage> messages) override {
    ++calls_;
    {
      std::lock_guard lock(mutex_);
      if (auto it = scripts_.find(messages_hash(messages)); it != scripts_.end()) {
        auto& s = it->second;
        const auto& out = s.responses[std::min(s.next, s.responses.size() - 1)];
        ++s.next;
        return out;
      }
    }
    for (const auto& rule : rules_)
      if (auto out = rule.fn(config, messages)) return *out;
    return default_text(config, messages);
  }

  static std::string default_text(const GenerationConfig& config,
                                  std::span<const ChatMessage> messages) {
    return config.model_id + ":" + to_hex(request_hash(config, messages)).substr(0, 12);
  }

  std::size_t calls() const noexcept { return calls_.load(); }

private:
  struct Script {
    std::vector<std::string> responses;
    std::size_t next = 0;
  };
  struct Rule {
    std::string name;
    RuleFn fn;
  };

  std::mutex mutex_;
  std::map<std::uint64_t, Script> scripts_;
  std::vector<Rule> rules_;
  std::atomic<std::size_t> calls_{0};
};

// Unit-norm Gaussian vectors seeded by (model, text, seed). A custom `mapper`
// may take over for specific texts.
class MockEmbeddingBackend : public EmbeddingBackend {
public:
  using Mapper = std::function<std::optional<std::vector<double>>(const std::string&)>;

  explicit MockEmbeddingBackend(std::size_t dimension = 256, std::uint64_t seed = 0,
                                Mapper mapper = {})
      : dimension_(dimension), seed_(seed), mapper_(std::move(mapper)) {
    if (dimension_ == 0) throw std::invalid_argument("embedding dimension must be positive");
  }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts,
                                           const std::string& model_id) override {
    ++batches_;
    texts_embedded_ += texts.size();
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back({vector_for(t, model_id), model_id});
    return out;
  }

  std::vector<double> vector_for(const std::string& text, const std::string& model_id) const {
    if (mapper_)
      if (auto v = mapper_(text)) return *v;
    std::mt19937_64 rng(Fnv1a{}.field(seed_).field(model_id).field(text).digest());
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> v(dimension_);
    double norm = 0;
    for (auto& x : v) {
      x = gauss(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
  }

  std::size_t batches() const noexcept { return batches_.load(); }
  std::size_t texts_embedded() const noexcept { return texts_embedded_.load(); }

private:
  std::size_t dimension_;
  std::uint64_t seed_;
  Mapper mapper_;
  std::atomic<std::size_t> batches_{0};
  std::atomic<std::size_t> texts_embedded_{0};
};

// ---------------------------------------------------------------------------
// Offline rule set.

namespace mock_rules {

inline bool system_starts_with(std::span<const ChatMessage> m, std::string_view prefix) {
  return !m.empty() && m.front().role == MessageRole::system &&
         m.front().content.starts_with(prefix);
}

inline bool system_contains(std::span<const ChatMessage> m, std::string_view needle) {
  return !m.empty() && m.front().role == MessageRole::system &&
         m.front().content.find(needle) != std::string::npos;
}

inline std::string_view first_line(std::string_view s) { return s.substr(0, s.find('\n')); }

inline std::optional<PersonaProfile> profile_in(std::span<const ChatMessage> m) {
  for (const auto& msg : m)
    if (msg.role == MessageRole::user)
      if (auto obj = extract_first_object(msg.content)) {
        try {
          json j = *obj;
          if (!j.contains("persona_id")) j["persona_id"] = "";
          return j.get<PersonaProfile>();
        } catch (const std::exception&) {
        }
      }
  return std::nullopt;
}

// A handful of plausibility constraints in the spirit of the validator
// instruction: life stage vs concern, occupation vs age, affect vs concern.
inline bool plausible(const PersonaProfile& p) {
  static const std::vector<std::string> late_life_domains{"retirement pension planning",
                                                          "elderly parent care"};
  static const std::vector<std::string> credentialed{
      "physician", "dentist", "pharmacist", "lawyer", "university professor", "psychologist",
      "architect", "pilot", "veterinarian", "research scientist"};
  auto in = [](const auto& set, const std::string& v) {
    return std::find(set.begin(), set.end(), v) != set.end();
  };
  if (p.age < 25 && in(late_life_domains, p.domain)) return false;
  if (p.age < 26 && in(credentialed, p.occupation)) return false;
  if (p.age < 50 && p.occupation.starts_with("retired")) return false;
  if (p.age > 45 && p.occupation == "university student") return false;
  if (p.emotion == "happy" && p.intensity == Intensity::severe &&
      (p.domain == "coping with depression" || p.domain == "grief and loss"))
    return false;
  return true;
}

inline std::string describe(const PersonaProfile& p) {
  std::string s = "You are a " + std::to_string(p.age) + "-year-old ";
  if (p.gender != kUnspecifiedGender) s += p.gender + " ";
  s += p.occupation + " living in " + p.location + ". Lately you have been feeling " +
       std::string(to_string(p.intensity)) + "ly " + p.emotion + ", mostly because of " +
       p.domain + ". You want to talk it through with someone and work out a next step on " +
       p.domain + ".";
  return s;
}

inline bool mentions_closure(std::string_view text) {
  const auto t = detail::lower(text);
  for (std::string_view phrase : {"thanks", "thank you", "that helps", "i'll keep that in mind",
                                  "that's all"})
    if (t.find(phrase) != std::string::npos) return true;
  return false;
}

// Last "[user] ..." line of a detector prompt.
inline std::optional<std::string> last_user_line(std::string_view text) {
  std::optional<std::string> last;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    if (line.starts_with("[user] ")) last = std::string(line.substr(7));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return last;
}

inline std::string verdict_json(std::string_view key, bool value, std::string_view reason_key,
                                std::string_view reason) {
  return json{{std::string(key), value}, {std::string(reason_key), std::string(reason)}}.dump();
}

// Follows the detector's closure rules literally on the last client message.
inline std::optional<std::string> termination_rule(const GenerationConfig&,
                                                   std::span<const ChatMessage> m) {
  if (!system_starts_with(m, first_line(prompts::kTerminationDetector)) || m.size() < 2)
    return std::nullopt;
  const auto last = last_user_line(m.back().content);
  const bool closure = last && mentions_closure(*last) && last->find('?') == std::string::npos;
  return verdict_json("should_terminate", closure, "reason",
                      closure ? "The user signalled closure without a new question."
                              : "The user is still engaged.");
}

inline std::optional<std::string> validator_rule(const GenerationConfig&,
                                                 std::span<const ChatMessage> m) {
  if (!system_starts_with(m, first_line(prompts::kPersonaValidator))) return std::nullopt;
  const auto p = profile_in(m);
  return json{{"valid", p && plausible(*p)}}.dump();
}

inline std::optional<std::string> crafter_rule(const GenerationConfig&,
                                               std::span<const ChatMessage> m) {
  if (!system_starts_with(m, first_line(prompts::kPersonaCrafter))) return std::nullopt;
  const auto p = profile_in(m);
  if (!p) return std::nullopt;
  return describe(*p);
}

inline std::optional<std::string> judge_rule(const GenerationConfig& config,
                                             std::span<const ChatMessage> m) {
  if (!system_starts_with(m, first_line(prompts::kEchoJudge)) || m.size() < 2) return std::nullopt;
  const auto turns = parse_judge_transcript(m.back().content);
  const auto screen = lexical_echo_screen(turns);
  (void)config;
  return verdict_json("echoing", screen.echoing, "rationale", screen.rationale);
}

} // namespace mock_rules

struct OfflineMockOptions {
  // When set, each simulated client closes the conversation ("thanks, that
  // helps") on a turn drawn deterministically from [min, max] per
  // conversation; otherwise clients never close and campaigns hit the cap.
  std::optional<std::pair<int, int>> client_closure_turns = std::pair{3, 8};
};

inline void install_offline_rules(MockChatBackend& mock, const OfflineMockOptions& opts = {}) {
  mock.add_rule("validator", mock_rules::validator_rule);
  mock.add_rule("crafter", mock_rules::crafter_rule);
  mock.add_rule("termination", mock_rules::termination_rule);
  mock.add_rule("echo-judge", mock_rules::judge_rule);
  if (opts.client_closure_turns) {
    const auto [lo, hi] = *opts.client_closure_turns;
    mock.add_rule("client-closure", [lo, hi](const GenerationConfig& c,
                                             std::span<const ChatMessage> m)
                                        -> std::optional<std::string> {
      if (!mock_rules::system_contains(m, mock_rules::first_line(prompts::kClientAgent)))
        return std::nullopt;
      // Probe calls end with a probe question; let them fall through.
      if (m.size() > 1 && m.back().role == MessageRole::user)
        for (const auto& q : prompts::kDefaultProbes)
          if (m.back().content == q.text) return std::nullopt;
      const auto prior = m.size() - 1; // non-system messages so far
      const auto turn = static_cast<int>(prior / 2) + 1;
      const auto span = static_cast<std::uint64_t>(std::max(0, hi - lo) + 1);
      const auto seed_it = c.extra_decoding.find("seed");
      const auto seed = seed_it == c.extra_decoding.end() ? 0.0 : seed_it->second;
      const int closing_turn =
          lo + static_cast<int>(Fnv1a{}.field(m.front().content).field(std::to_string(seed)).digest() % span);
      if (turn < closing_turn) return std::nullopt;
      return "Thanks, that helps. I'll keep that in mind. (" +
             MockChatBackend::default_text(c, m) + ")";
    });
  }
}

inline std::unique_ptr<MockChatBackend> make_offline_mock(const OfflineMockOptions& opts = {}) {
  auto mock = std::make_unique<MockChatBackend>();
  install_offline_rules(*mock, opts);
  return mock;
}

} // namespace spasm
