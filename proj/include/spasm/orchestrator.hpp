#pragma once

// Conversation loop and campaign runner.
//
// A conversation alternates client and responder turns starting with the
// client. After every completed pair, once `activation_pairs` pairs exist, the
// termination detector reads the last `window` utterances and may end the
// dialogue; otherwise it stops at `max_turn_pairs`.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "spasm/backend.hpp"
#include "spasm/dialogue.hpp"
#include "spasm/parallel.hpp"
#include "spasm/persona.hpp"
#include "spasm/prompts.hpp"
#include "spasm/record.hpp"

namespace spasm {

inline GenerationConfig client_defaults(std::string model_id) {
  return {std::move(model_id), 0.7, 300, std::string(prompts::kClientAgent), {}};
}
inline GenerationConfig responder_defaults(std::string model_id) {
  return {std::move(model_id), 0.7, 300, std::string(prompts::kResponder), {}};
}
inline GenerationConfig detector_defaults(std::string model_id) {
  return {std::move(model_id), 0.3, 100, std::string(prompts::kTerminationDetector), {}};
}

struct AgentConfigs {
  GenerationConfig client = client_defaults("gpt-4o-mini");
  GenerationConfig responder = responder_defaults("gpt-4o-mini");
  GenerationConfig detector = detector_defaults("gpt-4o-mini");
};

// The client is conditioned on its persona card followed by the generic
// client instruction ("...the persona described above").
inline std::string client_system_prompt(const PersonaDescription& persona,
                                        std::string_view instruction) {
  return persona.text + "\n\n" + std::string(instruction);
}

inline std::vector<ChatMessage> agent_messages(const InteractionHistory& history,
                                               const SpeakerId& agent,
                                               std::string_view system_prompt, HistoryMode mode,
                                               const ConcatConvention& concat = {}) {
  return mode == HistoryMode::ecp ? render_view(project(history, agent), system_prompt)
                                  : render_concat(history, system_prompt, agent, concat);
}

// Forwarded to the backend as the sampling seed; also what makes repeated
// conversations of one persona distinct under the offline mock.
inline GenerationConfig with_seed(GenerationConfig config, std::uint64_t seed) {
  config.extra_decoding["seed"] = static_cast<double>(seed % 2147483647ULL);
  return config;
}

struct TerminationVerdict {
  bool should_terminate = false;
  std::string reason;

  bool operator==(const TerminationVerdict&) const = default;
};

// One utterance per line, embedded newlines flattened to spaces.
inline std::string single_line(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c == '\n' || c == '\r') c = ' ';
  return out;
}

// Absolute labels: the client is the "user" the detector prompt talks about.
inline std::string render_transcript_lines(std::span<const Turn> turns) {
  std::ostringstream out;
  for (const auto& t : turns)
    out << '[' << (t.speaker == SpeakerId::client() ? "user" : "assistant") << "] "
        << single_line(t.content) << '\n';
  return out.str();
}

inline std::vector<ChatMessage> detector_messages(const InteractionHistory& history,
                                                  std::size_t window,
                                                  const GenerationConfig& config) {
  return {{MessageRole::system, config.system_prompt},
          {MessageRole::user,
           "Recent messages (oldest first):\n" + render_transcript_lines(history.tail(window))}};
}

inline TerminationVerdict check_termination(ChatBackend& backend,
                                            const InteractionHistory& history,
                                            std::size_t window, const GenerationConfig& config) {
  const auto messages = detector_messages(history, window, config);
  try {
    const json v = structured_with_retry(backend, config, messages, {"should_terminate"});
    TerminationVerdict out{verdict_bool(v, "should_terminate"), {}};
    if (v.contains("reason") && v.at("reason").is_string()) out.reason = v.at("reason").get<std::string>();
    if (out.should_terminate && out.reason.empty()) out.reason = "unspecified";
    return out;
  } catch (const MalformedVerdict&) {
    return {false, "unparseable"};
  }
}

class ConversationAborted : public Error {
public:
  ConversationAborted(const std::string& what, ConversationRecord partial)
      : Error(what), partial_(std::move(partial)) {}
  const ConversationRecord& partial() const noexcept { return partial_; }

private:
  ConversationRecord partial_;
};

inline constexpr std::string_view kMaxTurnsReason = "max_turns";

// Called after every completed turn pair with the live history. Observers get
// a const view and cannot alter the conversation.
using PairObserver = std::function<void(const InteractionHistory&, int pairs_completed)>;

struct ConversationSpec {
  std::string persona_id;
  std::string conversation_id;
  HistoryMode mode = HistoryMode::ecp;
  Caps caps;
  std::uint64_t seed = 0;
  ConcatConvention concat;
  PairObserver observer;
  RunMeta meta; // fields not owned by the loop (persona/campaign bookkeeping)
};

inline ConversationRecord run_conversation(ChatBackend& backend, const PersonaDescription& persona,
                                           const AgentConfigs& agents,
                                           const ConversationSpec& spec) {
  spec.caps.validate();
  const auto client = SpeakerId::client();
  const auto responder = SpeakerId::responder();

  GenerationConfig client_cfg = with_seed(agents.client, spec.seed);
  client_cfg.system_prompt = client_system_prompt(persona, agents.client.system_prompt);
  const GenerationConfig responder_cfg = with_seed(agents.responder, spec.seed);
  const GenerationConfig detector_cfg = with_seed(agents.detector, spec.seed);

  ConversationRecord record;
  record.persona_id = spec.persona_id;
  record.conversation_id = spec.conversation_id;
  record.persona = persona;
  record.run_meta = spec.meta;
  record.run_meta.client_model = agents.client.model_id;
  record.run_meta.responder_model = agents.responder.model_id;
  record.run_meta.detector_model = agents.detector.model_id;
  record.run_meta.client_temperature = agents.client.temperature;
  record.run_meta.responder_temperature = agents.responder.temperature;
  record.run_meta.detector_temperature = agents.detector.temperature;
  record.run_meta.history_mode = spec.mode;
  record.run_meta.caps = spec.caps;
  record.run_meta.conversation_seed = spec.seed;
  record.run_meta.concat_user_side = spec.concat.user_side.name;

  InteractionHistory history;
  auto speak = [&](const SpeakerId& who, const GenerationConfig& cfg) {
    const auto messages = agent_messages(history, who, cfg.system_prompt, spec.mode, spec.concat);
    history.append(who, detail::trim(chat_complete(backend, cfg, messages)));
  };

  try {
    for (int pair = 1; pair <= spec.caps.max_turn_pairs; ++pair) {
      speak(client, client_cfg);
      speak(responder, responder_cfg);
      if (spec.observer) spec.observer(history, pair);
      if (pair >= spec.caps.activation_pairs) {
        auto verdict = check_termination(backend, history,
                                         static_cast<std::size_t>(spec.caps.window), detector_cfg);
        if (verdict.should_terminate) {
          record.termination_reason = std::move(verdict.reason);
          break;
        }
      }
    }
  } catch (const Error& e) {
    record.turns = history.turns();
    record.termination_reason = std::string("aborted: ") + e.what();
    throw ConversationAborted(e.what(), std::move(record));
  }
  if (record.termination_reason.empty()) record.termination_reason = kMaxTurnsReason;
  record.turns = history.turns();
  return record;
}

// Seeds for personas and conversations are derived from the campaign seed and
// their indices only, so two campaigns that differ in history mode share
// personas and per-conversation seeds.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return Fnv1a{}.field(base).field(tag).field(a).field(b).digest();
}

inline std::string persona_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%04zu", index + 1);
  return buf;
}

inline std::string conversation_id_for(const std::string& persona_id, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "-c%02zu", index + 1);
  return persona_id + buf;
}

struct CampaignConfig {
  PersonaSchema schema;
  GenerationConfig validator = validator_defaults("gpt-4o-mini");
  GenerationConfig crafter = crafter_defaults("gpt-4o-mini");
  AgentConfigs agents;
  HistoryMode mode = HistoryMode::ecp;
  Caps caps;
  int n_personas = 500;
  int convs_per_persona = 10;
  std::uint64_t seed = 0;
  int max_persona_attempts = 20;
  int workers = 4;
  ConcatConvention concat;
};

struct PersonaEntry {
  std::size_t index = 0;
  std::string persona_id;
  PersonaDescription description;
  int validation_attempts = 0;
};

struct PersonaGap {
  std::size_t index = 0;
  std::string persona_id;
  std::string error;
};

struct AbortedConversation {
  ConversationRecord partial;
  std::string error;
};

struct CampaignResult {
  std::vector<ConversationRecord> records;
  std::vector<PersonaGap> persona_gaps;
  std::vector<AbortedConversation> aborted;
};

struct PersonaBatch {
  std::vector<PersonaEntry> personas;
  std::vector<PersonaGap> gaps;
};

inline PersonaBatch build_personas(ChatBackend& backend, const CampaignConfig& cfg) {
  if (cfg.n_personas < 1) throw std::invalid_argument("n_personas must be positive");
  const auto n = static_cast<std::size_t>(cfg.n_personas);
  std::vector<std::optional<PersonaEntry>> slots(n);
  std::vector<std::optional<PersonaGap>> gaps(n);

  parallel_for(n, static_cast<std::size_t>(cfg.workers), [&](std::size_t i) {
    const auto id = persona_id_for(i);
    std::mt19937_64 rng(derive_seed(cfg.seed, "persona", i));
    const auto validator = with_seed(cfg.validator, derive_seed(cfg.seed, "validator", i));
    const auto crafter = with_seed(cfg.crafter, derive_seed(cfg.seed, "crafter", i));
    try {
      auto valid = resample_until_valid(backend, cfg.schema, validator, rng,
                                        cfg.max_persona_attempts);
      valid.profile.persona_id = id;
      auto description = craft_description(backend, valid.profile, crafter);
      slots[i] = PersonaEntry{i, id, std::move(description), valid.attempts};
    } catch (const Error& e) {
      spdlog::warn("persona {} skipped: {}", id, e.what());
      gaps[i] = PersonaGap{i, id, e.what()};
    }
  });

  PersonaBatch out;
  for (auto& s : slots)
    if (s) out.personas.push_back(std::move(*s));
  for (auto& g : gaps)
    if (g) out.gaps.push_back(std::move(*g));
  return out;
}

using RecordSink = std::function<void(const ConversationRecord&)>;
using ObserverFactory =
    std::function<PairObserver(const PersonaEntry&, const std::string& conversation_id)>;

// Runs `convs_per_persona` conversations for each persona. Records reach
// `sink` in (persona, conversation) order as soon as all earlier ones are done.
inline CampaignResult run_conversations(ChatBackend& backend, const CampaignConfig& cfg,
                                        const std::vector<PersonaEntry>& personas,
                                        const RecordSink& sink = {},
                                        const ObserverFactory& observers = {}) {
  if (cfg.convs_per_persona < 1) throw std::invalid_argument("convs_per_persona must be positive");
  const auto per = static_cast<std::size_t>(cfg.convs_per_persona);
  const std::size_t total = personas.size() * per;

  using Slot = std::optional<ConversationRecord>;
  auto forward = [&sink](const Slot& r) {
    if (r && sink) sink(*r);
  };
  OrderedFlusher<Slot, decltype(forward)> flusher(total, forward);
  std::vector<std::optional<AbortedConversation>> aborted(total);
  std::atomic<std::size_t> done{0};

  parallel_for(total, static_cast<std::size_t>(cfg.workers), [&](std::size_t k) {
    const auto& persona = personas[k / per];
    const std::size_t c = k % per;
    ConversationSpec spec;
    spec.persona_id = persona.persona_id;
    spec.conversation_id = conversation_id_for(persona.persona_id, c);
    spec.mode = cfg.mode;
    spec.caps = cfg.caps;
    spec.seed = derive_seed(cfg.seed, "conversation", persona.index, c);
    spec.concat = cfg.concat;
    if (observers) spec.observer = observers(persona, spec.conversation_id);
    spec.meta.validator_model = cfg.validator.model_id;
    spec.meta.crafter_model = cfg.crafter.model_id;
    spec.meta.validator_temperature = cfg.validator.temperature;
    spec.meta.crafter_temperature = cfg.crafter.temperature;
    spec.meta.campaign_seed = cfg.seed;
    spec.meta.validation_attempts = persona.validation_attempts;

    Slot result;
    try {
      result = run_conversation(backend, persona.description, cfg.agents, spec);
    } catch (const ConversationAborted& e) {
      spdlog::warn("conversation {} aborted: {}", spec.conversation_id, e.what());
      aborted[k] = AbortedConversation{e.partial(), e.what()};
    }
    flusher.complete(k, std::move(result));
    const auto n_done = ++done;
    if (n_done % 50 == 0 || n_done == total)
      spdlog::info("campaign progress: {}/{} conversations", n_done, total);
  });

  CampaignResult out;
  for (auto& r : flusher.take())
    if (r) out.records.push_back(std::move(*r));
  for (auto& a : aborted)
    if (a) out.aborted.push_back(std::move(*a));
  return out;
}

inline CampaignResult run_campaign(ChatBackend& backend, const CampaignConfig& cfg,
                                   const RecordSink& sink = {}) {
  auto batch = build_personas(backend, cfg);
  auto result = run_conversations(backend, cfg, batch.personas, sink);
  result.persona_gaps = std::move(batch.gaps);
  return result;
}

// ---------------------------------------------------------------------------
// One-shot vs per-role generation.
//
// Both generators condition turn t on the same rendering of x_1..x_{t-1};
// they differ only in which configuration produces each turn.

enum class ScheduleRole { a, b };

inline std::vector<ChatMessage> transcript_prompt(const GenerationConfig& config,
                                                  std::span<const std::string> prefix) {
  std::vector<ChatMessage> out{{MessageRole::system, config.system_prompt}};
  if (prefix.empty()) {
    out.push_back({MessageRole::user, "Begin the dialogue."});
  } else {
    std::string body;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      if (i) body += '\n';
      body += prefix[i];
    }
    out.push_back({MessageRole::user, "Dialogue so far:\n" + body + "\nWrite the next turn."});
  }
  return out;
}

inline std::vector<std::string> generate_one_shot(ChatBackend& backend,
                                                  const GenerationConfig& global, std::size_t T) {
  std::vector<std::string> x;
  for (std::size_t t = 0; t < T; ++t) x.push_back(chat_complete(backend, global, transcript_prompt(global, x)));
  return x;
}

inline std::vector<std::string> generate_per_role(ChatBackend& backend,
                                                  const GenerationConfig& role_a,
                                                  const GenerationConfig& role_b,
                                                  std::span<const ScheduleRole> schedule) {
  std::vector<std::string> x;
  for (const auto r : schedule) {
    const auto& cfg = r == ScheduleRole::a ? role_a : role_b;
    x.push_back(chat_complete(backend, cfg, transcript_prompt(cfg, x)));
  }
  return x;
}

inline std::vector<ScheduleRole> alternating_schedule(std::size_t T) {
  std::vector<ScheduleRole> s(T);
  for (std::size_t t = 0; t < T; ++t) s[t] = t % 2 == 0 ? ScheduleRole::a : ScheduleRole::b;
  return s;
}

// True iff setting both roles to `shared` reproduces the one-shot transcript.
inline bool emulate_one_shot_check(ChatBackend& backend, const GenerationConfig& shared,
                                   std::span<const ScheduleRole> schedule) {
  return generate_per_role(backend, shared, shared, schedule) ==
         generate_one_shot(backend, shared, schedule.size());
}

inline bool emulate_one_shot_check(ChatBackend& backend, const GenerationConfig& shared,
                                   std::size_t T) {
  const auto s = alternating_schedule(T);
  return emulate_one_shot_check(backend, shared, s);
}

} // namespace spasm
