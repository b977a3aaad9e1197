#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spasm/backend.hpp"
#include "spasm/dialogue.hpp"
#include "spasm/persona.hpp"

namespace spasm {

enum class HistoryMode { ecp, concat };

inline std::string_view to_string(HistoryMode m) { return m == HistoryMode::ecp ? "ECP" : "CONCAT"; }

inline HistoryMode parse_history_mode(std::string_view s) {
  if (s == "ECP" || s == "ecp") return HistoryMode::ecp;
  if (s == "CONCAT" || s == "concat") return HistoryMode::concat;
  throw FormatError("unknown history mode '" + std::string(s) + "'");
}

// Dialogue length and termination-window settings. Lengths are in turn pairs
// (one client + one responder utterance) except `window`, which counts
// utterances.
struct Caps {
  int max_turn_pairs = 25;
  int window = 4;
  int activation_pairs = 3;

  void validate() const {
    if (max_turn_pairs < 1 || window < 1 || activation_pairs < 1)
      throw std::invalid_argument("caps must be positive");
  }
  bool operator==(const Caps&) const = default;
};

struct RunMeta {
  std::string client_model;
  std::string responder_model;
  std::string detector_model;
  std::string validator_model;
  std::string crafter_model;
  double client_temperature = 0.7;
  double responder_temperature = 0.7;
  double detector_temperature = 0.3;
  double validator_temperature = 0.3;
  double crafter_temperature = 0.7;
  HistoryMode history_mode = HistoryMode::ecp;
  Caps caps;
  std::uint64_t campaign_seed = 0;
  std::uint64_t conversation_seed = 0;
  int validation_attempts = 0;
  std::string concat_user_side = "client";

  bool operator==(const RunMeta&) const = default;
};

struct ConversationRecord {
  std::string persona_id;
  std::string conversation_id;
  PersonaDescription persona;
  std::vector<Turn> turns;
  std::string termination_reason;
  RunMeta run_meta;

  bool operator==(const ConversationRecord&) const = default;
};

inline void to_json(json& j, const Caps& c) {
  j = json{{"max_turn_pairs", c.max_turn_pairs},
           {"window", c.window},
           {"activation_pairs", c.activation_pairs}};
}

inline void from_json(const json& j, Caps& c) {
  c.max_turn_pairs = j.value("max_turn_pairs", c.max_turn_pairs);
  c.window = j.value("window", c.window);
  c.activation_pairs = j.value("activation_pairs", c.activation_pairs);
}

inline void to_json(json& j, const RunMeta& m) {
  j = json{{"client_model", m.client_model},
           {"responder_model", m.responder_model},
           {"detector_model", m.detector_model},
           {"validator_model", m.validator_model},
           {"crafter_model", m.crafter_model},
           {"temperatures",
            {{"client", m.client_temperature},
             {"responder", m.responder_temperature},
             {"detector", m.detector_temperature},
             {"validator", m.validator_temperature},
             {"crafter", m.crafter_temperature}}},
           {"history_mode", to_string(m.history_mode)},
           {"caps", m.caps},
           {"campaign_seed", m.campaign_seed},
           {"conversation_seed", m.conversation_seed},
           {"validation_attempts", m.validation_attempts},
           {"concat_user_side", m.concat_user_side}};
}

inline void from_json(const json& j, RunMeta& m) {
  m.client_model = j.value("client_model", std::string{});
  m.responder_model = j.value("responder_model", std::string{});
  m.detector_model = j.value("detector_model", std::string{});
  m.validator_model = j.value("validator_model", std::string{});
  m.crafter_model = j.value("crafter_model", std::string{});
  if (j.contains("temperatures")) {
    const auto& t = j.at("temperatures");
    m.client_temperature = t.value("client", m.client_temperature);
    m.responder_temperature = t.value("responder", m.responder_temperature);
    m.detector_temperature = t.value("detector", m.detector_temperature);
    m.validator_temperature = t.value("validator", m.validator_temperature);
    m.crafter_temperature = t.value("crafter", m.crafter_temperature);
  }
  m.history_mode = parse_history_mode(j.value("history_mode", std::string("ECP")));
  if (j.contains("caps")) m.caps = j.at("caps").get<Caps>();
  m.campaign_seed = j.value("campaign_seed", std::uint64_t{0});
  m.conversation_seed = j.value("conversation_seed", std::uint64_t{0});
  m.validation_attempts = j.value("validation_attempts", 0);
  m.concat_user_side = j.value("concat_user_side", std::string("client"));
}

inline void to_json(json& j, const Turn& t) {
  j = json{{"index", t.index}, {"speaker", t.speaker.name}, {"content", t.content}};
}

inline void from_json(const json& j, Turn& t) {
  t.index = j.at("index").get<std::size_t>();
  t.speaker = {j.at("speaker").get<std::string>()};
  t.content = j.at("content").get<std::string>();
}

inline void to_json(json& j, const ConversationRecord& r) {
  json persona = r.persona.profile;
  persona["description"] = r.persona.text;
  j = json{{"persona_id", r.persona_id},
           {"conversation_id", r.conversation_id},
           {"persona", std::move(persona)},
           {"turns", r.turns},
           {"termination_reason", r.termination_reason},
           {"run_meta", r.run_meta}};
}

inline void from_json(const json& j, ConversationRecord& r) {
  for (const char* key : {"persona_id", "conversation_id", "persona", "turns", "termination_reason"})
    if (!j.contains(key)) throw FormatError(std::string("record lacks required field '") + key + "'");
  r.persona_id = j.at("persona_id").get<std::string>();
  r.conversation_id = j.at("conversation_id").get<std::string>();
  r.persona.profile = j.at("persona").get<PersonaProfile>();
  r.persona.text = j.at("persona").value("description", std::string{});
  r.turns = j.at("turns").get<std::vector<Turn>>();
  r.termination_reason = j.at("termination_reason").get<std::string>();
  if (j.contains("run_meta")) r.run_meta = j.at("run_meta").get<RunMeta>();
}

inline InteractionHistory to_history(const ConversationRecord& r) {
  InteractionHistory h;
  for (const auto& t : r.turns) h.append(t.speaker, t.content);
  return h;
}

inline std::vector<std::string> client_utterances(const ConversationRecord& r) {
  std::vector<std::string> out;
  for (const auto& t : r.turns)
    if (t.speaker == SpeakerId::client()) out.push_back(t.content);
  return out;
}

} // namespace spasm
