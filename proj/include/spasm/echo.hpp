#pragma once

// Conversation-level echoing: the LLM judge, echoing rates and the sampling
// protocol for human validation.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spasm/backend.hpp"
#include "spasm/orchestrator.hpp"
#include "spasm/prompts.hpp"
#include "spasm/record.hpp"

namespace spasm {

struct IdentitySpec {
  std::string role_name;
  std::string identity_card;
};

struct EchoVerdict {
  std::string conversation_id;
  int sigma = 0;
  std::string rationale;
  std::string judge_model;

  bool operator==(const EchoVerdict&) const = default;
};

inline void to_json(json& j, const EchoVerdict& v) {
  j = json{{"conversation_id", v.conversation_id},
           {"sigma", v.sigma},
           {"rationale", v.rationale},
           {"judge_model", v.judge_model}};
}

inline void from_json(const json& j, EchoVerdict& v) {
  v.conversation_id = j.at("conversation_id").get<std::string>();
  v.sigma = j.at("sigma").get<int>();
  if (v.sigma != 0 && v.sigma != 1) throw FormatError("sigma must be 0 or 1");
  v.rationale = j.value("rationale", std::string{});
  v.judge_model = j.value("judge_model", std::string{});
}

enum class EchoLabel { echoing, no_echoing };

inline std::string_view to_string(EchoLabel l) {
  return l == EchoLabel::echoing ? "echoing" : "no_echoing";
}

inline EchoLabel parse_echo_label(std::string_view s) {
  if (s == "echoing") return EchoLabel::echoing;
  if (s == "no_echoing" || s == "no-echoing") return EchoLabel::no_echoing;
  throw FormatError("unknown label '" + std::string(s) + "'");
}

// One row of the annotation log. An empty `label` records a cleared label.
struct LabelRecord {
  std::string conversation_id;
  std::string annotator_id;
  std::optional<EchoLabel> label;
  std::string timestamp;

  bool operator==(const LabelRecord&) const = default;
};

inline void to_json(json& j, const LabelRecord& r) {
  j = json{{"conversation_id", r.conversation_id},
           {"annotator_id", r.annotator_id},
           {"label", r.label ? json(to_string(*r.label)) : json(nullptr)},
           {"timestamp", r.timestamp}};
}

inline void from_json(const json& j, LabelRecord& r) {
  r.conversation_id = j.at("conversation_id").get<std::string>();
  r.annotator_id = j.at("annotator_id").get<std::string>();
  const auto& l = j.at("label");
  r.label = l.is_null() ? std::nullopt : std::optional(parse_echo_label(l.get<std::string>()));
  r.timestamp = j.value("timestamp", std::string{});
}

// Last write wins per (conversation, annotator); cleared labels drop out.
inline std::vector<LabelRecord> resolve_labels(std::span<const LabelRecord> log) {
  std::map<std::pair<std::string, std::string>, LabelRecord> latest;
  for (const auto& r : log) latest[{r.conversation_id, r.annotator_id}] = r;
  std::vector<LabelRecord> out;
  for (auto& [key, r] : latest)
    if (r.label) out.push_back(std::move(r));
  return out;
}

inline GenerationConfig judge_defaults(std::string model_id) {
  return {std::move(model_id), 0.0, 200, std::string(prompts::kEchoJudge), {}};
}

inline std::pair<IdentitySpec, IdentitySpec>
identities_for(const ConversationRecord& record,
               std::string_view responder_card = prompts::kResponder) {
  return {{"client", record.persona.text}, {"responder", std::string(responder_card)}};
}

inline std::string render_judge_transcript(std::span<const Turn> turns) {
  std::ostringstream out;
  for (const auto& t : turns)
    out << '[' << t.index << "] " << t.speaker.name << ": " << single_line(t.content) << '\n';
  return out.str();
}

inline std::vector<ChatMessage> judge_messages(const ConversationRecord& record,
                                               const std::pair<IdentitySpec, IdentitySpec>& ids,
                                               const GenerationConfig& config) {
  std::ostringstream user;
  user << "Identity card of the " << ids.first.role_name << ":\n"
       << single_line(ids.first.identity_card) << "\n\n"
       << "Identity card of the " << ids.second.role_name << ":\n"
       << single_line(ids.second.identity_card) << "\n\n"
       << "Conversation:\n"
       << render_judge_transcript(record.turns);
  return {{MessageRole::system, config.system_prompt}, {MessageRole::user, user.str()}};
}

inline EchoVerdict judge_echoing(ChatBackend& backend, const ConversationRecord& record,
                                 const std::pair<IdentitySpec, IdentitySpec>& ids,
                                 const GenerationConfig& config) {
  if (config.temperature != 0.0)
    throw std::invalid_argument("echo judge must run at temperature 0");
  if (ids.first.identity_card.empty() || ids.second.identity_card.empty())
    throw std::invalid_argument("identity cards must be nonempty");
  const auto messages = judge_messages(record, ids, config);
  try {
    const json v = structured_with_retry(backend, config, messages, {"echoing"});
    EchoVerdict out{record.conversation_id, verdict_bool(v, "echoing") ? 1 : 0, {}, config.model_id};
    if (v.contains("rationale") && v.at("rationale").is_string())
      out.rationale = v.at("rationale").get<std::string>();
    return out;
  } catch (const MalformedVerdict& e) {
    throw JudgementFailed("judge verdict for " + record.conversation_id + " unparseable: " + e.what());
  }
}

inline double echoing_rate(std::span<const EchoVerdict> verdicts) {
  if (verdicts.empty()) throw std::invalid_argument("echoing_rate: empty input");
  std::size_t pos = 0;
  for (const auto& v : verdicts) pos += v.sigma == 1;
  return static_cast<double>(pos) / static_cast<double>(verdicts.size());
}

// Mean of the per-annotator rates, each over that annotator's labelled set.
inline double human_echoing_rate(std::span<const LabelRecord> labels) {
  const auto resolved = resolve_labels(labels);
  if (resolved.empty()) throw std::invalid_argument("human_echoing_rate: no labels");
  std::map<std::string, std::pair<std::size_t, std::size_t>> per; // annotator -> (pos, n)
  for (const auto& r : resolved) {
    auto& [pos, n] = per[r.annotator_id];
    pos += *r.label == EchoLabel::echoing;
    ++n;
  }
  double sum = 0;
  for (const auto& [a, pn] : per) sum += static_cast<double>(pn.first) / static_cast<double>(pn.second);
  return sum / static_cast<double>(per.size());
}

struct ValidationSample {
  std::vector<std::string> conversation_ids;
  bool truncated = false; // requested more than the corpus holds
};

// ECP corpora get full coverage; CONCAT corpora a seeded uniform sample of n
// without replacement. Returned ids keep corpus order.
inline ValidationSample sample_for_human_validation(std::span<const std::string> corpus_ids,
                                                    HistoryMode mode, std::size_t n,
                                                    std::uint64_t seed) {
  if (corpus_ids.empty()) throw std::invalid_argument("sample_for_human_validation: empty corpus");
  ValidationSample out;
  if (mode == HistoryMode::ecp || n >= corpus_ids.size()) {
    out.truncated = mode == HistoryMode::concat && n > corpus_ids.size();
    out.conversation_ids.assign(corpus_ids.begin(), corpus_ids.end());
    return out;
  }
  std::vector<std::size_t> idx(corpus_ids.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  for (auto i : idx) out.conversation_ids.push_back(corpus_ids[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Lexical screen: a cheap, deterministic stand-in for the LLM judge. It flags
// a client turn that uses advisory/supportive phrasing, or a responder turn
// that uses help-seeking phrasing. Used by the offline mock judge.

inline constexpr std::array<std::string_view, 16> kAdvisoryMarkers{
    "have you thought about", "have you tried", "have you considered", "you should",
    "you could try", "maybe try", "it might help you", "i'm here for you",
    "you've got this", "i recommend", "my advice", "i suggest", "it might help to",
    "don't hesitate to", "i'm always here", "you can do it"};

inline constexpr std::array<std::string_view, 10> kHelpSeekingMarkers{
    "can you help me", "i need help", "i've been feeling", "i'm struggling",
    "how can i", "what should i do", "i'm worried about my", "i don't know what to do",
    "any advice for me", "could you advise me"};

struct EchoScreenResult {
  bool echoing = false;
  std::optional<std::size_t> turn_index;
  std::string rationale;
};

namespace detail {
inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  // normalise typographic apostrophes
  std::string norm;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.compare(i, 3, "\xE2\x80\x99") == 0) {
      norm += '\'';
      i += 2;
    } else {
      norm += out[i];
    }
  }
  return norm;
}

template <std::size_t N>
std::optional<std::string_view> find_marker(const std::string& text,
                                             const std::array<std::string_view, N>& markers) {
  for (auto m : markers)
    if (text.find(m) != std::string::npos) return m;
  return std::nullopt;
}
} // namespace detail

inline EchoScreenResult lexical_echo_screen(std::span<const Turn> turns) {
  for (const auto& t : turns) {
    const auto text = detail::lower(t.content);
    if (t.speaker == SpeakerId::client()) {
      if (auto m = detail::find_marker(text, kAdvisoryMarkers))
        return {true, t.index,
                "turn " + std::to_string(t.index) + ": client uses responder-style phrasing ('" +
                    std::string(*m) + "')"};
    } else if (t.speaker == SpeakerId::responder()) {
      if (auto m = detail::find_marker(text, kHelpSeekingMarkers))
        return {true, t.index,
                "turn " + std::to_string(t.index) + ": responder uses client-style phrasing ('" +
                    std::string(*m) + "')"};
    }
  }
  return {false, std::nullopt, "every message stays within its assigned role"};
}

// Inverse of render_judge_transcript for the conversation section.
inline std::vector<Turn> parse_judge_transcript(std::string_view text) {
  static const std::regex line_re(R"(^\[(\d+)\] ([A-Za-z0-9_\-]+): (.*)$)");
  std::vector<Turn> turns;
  std::istringstream in{std::string(text)};
  std::string line;
  bool in_conversation = false;
  while (std::getline(in, line)) {
    if (line == "Conversation:") {
      in_conversation = true;
      continue;
    }
    std::smatch m;
    if (in_conversation && std::regex_match(line, m, line_re))
      turns.push_back({std::stoul(m[1].str()), {m[2].str()}, m[3].str()});
  }
  return turns;
}

} // namespace spasm
