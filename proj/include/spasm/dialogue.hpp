#pragma once

// Perspective-agnostic interaction history and its egocentric projections.
//
// The history stores absolute speaker identities only. Whatever an agent is
// conditioned on is derived from it: `project` relabels speakers relative to
// one agent (SELF / PARTNER / OTHER) without touching contents or order, and
// `render_view` maps that view onto chat roles (SELF -> assistant, everyone
// else -> user). `render_concat` is the shared-transcript baseline, which
// uses the same absolute labels for every consumer.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spasm/backend.hpp"
#include "spasm/error.hpp"
#include "spasm/hash.hpp"

namespace spasm {

struct SpeakerId {
  std::string name;

  static SpeakerId client() { return {"client"}; }
  static SpeakerId responder() { return {"responder"}; }

  auto operator<=>(const SpeakerId&) const = default;
};

struct Turn {
  std::size_t index = 0; // 1-based position in the history
  SpeakerId speaker;
  std::string content;

  bool operator==(const Turn&) const = default;
};

class InteractionHistory {
public:
  InteractionHistory() : participants_{SpeakerId::client(), SpeakerId::responder()} {}

  explicit InteractionHistory(std::vector<SpeakerId> participants)
      : participants_(std::move(participants)) {
    if (participants_.empty()) throw std::invalid_argument("history needs at least one speaker");
    auto sorted = participants_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("duplicate speaker in history");
  }

  const std::vector<SpeakerId>& participants() const noexcept { return participants_; }
  const std::vector<Turn>& turns() const noexcept { return turns_; }
  std::size_t size() const noexcept { return turns_.size(); }
  bool empty() const noexcept { return turns_.empty(); }

  bool has_participant(const SpeakerId& s) const {
    return std::find(participants_.begin(), participants_.end(), s) != participants_.end();
  }

  // Append-only: there is deliberately no way to edit or drop a turn.
  const Turn& append(const SpeakerId& speaker, std::string content) {
    if (content.empty()) throw EmptyUtterance("utterance content must be nonempty");
    if (!has_participant(speaker)) throw UnknownAgent("unknown speaker '" + speaker.name + "'");
    turns_.push_back({turns_.size() + 1, speaker, std::move(content)});
    return turns_.back();
  }

  // The last `m` turns (all of them when the history is shorter).
  std::span<const Turn> tail(std::size_t m) const {
    const std::size_t n = std::min(m, turns_.size());
    return std::span<const Turn>(turns_).subspan(turns_.size() - n, n);
  }

  // Prefix of the first `t` turns.
  InteractionHistory prefix(std::size_t t) const {
    InteractionHistory h(participants_);
    h.turns_.assign(turns_.begin(), turns_.begin() + static_cast<std::ptrdiff_t>(
                                                         std::min(t, turns_.size())));
    return h;
  }

  bool operator==(const InteractionHistory&) const = default;

private:
  std::vector<SpeakerId> participants_;
  std::vector<Turn> turns_;
};

inline InteractionHistory append_turn(InteractionHistory history, const SpeakerId& speaker,
                                      std::string content) {
  history.append(speaker, std::move(content));
  return history;
}

// Content fingerprint of a history; used to prove that side calls (probes,
// termination checks) never touch the live conversation.
inline std::uint64_t history_hash(const InteractionHistory& h) {
  Fnv1a f;
  for (const auto& p : h.participants()) f.field(p.name);
  f.field(static_cast<std::uint64_t>(h.size()));
  for (const auto& t : h.turns()) {
    f.field(static_cast<std::uint64_t>(t.index));
    f.field(t.speaker.name);
    f.field(t.content);
  }
  return f.digest();
}

struct RoleDescriptor {
  enum class Kind { self, partner, other };
  Kind kind = Kind::self;
  // Set only for distinct-partner projections with more than two speakers.
  std::string partner;

  static RoleDescriptor self() { return {Kind::self, {}}; }
  static RoleDescriptor partner_of(std::string name = {}) { return {Kind::partner, std::move(name)}; }
  static RoleDescriptor other() { return {Kind::other, {}}; }

  bool operator==(const RoleDescriptor&) const = default;
};

inline std::string to_string(const RoleDescriptor& r) {
  switch (r.kind) {
  case RoleDescriptor::Kind::self: return "SELF";
  case RoleDescriptor::Kind::partner:
    return r.partner.empty() ? "PARTNER" : "PARTNER(" + r.partner + ")";
  case RoleDescriptor::Kind::other: return "OTHER";
  }
  return "?";
}

enum class PartnerMode { distinct, collapsed };

struct ViewEntry {
  RoleDescriptor role;
  std::string content;

  bool operator==(const ViewEntry&) const = default;
};

struct EgocentricView {
  SpeakerId perspective;
  std::vector<ViewEntry> entries;

  bool operator==(const EgocentricView&) const = default;
};

inline RoleDescriptor relative_role(const SpeakerId& speaker, const SpeakerId& perspective,
                                    std::size_t n_participants, PartnerMode mode) {
  if (speaker == perspective) return RoleDescriptor::self();
  if (n_participants <= 2) return RoleDescriptor::partner_of();
  return mode == PartnerMode::distinct ? RoleDescriptor::partner_of(speaker.name)
                                       : RoleDescriptor::other();
}

inline EgocentricView project(const InteractionHistory& history, const SpeakerId& perspective,
                              PartnerMode mode = PartnerMode::distinct) {
  if (!history.has_participant(perspective))
    throw UnknownAgent("perspective '" + perspective.name + "' is not part of this history");
  EgocentricView view{perspective, {}};
  view.entries.reserve(history.size());
  const auto n = history.participants().size();
  for (const auto& t : history.turns())
    view.entries.push_back({relative_role(t.speaker, perspective, n, mode), t.content});
  return view;
}

inline std::vector<ChatMessage> render_view(const EgocentricView& view,
                                            std::string_view system_prompt) {
  std::vector<ChatMessage> out;
  out.reserve(view.entries.size() + 1);
  out.push_back({MessageRole::system, std::string(system_prompt)});
  for (const auto& e : view.entries)
    out.push_back({e.role.kind == RoleDescriptor::Kind::self ? MessageRole::assistant
                                                             : MessageRole::user,
                   e.content});
  return out;
}

// Fixed absolute labelling for the shared-transcript baseline: whoever is
// `user_side` is rendered as the user, the other speaker as the assistant,
// regardless of who consumes the transcript.
struct ConcatConvention {
  SpeakerId user_side = SpeakerId::client();

  bool operator==(const ConcatConvention&) const = default;
};

inline std::vector<ChatMessage> render_concat(const InteractionHistory& history,
                                              std::string_view system_prompt,
                                              const SpeakerId& focal,
                                              const ConcatConvention& convention = {}) {
  if (history.participants().size() != 2)
    throw std::invalid_argument("render_concat: two-agent history required");
  if (!history.has_participant(focal))
    throw UnknownAgent("focal agent '" + focal.name + "' is not part of this history");
  std::vector<ChatMessage> out;
  out.reserve(history.size() + 1);
  out.push_back({MessageRole::system, std::string(system_prompt)});
  for (const auto& t : history.turns())
    out.push_back({t.speaker == convention.user_side ? MessageRole::user : MessageRole::assistant,
                   t.content});
  return out;
}

} // namespace spasm
