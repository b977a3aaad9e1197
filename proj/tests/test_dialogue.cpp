#include <gtest/gtest.h>

#include "spasm/spasm.hpp"
#include "support.hpp"

using namespace spasm;
using testing_support::sample_persona;

namespace {

const SpeakerId A = SpeakerId::client();
const SpeakerId B = SpeakerId::responder();

InteractionHistory abab() {
  InteractionHistory h;
  h.append(A, "x1");
  h.append(B, "x2");
  h.append(A, "x3");
  h.append(B, "x4");
  return h;
}

std::vector<std::string> roles(const EgocentricView& v) {
  std::vector<std::string> out;
  for (const auto& e : v.entries) out.push_back(to_string(e.role));
  return out;
}

std::vector<MessageRole> message_roles(const std::vector<ChatMessage>& m) {
  std::vector<MessageRole> out;
  for (const auto& x : m) out.push_back(x.role);
  return out;
}

using R = MessageRole;

std::optional<std::string> always_terminate(const GenerationConfig& c, std::span<const ChatMessage>) {
  if (c.system_prompt != prompts::kTerminationDetector) return std::nullopt;
  return std::string(R"({"should_terminate": true, "reason": "closure"})");
}

std::optional<std::string> never_terminate(const GenerationConfig& c, std::span<const ChatMessage>) {
  if (c.system_prompt != prompts::kTerminationDetector) return std::nullopt;
  return std::string(R"({"should_terminate": false, "reason": "engaged"})");
}

AgentConfigs mock_agents() {
  return {client_defaults("mock-client"), responder_defaults("mock-responder"),
          detector_defaults("mock-detector")};
}

} // namespace

// ---------------------------------------------------------------------------
// history

TEST(History, AppendAssignsIndicesAndRejectsBadTurns) {
  InteractionHistory h;
  EXPECT_EQ(h.append(A, "hi").index, 1u);
  EXPECT_EQ(h.append(B, "hello").index, 2u);
  EXPECT_THROW(h.append(A, ""), EmptyUtterance);
  EXPECT_THROW(h.append(SpeakerId{"ghost"}, "boo"), UnknownAgent);
  EXPECT_EQ(h.size(), 2u);
}

TEST(History, TailAndPrefix) {
  const auto h = abab();
  const auto t = h.tail(3);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t.front().content, "x2");
  EXPECT_EQ(h.tail(10).size(), 4u);
  const auto p = h.prefix(2);
  EXPECT_EQ(p.size(), 2u);
  EXPECT_EQ(p.turns().back().content, "x2");
  EXPECT_EQ(h.prefix(0).size(), 0u);
}

TEST(History, HashTracksContent) {
  auto h = abab();
  const auto before = history_hash(h);
  EXPECT_EQ(before, history_hash(abab()));
  h.append(A, "x5");
  EXPECT_NE(before, history_hash(h));
}

TEST(History, DuplicateParticipantsRejected) {
  EXPECT_THROW(InteractionHistory({A, A}), std::invalid_argument);
  EXPECT_THROW(InteractionHistory(std::vector<SpeakerId>{}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// egocentric projection

TEST(Projection, TwoAgentViewsMirror) {
  const auto h = abab();
  EXPECT_EQ(roles(project(h, A)), (std::vector<std::string>{"SELF", "PARTNER", "SELF", "PARTNER"}));
  EXPECT_EQ(roles(project(h, B)), (std::vector<std::string>{"PARTNER", "SELF", "PARTNER", "SELF"}));
  const auto va = project(h, A);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(va.entries[i].content, h.turns()[i].content);
}

TEST(Projection, ThreeAgentDistinctAndCollapsed) {
  const SpeakerId C{"third"};
  InteractionHistory h({A, B, C});
  h.append(A, "a");
  h.append(B, "b");
  h.append(C, "c");
  EXPECT_EQ(roles(project(h, A, PartnerMode::distinct)),
            (std::vector<std::string>{"SELF", "PARTNER(responder)", "PARTNER(third)"}));
  EXPECT_EQ(roles(project(h, A, PartnerMode::collapsed)), (std::vector<std::string>{"SELF", "OTHER", "OTHER"}));
  EXPECT_EQ(roles(project(h, C, PartnerMode::collapsed)), (std::vector<std::string>{"OTHER", "OTHER", "SELF"}));
}

TEST(Projection, EmptyHistoryAndUnknownPerspective) {
  InteractionHistory h;
  EXPECT_TRUE(project(h, A).entries.empty());
  EXPECT_THROW(project(h, SpeakerId{"ghost"}), UnknownAgent);
}

TEST(Projection, PureFunctionOfHistory) {
  const auto h = abab();
  const auto before = history_hash(h);
  EXPECT_EQ(project(h, A), project(h, A));
  EXPECT_EQ(before, history_hash(h));
}

TEST(Rendering, ViewMapsSelfToAssistant) {
  const auto m = render_view(project(abab(), A), "sysA");
  EXPECT_EQ(message_roles(m), (std::vector<R>{R::system, R::assistant, R::user, R::assistant, R::user}));
  EXPECT_EQ(m.front().content, "sysA");
  const auto mb = render_view(project(abab(), B), "sysB");
  EXPECT_EQ(message_roles(mb), (std::vector<R>{R::system, R::user, R::assistant, R::user, R::assistant}));
}

TEST(Rendering, ConcatLabelsAreAbsolute) {
  const auto h = abab();
  const auto ma = render_concat(h, "s", A);
  const auto mb = render_concat(h, "s", B);
  EXPECT_EQ(message_roles(ma), (std::vector<R>{R::system, R::user, R::assistant, R::user, R::assistant}));
  EXPECT_EQ(message_roles(ma), message_roles(mb));
  // The client sees its own words as user turns under CONCAT, as assistant turns under ECP.
  EXPECT_NE(message_roles(ma), message_roles(render_view(project(h, A), "s")));
  const auto flipped = render_concat(h, "s", A, ConcatConvention{B});
  EXPECT_EQ(flipped[1].role, R::assistant);
}

TEST(Rendering, ConcatRequiresTwoAgents) {
  InteractionHistory h({A, B, SpeakerId{"third"}});
  EXPECT_THROW(render_concat(h, "s", A), std::invalid_argument);
  EXPECT_THROW(render_concat(abab(), "s", SpeakerId{"ghost"}), UnknownAgent);
}

TEST(Rendering, AgentMessagesByMode) {
  const auto h = abab();
  EXPECT_EQ(agent_messages(h, A, "s", HistoryMode::ecp), render_view(project(h, A), "s"));
  EXPECT_EQ(agent_messages(h, A, "s", HistoryMode::concat), render_concat(h, "s", A));
}

// ---------------------------------------------------------------------------
// termination detection

TEST(Termination, ScriptedVerdict) {
  MockChatBackend mock;
  const auto cfg = detector_defaults("d");
  const auto h = abab();
  mock.script(detector_messages(h, 4, cfg), R"({"should_terminate": true, "reason": "user thanked"})");
  const auto v = check_termination(mock, h, 4, cfg);
  EXPECT_TRUE(v.should_terminate);
  EXPECT_EQ(v.reason, "user thanked");
}

TEST(Termination, WindowLimitsTranscript) {
  const auto cfg = detector_defaults("d");
  const auto m = detector_messages(abab(), 2, cfg);
  EXPECT_EQ(m[1].content.find("x2"), std::string::npos);
  EXPECT_NE(m[1].content.find("[user] x3"), std::string::npos);
  EXPECT_NE(m[1].content.find("[assistant] x4"), std::string::npos);
  // Shorter histories are passed whole.
  const auto all = detector_messages(abab(), 10, cfg);
  EXPECT_NE(all[1].content.find("[user] x1"), std::string::npos);
}

TEST(Termination, OfflineRuleFollowsClosureCriteria) {
  auto mock = make_offline_mock();
  const auto cfg = detector_defaults("d");
  InteractionHistory h;
  h.append(A, "I keep worrying about money.");
  h.append(B, "That sounds stressful.");
  EXPECT_FALSE(check_termination(*mock, h, 4, cfg).should_terminate);
  h.append(A, "Thanks, that helps.");
  h.append(B, "Glad to hear it.");
  EXPECT_TRUE(check_termination(*mock, h, 4, cfg).should_terminate);
  h.append(A, "Thanks, but what about taxes?");
  h.append(B, "Let's look at that.");
  EXPECT_FALSE(check_termination(*mock, h, 4, cfg).should_terminate);
}

TEST(Termination, UnparseableVerdictContinues) {
  MockChatBackend mock; // default text is not JSON
  const auto v = check_termination(mock, abab(), 4, detector_defaults("d"));
  EXPECT_FALSE(v.should_terminate);
  EXPECT_EQ(v.reason, "unparseable");
}

// ---------------------------------------------------------------------------
// conversation loop

TEST(Conversation, CapYieldsTwiceMaxPairsUtterances) {
  MockChatBackend mock;
  mock.add_rule("never", never_terminate);
  ConversationSpec spec{"p0001", "p0001-c01", HistoryMode::ecp, Caps{3, 4, 1}, 11, {}, {}, {}};
  const auto r = run_conversation(mock, sample_persona(), mock_agents(), spec);
  ASSERT_EQ(r.turns.size(), 6u);
  EXPECT_EQ(r.termination_reason, "max_turns");
  for (std::size_t i = 0; i < r.turns.size(); ++i) {
    EXPECT_EQ(r.turns[i].index, i + 1);
    EXPECT_EQ(r.turns[i].speaker, i % 2 == 0 ? A : B);
    EXPECT_FALSE(r.turns[i].content.empty());
  }
  EXPECT_EQ(r.run_meta.caps, (Caps{3, 4, 1}));
  EXPECT_EQ(r.run_meta.client_model, "mock-client");
}

TEST(Conversation, DetectorFiresAtActivation) {
  MockChatBackend mock;
  mock.add_rule("stop", always_terminate);
  ConversationSpec spec{"p", "c", HistoryMode::ecp, Caps{10, 4, 2}, 1, {}, {}, {}};
  const auto r = run_conversation(mock, sample_persona(), mock_agents(), spec);
  EXPECT_EQ(r.turns.size(), 4u);
  EXPECT_EQ(r.termination_reason, "closure");
}

TEST(Conversation, DetectorNotConsultedBeforeActivation) {
  MockChatBackend mock;
  std::atomic<int> detector_calls{0};
  mock.add_rule("count", [&](const GenerationConfig& c, std::span<const ChatMessage> m) {
    if (c.system_prompt == prompts::kTerminationDetector) ++detector_calls;
    return always_terminate(c, m);
  });
  ConversationSpec spec{"p", "c", HistoryMode::ecp, Caps{10, 4, 4}, 1, {}, {}, {}};
  const auto r = run_conversation(mock, sample_persona(), mock_agents(), spec);
  EXPECT_EQ(r.turns.size(), 8u);
  EXPECT_EQ(detector_calls.load(), 1);
}

TEST(Conversation, ClientSystemPromptCarriesPersona) {
  MockChatBackend mock;
  std::vector<std::string> client_systems;
  std::mutex mu;
  mock.add_rule("spy", [&](const GenerationConfig& c, std::span<const ChatMessage> m) -> std::optional<std::string> {
    if (c.model_id == "mock-client") {
      std::lock_guard lock(mu);
      client_systems.push_back(m.front().content);
    }
    return never_terminate(c, m);
  });
  ConversationSpec spec{"p", "c", HistoryMode::ecp, Caps{2, 4, 1}, 1, {}, {}, {}};
  run_conversation(mock, sample_persona(), mock_agents(), spec);
  ASSERT_EQ(client_systems.size(), 2u);
  EXPECT_TRUE(client_systems[0].starts_with(sample_persona().text));
}

TEST(Conversation, ModesRenderDifferently) {
  MockChatBackend mock;
  mock.add_rule("never", never_terminate);
  ConversationSpec ecp{"p", "c", HistoryMode::ecp, Caps{3, 4, 1}, 5, {}, {}, {}};
  auto concat = ecp;
  concat.mode = HistoryMode::concat;
  const auto re = run_conversation(mock, sample_persona(), mock_agents(), ecp);
  const auto rc = run_conversation(mock, sample_persona(), mock_agents(), concat);
  // The opening turn sees an identical (empty) history.
  EXPECT_EQ(re.turns[0].content, rc.turns[0].content);
  EXPECT_NE(re.turns[2].content, rc.turns[2].content);
  EXPECT_EQ(rc.run_meta.history_mode, HistoryMode::concat);
}

TEST(Conversation, ObserverSeesEveryPairWithoutSideEffects) {
  MockChatBackend mock;
  mock.add_rule("never", never_terminate);
  std::vector<int> pairs;
  ConversationSpec spec{"p", "c", HistoryMode::ecp, Caps{4, 4, 1}, 3, {}, {}, {}};
  const auto plain = run_conversation(mock, sample_persona(), mock_agents(), spec);
  spec.observer = [&](const InteractionHistory& h, int pair) {
    pairs.push_back(pair);
    EXPECT_EQ(h.size(), static_cast<std::size_t>(2 * pair));
  };
  const auto observed = run_conversation(mock, sample_persona(), mock_agents(), spec);
  EXPECT_EQ(pairs, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(plain.turns, observed.turns);
}

TEST(Conversation, BackendFailureKeepsPartialRecord) {
  MockChatBackend mock;
  mock.add_rule("never", never_terminate);
  mock.add_rule("blank-on-third", [](const GenerationConfig& c, std::span<const ChatMessage> m)
                                      -> std::optional<std::string> {
    if (c.model_id == "mock-client" && m.size() >= 3) return std::string("  ");
    return std::nullopt;
  });
  ConversationSpec spec{"p", "c", HistoryMode::ecp, Caps{5, 4, 1}, 3, {}, {}, {}};
  try {
    run_conversation(mock, sample_persona(), mock_agents(), spec);
    FAIL() << "expected ConversationAborted";
  } catch (const ConversationAborted& e) {
    EXPECT_EQ(e.partial().turns.size(), 2u);
    EXPECT_TRUE(e.partial().termination_reason.starts_with("aborted"));
  }
}

TEST(Conversation, InvalidCapsRejected) {
  MockChatBackend mock;
  ConversationSpec spec{"p", "c", HistoryMode::ecp, Caps{0, 4, 1}, 3, {}, {}, {}};
  EXPECT_THROW(run_conversation(mock, sample_persona(), mock_agents(), spec), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// campaigns

namespace {
CampaignConfig small_campaign(int workers) {
  CampaignConfig cfg;
  cfg.schema = testing_support::small_schema();
  cfg.validator = validator_defaults("mock-validator");
  cfg.crafter = crafter_defaults("mock-crafter");
  cfg.agents = mock_agents();
  cfg.caps = Caps{6, 4, 2};
  cfg.n_personas = 5;
  cfg.convs_per_persona = 2;
  cfg.seed = 99;
  cfg.workers = workers;
  return cfg;
}
} // namespace

TEST(Campaign, ProducesEveryConversationInOrder) {
  auto mock = make_offline_mock();
  std::vector<std::string> sunk;
  const auto result = run_campaign(*mock, small_campaign(3), [&](const ConversationRecord& r) {
    sunk.push_back(r.conversation_id);
  });
  ASSERT_EQ(result.records.size(), 10u);
  EXPECT_TRUE(result.persona_gaps.empty());
  EXPECT_TRUE(result.aborted.empty());
  EXPECT_EQ(sunk.front(), "p0001-c01");
  EXPECT_EQ(sunk[1], "p0001-c02");
  EXPECT_EQ(sunk.back(), "p0005-c02");
  for (const auto& r : result.records) {
    EXPECT_TRUE(r.persona.text.starts_with("You are"));
    EXPECT_EQ(r.turns.size() % 2, 0u);
    EXPECT_LE(r.turns.size(), 12u);
    EXPECT_GE(r.turns.size(), 4u);
    EXPECT_EQ(r.turns.front().speaker, A);
  }
  // Repeated conversations of a persona differ.
  EXPECT_NE(result.records[0].turns[0].content, result.records[1].turns[0].content);
}

TEST(Campaign, DeterministicAcrossWorkerCounts) {
  auto m1 = make_offline_mock();
  auto m2 = make_offline_mock();
  const auto a = run_campaign(*m1, small_campaign(1));
  const auto b = run_campaign(*m2, small_campaign(4));
  EXPECT_EQ(a.records, b.records);
}

TEST(Campaign, ModesSharePersonas) {
  auto mock = make_offline_mock();
  auto cfg = small_campaign(2);
  const auto ecp = run_campaign(*mock, cfg);
  cfg.mode = HistoryMode::concat;
  const auto concat = run_campaign(*mock, cfg);
  ASSERT_EQ(ecp.records.size(), concat.records.size());
  for (std::size_t i = 0; i < ecp.records.size(); ++i) {
    EXPECT_EQ(ecp.records[i].persona, concat.records[i].persona);
    EXPECT_EQ(ecp.records[i].run_meta.conversation_seed, concat.records[i].run_meta.conversation_seed);
  }
}

TEST(Campaign, ExhaustedPersonaLeavesGap) {
  // Reject everything for the validator; other roles follow the offline rules.
  MockChatBackend strict;
  strict.add_rule("reject", [](const GenerationConfig& c, std::span<const ChatMessage>) -> std::optional<std::string> {
    if (c.system_prompt == prompts::kPersonaValidator) return std::string(R"({"valid": false})");
    return std::nullopt;
  });
  install_offline_rules(strict);
  auto cfg = small_campaign(1);
  cfg.max_persona_attempts = 3;
  const auto result = run_campaign(strict, cfg);
  EXPECT_TRUE(result.records.empty());
  ASSERT_EQ(result.persona_gaps.size(), 5u);
  EXPECT_EQ(result.persona_gaps[0].persona_id, "p0001");
}

// ---------------------------------------------------------------------------
// one-shot emulation

TEST(Emulation, SharedConfigReproducesOneShot) {
  MockChatBackend mock;
  GenerationConfig g{"shared", 0.0, 64, "Write a dialogue.", {}};
  EXPECT_TRUE(emulate_one_shot_check(mock, g, 6));
  EXPECT_TRUE(emulate_one_shot_check(mock, g, 0));
  EXPECT_EQ(generate_one_shot(mock, g, 6).size(), 6u);
}

TEST(Emulation, DistinctRoleConfigsDiverge) {
  MockChatBackend mock;
  GenerationConfig a{"role-a", 0.0, 64, "Write a dialogue.", {}};
  GenerationConfig b{"role-b", 0.0, 64, "Write a dialogue.", {}};
  const auto s = alternating_schedule(6);
  EXPECT_NE(generate_per_role(mock, a, b, s), generate_one_shot(mock, a, 6));
  const auto per_role = generate_per_role(mock, a, b, s);
  EXPECT_TRUE(per_role[1].starts_with("role-b:"));
  EXPECT_TRUE(per_role[2].starts_with("role-a:"));
}

TEST(Emulation, ScheduleAlternates) {
  const auto s = alternating_schedule(3);
  EXPECT_EQ(s, (std::vector<ScheduleRole>{ScheduleRole::a, ScheduleRole::b, ScheduleRole::a}));
}
