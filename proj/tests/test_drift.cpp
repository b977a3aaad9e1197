#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spasm/spasm.hpp"
#include "support.hpp"

using namespace spasm;

namespace {

GenerationConfig probe_cfg() { return {"mock-client", 0.0, 64, std::string(prompts::kClientAgent), {}}; }

ProbeResponse response(ProbeDimension d, int t, std::vector<double> v) {
  return {d, t, "answer", {std::move(v), "m"}};
}

// Independent pooled two-sample t statistic.
double pooled_t(const std::vector<double>& a, const std::vector<double>& b) {
  auto m = [](const std::vector<double>& x) {
    double s = 0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
  };
  auto ss = [&](const std::vector<double>& x) {
    double s = 0, mu = m(x);
    for (double v : x) s += (v - mu) * (v - mu);
    return s;
  };
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sp2 = (ss(a) + ss(b)) / (na + nb - 2);
  return (m(a) - m(b)) / std::sqrt(sp2 * (1 / na + 1 / nb));
}

} // namespace

// ---------------------------------------------------------------------------
// drift score

TEST(DriftScore, Identities) {
  const std::vector<double> u{1, 2, 3};
  EXPECT_NEAR(drift_score(u, u), 0.0, 1e-15);
  const std::vector<double> neg{-1, -2, -3};
  EXPECT_NEAR(drift_score(u, neg), 2.0, 1e-15);
  const std::vector<double> e1{1, 0}, e2{0, 1};
  EXPECT_NEAR(drift_score(e1, e2), 1.0, 1e-15);
  const std::vector<double> scaled{2, 4, 6};
  EXPECT_NEAR(drift_score(u, scaled), 0.0, 1e-15);
}

TEST(DriftScore, MatchesHalfSquaredDistanceOfUnitVectors) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto a = oracle::random_vec(rng, 17), b = oracle::random_vec(rng, 17);
    const double d = drift_score(a, b);
    EXPECT_NEAR(d, oracle::cos_dist(a, b), 1e-12);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
  }
}

TEST(DriftScore, Errors) {
  const std::vector<double> a{1, 2}, b{1, 2, 3}, z{0, 0};
  EXPECT_THROW(drift_score(a, b), EmbeddingDimensionMismatch);
  EXPECT_THROW(drift_score(a, z), ZeroVector);
}

// ---------------------------------------------------------------------------
// probing

TEST(Probing, BaselineUsesPersonaPromptOnly) {
  MockChatBackend chat;
  MockEmbeddingBackend emb(16);
  const auto base = capture_baseline(chat, emb, "m", "SYS", ProbeSet{}, probe_cfg());
  ASSERT_EQ(base.size(), 3u);
  EXPECT_EQ(base[0].dimension, ProbeDimension::concerns);
  EXPECT_EQ(base[2].dimension, ProbeDimension::motivation);
  for (const auto& r : base) {
    EXPECT_EQ(r.t, 0);
    EXPECT_EQ(r.embedding.dimension(), 16u);
  }
  EXPECT_EQ(chat.calls(), 3u);
  EXPECT_EQ(emb.batches(), 1u);
}

TEST(Probing, NonzeroTemperatureRejected) {
  MockChatBackend chat;
  MockEmbeddingBackend emb(8);
  auto cfg = probe_cfg();
  cfg.temperature = 0.7;
  EXPECT_THROW(capture_baseline(chat, emb, "m", "SYS", ProbeSet{}, cfg), std::invalid_argument);
  EXPECT_THROW(probe_at_turn(chat, emb, "m", "SYS", InteractionHistory{}, ProbeSet{}, cfg, HistoryMode::ecp),
               std::invalid_argument);
}

TEST(Probing, EmptyPrefixEqualsBaseline) {
  MockChatBackend chat;
  MockEmbeddingBackend emb(16);
  const auto base = capture_baseline(chat, emb, "m", "SYS", ProbeSet{}, probe_cfg());
  for (auto mode : {HistoryMode::ecp, HistoryMode::concat}) {
    const auto cp = probe_at_turn(chat, emb, "m", "SYS", InteractionHistory{}, ProbeSet{}, probe_cfg(), mode);
    EXPECT_EQ(cp.t, 0);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(cp.responses[i].answer_text, base[i].answer_text);
      EXPECT_NEAR(drift_score(cp.responses[i].embedding, base[i].embedding), 0.0, 1e-12);
    }
  }
}

TEST(Probing, ProbeMessagesAppendQuestionToAgentView) {
  InteractionHistory h;
  h.append(SpeakerId::client(), "c1");
  h.append(SpeakerId::responder(), "r1");
  const auto m = probe_messages(h, SpeakerId::client(), "S", "Q?", HistoryMode::ecp);
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m[1].role, MessageRole::assistant);
  EXPECT_EQ(m[3].role, MessageRole::user);
  EXPECT_EQ(m[3].content, "Q?");
  const auto mc = probe_messages(h, SpeakerId::client(), "S", "Q?", HistoryMode::concat);
  EXPECT_EQ(mc[1].role, MessageRole::user);
}

TEST(Probing, HistoryUntouchedAndConversationUnchanged) {
  // Same conversation with and without probes in between pairs.
  MockChatBackend chat;
  chat.add_rule("never", [](const GenerationConfig& c, std::span<const ChatMessage>) -> std::optional<std::string> {
    if (c.system_prompt != prompts::kTerminationDetector) return std::nullopt;
    return std::string(R"({"should_terminate": false})");
  });
  MockEmbeddingBackend emb(16);
  AgentConfigs agents{client_defaults("mock-client"), responder_defaults("mock-responder"),
                      detector_defaults("mock-detector")};
  agents.client.temperature = agents.responder.temperature = 0.0;
  const auto persona = testing_support::sample_persona();
  ConversationSpec spec{"p", "c", HistoryMode::ecp, Caps{4, 4, 1}, 8, {}, {}, {}};
  const auto plain = run_conversation(chat, persona, agents, spec);

  std::vector<ProbeCheckpoint> cps;
  spec.observer = [&](const InteractionHistory& h, int) {
    auto cfg = agents.client;
    cps.push_back(probe_at_turn(chat, emb, "m", client_system_prompt(persona, agents.client.system_prompt), h,
                                ProbeSet{}, cfg, HistoryMode::ecp));
  };
  const auto probed = run_conversation(chat, persona, agents, spec);
  EXPECT_EQ(plain.turns, probed.turns);
  ASSERT_EQ(cps.size(), 4u);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    EXPECT_EQ(cps[i].t, static_cast<int>(2 * (i + 1)));
    EXPECT_EQ(cps[i].hash_before, cps[i].hash_after);
  }
}

// ---------------------------------------------------------------------------
// curves and AUC

TEST(Curves, ConstantDriftAuc) {
  DriftCurve c{"u", ProbeDimension::concerns, {}};
  for (int t = 2; t <= 20; t += 2) c.points.push_back({t, 0.3});
  const auto r = curve_auc(c);
  EXPECT_NEAR(r.auc, 18 * 0.3, 1e-12);
  EXPECT_NEAR(mean_drift(r.curve), 0.3, 1e-12);
}

TEST(Curves, TwoPointAndZero) {
  EXPECT_NEAR(curve_auc({"u", ProbeDimension::emotion, {{2, 0.0}, {4, 0.2}}}).auc, 0.2, 1e-12);
  EXPECT_EQ(curve_auc({"u", ProbeDimension::emotion, {{2, 0.0}, {4, 0.0}, {6, 0.0}}}).auc, 0.0);
}

TEST(Curves, UnsortedInputSortedAndDuplicatesRejected) {
  const auto r = curve_auc({"u", ProbeDimension::emotion, {{4, 0.2}, {2, 0.0}}});
  EXPECT_EQ(r.curve.points.front().t, 2);
  EXPECT_NEAR(r.auc, 0.2, 1e-12);
  EXPECT_THROW(curve_auc({"u", ProbeDimension::emotion, {{2, 0.1}, {2, 0.2}}}), std::invalid_argument);
}

TEST(Curves, SinglePointFlagged) {
  const auto r = curve_auc({"u", ProbeDimension::motivation, {{2, 0.5}}});
  EXPECT_TRUE(r.insufficient_points);
  EXPECT_EQ(r.auc, 0.0);
  EXPECT_THROW(mean_drift(DriftCurve{}), std::invalid_argument);
}

TEST(Curves, FromResponsesGrowWithRotation) {
  std::vector<ProbeResponse> base{response(ProbeDimension::concerns, 0, {1, 0}),
                                  response(ProbeDimension::emotion, 0, {0, 1})};
  std::vector<ProbeResponse> rs;
  for (int k = 1; k <= 5; ++k) {
    const double a = 0.2 * k;
    rs.push_back(response(ProbeDimension::concerns, 2 * k, {std::cos(a), std::sin(a)}));
    rs.push_back(response(ProbeDimension::emotion, 2 * k, {0, 1}));
  }
  const auto curves = drift_curve_and_auc("u", rs, base);
  ASSERT_EQ(curves.size(), 2u);
  const auto& concerns = curves[0].curve.points;
  ASSERT_EQ(concerns.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(concerns[i].drift, 1 - std::cos(0.2 * (i + 1)), 1e-12);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GT(concerns[i].drift, concerns[i - 1].drift);
  EXPECT_NEAR(curves[1].auc, 0.0, 1e-12);
}

TEST(Curves, MissingBaselineDimension) {
  std::vector<ProbeResponse> base{response(ProbeDimension::concerns, 0, {1, 0})};
  std::vector<ProbeResponse> rs{response(ProbeDimension::motivation, 2, {1, 0})};
  EXPECT_THROW(drift_curve_and_auc("u", rs, base), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// condition comparison

TEST(Compare, SeparatedSamples) {
  const std::vector<double> e{0, 1}, c{2, 3};
  const auto r = compare_conditions(e, c);
  EXPECT_NEAR(r.delta, -2.0, 1e-12);
  ASSERT_TRUE(r.cohens_d);
  EXPECT_NEAR(*r.cohens_d, -2.0 / std::sqrt(0.5), 1e-12);
  ASSERT_TRUE(r.t);
  EXPECT_NEAR(*r.t, pooled_t(e, c), 1e-12);
  EXPECT_NEAR(r.p_value, oracle::t_two_sided(*r.t, 2), 1e-9);
}

TEST(Compare, IdenticalSamples) {
  const std::vector<double> x{0.1, 0.2, 0.3};
  const auto r = compare_conditions(x, x);
  EXPECT_NEAR(*r.cohens_d, 0.0, 1e-15);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
}

TEST(Compare, ConstantSamplesHaveUndefinedEffect) {
  const std::vector<double> a{0.5, 0.5}, b{0.5, 0.5, 0.5};
  const auto r = compare_conditions(a, b);
  EXPECT_FALSE(r.cohens_d);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_THROW(compare_conditions({}, b), std::invalid_argument);
}

TEST(Compare, TTestMatchesOracleOnRandomSamples) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0, 1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(5 + rep), b(7 + rep % 4);
    for (auto& v : a) v = g(rng) + 0.3;
    for (auto& v : b) v = g(rng);
    const auto tt = stats::t_test(a, b);
    ASSERT_TRUE(tt.t);
    EXPECT_NEAR(*tt.t, pooled_t(a, b), 1e-10);
    EXPECT_NEAR(tt.p, oracle::t_two_sided(*tt.t, tt.df), 1e-9);
  }
}

TEST(Compare, PermutationTestAgreesInDirection) {
  const std::vector<double> e{0.1, 0.15, 0.12, 0.09, 0.11}, c{0.3, 0.35, 0.32, 0.29, 0.31};
  ComparisonOptions o;
  o.permutation = true;
  o.n_permutations = 2000;
  o.seed = 1;
  const auto r = compare_conditions(e, c, o);
  EXPECT_EQ(r.test, "permutation");
  // Only the two fully separated labellings out of C(10,5) = 252 are as extreme.
  EXPECT_NEAR(r.p_value, 2.0 / 252.0, 0.01);
  EXPECT_EQ(compare_conditions(e, c, o).p_value, r.p_value);
}

TEST(Compare, RowsGroupByUnit) {
  std::vector<DriftRow> ecp, concat;
  for (int u = 0; u < 3; ++u)
    for (int t : {2, 4}) {
      ecp.push_back({"e" + std::to_string(u), ProbeDimension::concerns, t, "", 0.1 * (u + 1), HistoryMode::ecp});
      concat.push_back({"c" + std::to_string(u), ProbeDimension::concerns, t, "", 0.5, HistoryMode::concat});
    }
  const auto cmp = compare_rows(ecp, concat, ProbeSet{});
  ASSERT_EQ(cmp.size(), 2u); // only concerns has rows
  EXPECT_EQ(cmp[0].statistic, "mean_drift");
  EXPECT_EQ(cmp[0].n_ecp, 3u);
  EXPECT_NEAR(cmp[0].delta, 0.2 - 0.5, 1e-12);
  EXPECT_EQ(cmp[1].statistic, "auc");
  EXPECT_NEAR(cmp[1].delta, 2 * 0.2 - 2 * 0.5, 1e-12);
}

TEST(DriftRowJson, RoundTrip) {
  const DriftRow r{"p0001-c01", ProbeDimension::emotion, 6, "calm", 0.25, HistoryMode::concat};
  const json j = r;
  EXPECT_EQ(j.at("history_mode"), "CONCAT");
  EXPECT_EQ(j.at("dimension"), "emotion");
  EXPECT_EQ(j.get<DriftRow>(), r);
}

// ---------------------------------------------------------------------------
// full study on the offline mock

TEST(DriftStudy, RowsAuditsAndPairing) {
  auto chat = make_offline_mock();
  MockEmbeddingBackend emb(32);
  CampaignConfig cfg;
  cfg.schema = testing_support::small_schema();
  cfg.validator = validator_defaults("mock-validator");
  cfg.crafter = crafter_defaults("mock-crafter");
  cfg.agents = {client_defaults("mock-client"), responder_defaults("mock-responder"),
                detector_defaults("mock-detector")};
  cfg.caps = Caps{6, 4, 2};
  cfg.n_personas = 3;
  cfg.convs_per_persona = 2;
  cfg.seed = 5;
  cfg.workers = 2;
  DriftSettings s;
  s.embed_model = "mock-embed";
  s.interval_pairs = 1;

  std::size_t sunk = 0;
  const auto study = run_drift_study(*chat, emb, cfg, s, [&](const DriftRow&) { ++sunk; });
  EXPECT_EQ(study.personas.size(), 3u);
  EXPECT_EQ(study.baselines.size(), 3u);

  for (const auto* cond : {&study.ecp, &study.concat}) {
    ASSERT_EQ(cond->campaign.records.size(), 6u);
    std::size_t expected_rows = 0;
    for (const auto& r : cond->campaign.records) {
      expected_rows += 3 * (r.turns.size() / 2);
      EXPECT_EQ(r.run_meta.client_temperature, 0.0);
    }
    EXPECT_EQ(cond->rows.size(), expected_rows);
    EXPECT_EQ(cond->audits.size(), expected_rows / 3);
    for (const auto& a : cond->audits) {
      EXPECT_FALSE(a.failed);
      EXPECT_EQ(a.hash_before, a.hash_after);
      EXPECT_EQ(a.hash_before, a.hash_resumed);
      EXPECT_EQ(a.t % 2, 0);
    }
    for (const auto& r : cond->rows) {
      EXPECT_EQ(r.mode, cond->mode);
      EXPECT_GE(r.drift, 0.0);
      EXPECT_LE(r.drift, 2.0);
    }
  }
  EXPECT_EQ(sunk, study.ecp.rows.size() + study.concat.rows.size());
  // Conversation seeds are shared between conditions.
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_EQ(study.ecp.campaign.records[i].run_meta.conversation_seed,
              study.concat.campaign.records[i].run_meta.conversation_seed);
  EXPECT_EQ(study.comparisons.size(), 6u);
}

TEST(DriftStudy, IntervalSpacesCheckpoints) {
  auto chat = make_offline_mock(OfflineMockOptions{std::nullopt});
  MockEmbeddingBackend emb(16);
  CampaignConfig cfg;
  cfg.schema = testing_support::small_schema();
  cfg.validator = validator_defaults("v");
  cfg.crafter = crafter_defaults("c");
  cfg.agents = {client_defaults("mock-client"), responder_defaults("mock-responder"),
                detector_defaults("mock-detector")};
  cfg.caps = Caps{6, 4, 2};
  cfg.n_personas = 1;
  cfg.convs_per_persona = 1;
  cfg.workers = 1;
  DriftSettings s;
  s.interval_pairs = 2;
  const auto study = run_drift_study(*chat, emb, cfg, s);
  std::set<int> ts;
  for (const auto& r : study.ecp.rows) ts.insert(r.t);
  EXPECT_EQ(ts, (std::set<int>{4, 8, 12}));
  EXPECT_THROW(run_drift_study(*chat, emb, cfg, DriftSettings{ProbeSet{}, "m", 0, {}}), std::invalid_argument);
}
