#pragma once

// Persona drift: probe answers at checkpoints compared against a baseline
// taken before the conversation starts.
//
// Checkpoint t counts utterances. Probing happens between turn pairs through
// a separate call built from a copy of the history prefix, so the live
// conversation never sees the probe.

#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "spasm/backend.hpp"
#include "spasm/orchestrator.hpp"
#include "spasm/prompts.hpp"
#include "spasm/stats.hpp"

namespace spasm {

using prompts::ProbeDimension;

// 1 - cos(u, v). Equal to half the squared distance between the normalised
// vectors, so it lies in [0, 2] and ignores positive scaling.
inline double drift_score(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw EmbeddingDimensionMismatch("drift_score: dimensions " + std::to_string(u.size()) +
                                     " and " + std::to_string(v.size()));
  if (u.empty()) throw EmbeddingDimensionMismatch("drift_score: empty vectors");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0 || nv == 0) throw ZeroVector("drift_score: zero vector");
  const double cos = std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
  return 1.0 - cos;
}

inline double drift_score(const EmbeddingVector& u, const EmbeddingVector& v) {
  return drift_score(u.values, v.values);
}

struct ProbeResponse {
  ProbeDimension dimension = ProbeDimension::concerns;
  int t = 0; // 0 for the baseline
  std::string answer_text;
  EmbeddingVector embedding;
};

struct ProbeSet {
  std::vector<prompts::ProbeQuestion> probes{prompts::kDefaultProbes.begin(),
                                             prompts::kDefaultProbes.end()};
};

inline std::vector<ChatMessage> baseline_messages(std::string_view system_prompt,
                                                  std::string_view question) {
  return {{MessageRole::system, std::string(system_prompt)},
          {MessageRole::user, std::string(question)}};
}

// The probed agent's own conditioning context for the prefix, followed by
// the question. With an empty prefix this is exactly the baseline request.
inline std::vector<ChatMessage> probe_messages(const InteractionHistory& prefix,
                                               const SpeakerId& agent,
                                               std::string_view system_prompt,
                                               std::string_view question, HistoryMode mode,
                                               const ConcatConvention& concat = {}) {
  auto messages = agent_messages(prefix, agent, system_prompt, mode, concat);
  messages.push_back({MessageRole::user, std::string(question)});
  return messages;
}

namespace detail {
inline void require_deterministic(const GenerationConfig& cfg, const char* who) {
  if (cfg.temperature != 0.0)
    throw std::invalid_argument(std::string(who) + ": probe calls must use temperature 0");
}

inline std::vector<ProbeResponse> answer_and_embed(ChatBackend& chat, EmbeddingBackend& embedder,
                                                   const std::string& embed_model,
                                                   const GenerationConfig& cfg,
                                                   const ProbeSet& probes, int t,
                                                   const auto& build_messages) {
  std::vector<ProbeResponse> out;
  std::vector<std::string> answers;
  for (const auto& q : probes.probes) {
    answers.push_back(detail::trim(chat_complete(chat, cfg, build_messages(q.text))));
    out.push_back({q.dimension, t, answers.back(), {}});
  }
  auto vectors = embed(embedder, answers, embed_model);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].embedding = std::move(vectors[i]);
  return out;
}
} // namespace detail

inline std::vector<ProbeResponse> capture_baseline(ChatBackend& chat, EmbeddingBackend& embedder,
                                                   const std::string& embed_model,
                                                   std::string_view system_prompt,
                                                   const ProbeSet& probes,
                                                   const GenerationConfig& cfg) {
  detail::require_deterministic(cfg, "capture_baseline");
  return detail::answer_and_embed(chat, embedder, embed_model, cfg, probes, 0,
                                  [&](std::string_view q) { return baseline_messages(system_prompt, q); });
}

struct ProbeCheckpoint {
  int t = 0;
  std::uint64_t hash_before = 0;
  std::uint64_t hash_after = 0;
  std::vector<ProbeResponse> responses;
};

// Probes the agent on the history as it stands (t = its length). Takes the
// history by const reference and checks its fingerprint on the way out.
inline ProbeCheckpoint probe_at_turn(ChatBackend& chat, EmbeddingBackend& embedder,
                                     const std::string& embed_model,
                                     std::string_view system_prompt,
                                     const InteractionHistory& history, const ProbeSet& probes,
                                     const GenerationConfig& cfg, HistoryMode mode,
                                     const SpeakerId& agent = SpeakerId::client(),
                                     const ConcatConvention& concat = {}) {
  detail::require_deterministic(cfg, "probe_at_turn");
  ProbeCheckpoint cp;
  cp.t = static_cast<int>(history.size());
  cp.hash_before = history_hash(history);
  cp.responses = detail::answer_and_embed(
      chat, embedder, embed_model, cfg, probes, cp.t, [&](std::string_view q) {
        return probe_messages(history, agent, system_prompt, q, mode, concat);
      });
  cp.hash_after = history_hash(history);
  if (cp.hash_after != cp.hash_before)
    throw std::logic_error("probe_at_turn: conversation history changed during probing");
  return cp;
}

struct DriftPoint {
  int t = 0;
  double drift = 0;
  bool operator==(const DriftPoint&) const = default;
};

struct DriftCurve {
  std::string unit_id;
  ProbeDimension dimension = ProbeDimension::concerns;
  std::vector<DriftPoint> points;
};

struct CurveAuc {
  DriftCurve curve;
  double auc = 0;
  bool insufficient_points = false; // fewer than two points; auc forced to 0
};

inline double mean_drift(const DriftCurve& c) {
  if (c.points.empty()) throw std::invalid_argument("mean_drift: empty curve");
  double s = 0;
  for (const auto& p : c.points) s += p.drift;
  return s / static_cast<double>(c.points.size());
}

inline CurveAuc curve_auc(DriftCurve curve) {
  std::sort(curve.points.begin(), curve.points.end(),
            [](const DriftPoint& a, const DriftPoint& b) { return a.t < b.t; });
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    if (curve.points[i].t == curve.points[i - 1].t)
      throw std::invalid_argument("drift curve has duplicate checkpoint t=" +
                                  std::to_string(curve.points[i].t));
  CurveAuc out{std::move(curve), 0.0, false};
  if (out.curve.points.size() < 2) {
    out.insufficient_points = true;
    return out;
  }
  std::vector<double> x, y;
  for (const auto& p : out.curve.points) {
    x.push_back(p.t);
    y.push_back(p.drift);
  }
  out.auc = stats::trapezoid(x, y);
  return out;
}

// One curve per baseline dimension, with the checkpoints that were answered
// (failed checkpoints simply leave a gap).
inline std::vector<CurveAuc> drift_curve_and_auc(const std::string& unit_id,
                                                 std::span<const ProbeResponse> responses,
                                                 std::span<const ProbeResponse> baseline) {
  std::vector<CurveAuc> out;
  for (const auto& b : baseline) {
    if (b.t != 0) throw std::invalid_argument("baseline responses must have t = 0");
    DriftCurve c{unit_id, b.dimension, {}};
    for (const auto& r : responses)
      if (r.dimension == b.dimension && r.t > 0)
        c.points.push_back({r.t, drift_score(r.embedding, b.embedding)});
    out.push_back(curve_auc(std::move(c)));
  }
  for (const auto& r : responses) {
    const bool covered = std::any_of(baseline.begin(), baseline.end(),
                                     [&](const ProbeResponse& b) { return b.dimension == r.dimension; });
    if (!covered)
      throw std::invalid_argument(std::string("no baseline for dimension ") +
                                  std::string(to_string(r.dimension)));
  }
  return out;
}

struct DriftRow {
  std::string unit_id;
  ProbeDimension dimension = ProbeDimension::concerns;
  int t = 0;
  std::string answer_text;
  double drift = 0;
  HistoryMode mode = HistoryMode::ecp;

  bool operator==(const DriftRow&) const = default;
};

inline ProbeDimension parse_probe_dimension(std::string_view s) {
  for (auto d : {ProbeDimension::concerns, ProbeDimension::emotion, ProbeDimension::motivation})
    if (to_string(d) == s) return d;
  throw FormatError("unknown probe dimension '" + std::string(s) + "'");
}

inline void to_json(json& j, const DriftRow& r) {
  j = json{{"unit_id", r.unit_id},
           {"dimension", to_string(r.dimension)},
           {"t", r.t},
           {"answer_text", r.answer_text},
           {"drift", r.drift},
           {"history_mode", to_string(r.mode)}};
}

inline void from_json(const json& j, DriftRow& r) {
  r.unit_id = j.at("unit_id").get<std::string>();
  r.dimension = parse_probe_dimension(j.at("dimension").get<std::string>());
  r.t = j.at("t").get<int>();
  r.answer_text = j.value("answer_text", std::string{});
  r.drift = j.at("drift").get<double>();
  r.mode = parse_history_mode(j.value("history_mode", std::string("ECP")));
}

struct ComparisonOptions {
  bool permutation = false; // permutation test instead of Student's t
  std::size_t n_permutations = 10000;
  std::uint64_t seed = 0;
};

struct DriftComparison {
  std::string dimension;
  std::string statistic; // "mean_drift" or "auc"
  double delta = 0;      // mean(ECP) - mean(CONCAT)
  std::optional<double> cohens_d;
  std::optional<double> t;
  double p_value = 1.0;
  std::string test;
  std::size_t n_ecp = 0;
  std::size_t n_concat = 0;
};

inline DriftComparison compare_conditions(std::span<const double> ecp,
                                          std::span<const double> concat,
                                          const ComparisonOptions& opts = {}) {
  if (ecp.empty() || concat.empty())
    throw std::invalid_argument("compare_conditions: both samples must be nonempty");
  DriftComparison c;
  c.delta = stats::mean(ecp) - stats::mean(concat);
  c.cohens_d = stats::cohens_d(ecp, concat);
  c.n_ecp = ecp.size();
  c.n_concat = concat.size();
  const auto tt = stats::t_test(ecp, concat);
  c.t = tt.t;
  if (opts.permutation) {
    c.p_value = stats::permutation_p(ecp, concat, opts.n_permutations, opts.seed);
    c.test = "permutation";
  } else {
    c.p_value = tt.p;
    c.test = "student_t";
  }
  return c;
}

// ---------------------------------------------------------------------------
// Paired ECP / CONCAT study.

struct DriftSettings {
  ProbeSet probes;
  std::string embed_model = "text-embedding-3-large";
  // Probe after every `interval_pairs` completed turn pairs; the first
  // checkpoint is t = 2 * interval_pairs utterances.
  int interval_pairs = 1;
  ComparisonOptions comparison;
};

struct CheckpointAudit {
  std::string unit_id;
  HistoryMode mode = HistoryMode::ecp;
  int t = 0;
  std::uint64_t hash_before = 0;
  std::uint64_t hash_after = 0;     // inside the probe call
  std::uint64_t hash_resumed = 0;   // history seen by the next loop step
  bool failed = false;
};

struct ConditionResult {
  HistoryMode mode = HistoryMode::ecp;
  CampaignResult campaign;
  std::vector<DriftRow> rows;
  std::vector<CheckpointAudit> audits;
};

struct DriftStudy {
  std::vector<PersonaEntry> personas;
  std::vector<PersonaGap> persona_gaps;
  std::map<std::string, std::vector<ProbeResponse>> baselines; // persona_id -> responses
  ConditionResult ecp;
  ConditionResult concat;
  std::vector<DriftComparison> comparisons; // per dimension, mean drift then AUC
};

// Per-unit summary values for one dimension of one condition.
inline std::map<std::string, CurveAuc> unit_curves(std::span<const DriftRow> rows,
                                                   ProbeDimension dim) {
  std::map<std::string, DriftCurve> curves;
  for (const auto& r : rows)
    if (r.dimension == dim) {
      auto& c = curves[r.unit_id];
      c.unit_id = r.unit_id;
      c.dimension = dim;
      c.points.push_back({r.t, r.drift});
    }
  std::map<std::string, CurveAuc> out;
  for (auto& [id, c] : curves) out.emplace(id, curve_auc(std::move(c)));
  return out;
}

inline std::vector<DriftComparison> compare_rows(std::span<const DriftRow> ecp_rows,
                                                 std::span<const DriftRow> concat_rows,
                                                 const ProbeSet& probes,
                                                 const ComparisonOptions& opts = {}) {
  std::vector<DriftComparison> out;
  for (const auto& q : probes.probes) {
    const auto e = unit_curves(ecp_rows, q.dimension);
    const auto c = unit_curves(concat_rows, q.dimension);
    if (e.empty() || c.empty()) continue;
    std::vector<double> em, cm, ea, ca;
    for (const auto& [id, cu] : e) {
      em.push_back(mean_drift(cu.curve));
      ea.push_back(cu.auc);
    }
    for (const auto& [id, cu] : c) {
      cm.push_back(mean_drift(cu.curve));
      ca.push_back(cu.auc);
    }
    auto by_mean = compare_conditions(em, cm, opts);
    by_mean.dimension = to_string(q.dimension);
    by_mean.statistic = "mean_drift";
    out.push_back(by_mean);
    auto by_auc = compare_conditions(ea, ca, opts);
    by_auc.dimension = to_string(q.dimension);
    by_auc.statistic = "auc";
    out.push_back(by_auc);
  }
  return out;
}

using DriftRowSink = std::function<void(const DriftRow&)>;

// Generates the ECP and CONCAT campaigns over one shared persona set and
// identical per-conversation seeds, probing the client between turn pairs.
inline DriftStudy run_drift_study(ChatBackend& chat, EmbeddingBackend& embedder,
                                  CampaignConfig cfg, const DriftSettings& settings,
                                  const DriftRowSink& row_sink = {}) {
  if (settings.interval_pairs < 1) throw std::invalid_argument("probe interval must be >= 1");
  for (auto* agent : {&cfg.agents.client, &cfg.agents.responder}) {
    if (agent->temperature != 0.0) {
      spdlog::warn("drift study: forcing {} temperature {} -> 0", agent->model_id,
                   agent->temperature);
      agent->temperature = 0.0;
    }
  }

  DriftStudy study;
  auto batch = build_personas(chat, cfg);
  study.personas = std::move(batch.personas);
  study.persona_gaps = std::move(batch.gaps);

  GenerationConfig probe_cfg = cfg.agents.client;
  probe_cfg.temperature = 0.0;

  std::map<std::string, std::string> system_prompts;
  for (const auto& p : study.personas) {
    const auto sys = client_system_prompt(p.description, cfg.agents.client.system_prompt);
    system_prompts[p.persona_id] = sys;
    study.baselines[p.persona_id] =
        capture_baseline(chat, embedder, settings.embed_model, sys, settings.probes, probe_cfg);
  }

  std::mutex sink_mutex;
  auto run_condition = [&](HistoryMode mode) {
    ConditionResult res;
    res.mode = mode;
    std::mutex mutex;
    CampaignConfig c = cfg;
    c.mode = mode;

    // Rows are buffered per unit and released in conversation order.
    std::map<std::string, std::vector<DriftRow>> unit_rows;
    std::map<std::string, std::vector<CheckpointAudit>> unit_audits;

    ObserverFactory observers = [&](const PersonaEntry& persona, const std::string& conv_id) {
      const auto& sys = system_prompts.at(persona.persona_id);
      const auto& base = study.baselines.at(persona.persona_id);
      // Fingerprint handed over to the next pair so the audit also covers
      // "history unchanged when the loop resumes".
      auto pending = std::make_shared<std::optional<std::size_t>>();
      return PairObserver([&, conv_id, mode, pending, sys_ptr = &sys, base_ptr = &base](
                              const InteractionHistory& history, int pairs) {
        if (*pending) {
          std::lock_guard lock(mutex);
          auto& a = unit_audits[conv_id][**pending];
          a.hash_resumed = history_hash(history.prefix(static_cast<std::size_t>(a.t)));
          pending->reset();
        }
        if (pairs % settings.interval_pairs != 0) return;
        CheckpointAudit audit{conv_id, mode, static_cast<int>(history.size()),
                              history_hash(history), 0, 0, false};
        std::vector<DriftRow> rows;
        try {
          const auto cp = probe_at_turn(chat, embedder, settings.embed_model, *sys_ptr, history,
                                        settings.probes, probe_cfg, mode, SpeakerId::client(),
                                        c.concat);
          audit.hash_after = cp.hash_after;
          for (const auto& r : cp.responses) {
            const auto b = std::find_if(base_ptr->begin(), base_ptr->end(),
                                        [&](const ProbeResponse& x) { return x.dimension == r.dimension; });
            rows.push_back({conv_id, r.dimension, cp.t, r.answer_text,
                            drift_score(r.embedding, b->embedding), mode});
          }
        } catch (const Error& e) {
          spdlog::warn("probe checkpoint {} t={} skipped: {}", conv_id, audit.t, e.what());
          audit.failed = true;
          audit.hash_after = history_hash(history);
        }
        audit.hash_resumed = history_hash(history);
        std::lock_guard lock(mutex);
        auto& audits = unit_audits[conv_id];
        audits.push_back(audit);
        *pending = audits.size() - 1;
        auto& dst = unit_rows[conv_id];
        dst.insert(dst.end(), rows.begin(), rows.end());
      });
    };

    RecordSink on_record = [&](const ConversationRecord& r) {
      std::vector<DriftRow> rows;
      {
        std::lock_guard lock(mutex);
        rows = unit_rows[r.conversation_id];
      }
      if (row_sink) {
        std::lock_guard lock(sink_mutex);
        for (const auto& row : rows) row_sink(row);
      }
    };

    res.campaign = run_conversations(chat, c, study.personas, on_record, observers);
    for (const auto& r : res.campaign.records) {
      auto& rows = unit_rows[r.conversation_id];
      res.rows.insert(res.rows.end(), rows.begin(), rows.end());
      auto& audits = unit_audits[r.conversation_id];
      res.audits.insert(res.audits.end(), audits.begin(), audits.end());
    }
    return res;
  };

  study.ecp = run_condition(HistoryMode::ecp);
  study.concat = run_condition(HistoryMode::concat);
  study.comparisons = compare_rows(study.ecp.rows, study.concat.rows, settings.probes,
                                   settings.comparison);
  return study;
}

} // namespace spasm
