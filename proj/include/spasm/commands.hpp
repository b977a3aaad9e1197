#pragma once

// The CLI verbs as library functions. Each takes the parsed RunConfig and the
// backends explicitly so tests can drive them with mocks and counters.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "spasm/agreement.hpp"
#include "spasm/analytics.hpp"
#include "spasm/annotation_service.hpp"
#include "spasm/config.hpp"
#include "spasm/drift.hpp"
#include "spasm/echo.hpp"
#include "spasm/report.hpp"
#include "spasm/store.hpp"

namespace spasm {

inline fs::path out_path(const RunConfig& cfg, const std::string& name) {
  return fs::path(cfg.paths.out_dir) / name;
}

inline fs::path corpus_path(const RunConfig& cfg, HistoryMode mode) {
  return out_path(cfg, corpus_file_name(cfg.client.model_id, cfg.responder.model_id, to_string(mode)));
}

inline fs::path failed_path(fs::path corpus) { return corpus.replace_extension(".failed.jsonl"); }

// ---------------------------------------------------------------------------
// generate

struct GenerateSummary {
  fs::path corpus;
  std::size_t records = 0;
  std::size_t aborted = 0;
  std::size_t persona_gaps = 0;
  double mean_utterances = 0;
  std::map<std::string, std::size_t> termination_reasons;
};

inline GenerateSummary cmd_generate(const RunConfig& cfg, Backends& backends, std::ostream& out) {
  const auto schema = load_schema(cfg.schema_dir);
  const auto campaign = cfg.campaign(schema);
  GenerateSummary s;
  s.corpus = corpus_path(cfg, cfg.history_mode);
  JsonlWriter writer(s.corpus);
  auto result = run_campaign(*backends.chat, campaign,
                             [&](const ConversationRecord& r) { writer.write_value(r); });
  if (!result.aborted.empty()) {
    JsonlWriter failed(failed_path(s.corpus));
    for (const auto& a : result.aborted) {
      json row = a.partial;
      row["error"] = a.error;
      failed.write(row);
    }
  }
  s.records = result.records.size();
  s.aborted = result.aborted.size();
  s.persona_gaps = result.persona_gaps.size();
  double total = 0;
  for (const auto& r : result.records) {
    total += static_cast<double>(r.turns.size());
    ++s.termination_reasons[r.termination_reason == kMaxTurnsReason ? "max_turns" : "detector"];
  }
  s.mean_utterances = s.records ? total / static_cast<double>(s.records) : 0.0;

  out << fmt::format("corpus: {}\nconversations: {}\naborted: {}\npersona gaps: {}\nmean utterances: {:.2f}\n",
                     s.corpus.string(), s.records, s.aborted, s.persona_gaps, s.mean_utterances);
  for (const auto& [reason, n] : s.termination_reasons) out << fmt::format("ended by {}: {}\n", reason, n);
  for (const auto& g : result.persona_gaps) out << fmt::format("gap: {} ({})\n", g.persona_id, g.error);
  return s;
}

// ---------------------------------------------------------------------------
// drift

struct DriftCommandResult {
  DriftStudy study;
  fs::path rows_path;
  fs::path report_path;
};

inline DriftCommandResult cmd_drift(const RunConfig& cfg, Backends& backends, std::ostream& out) {
  const auto schema = load_schema(cfg.schema_dir);
  DriftCommandResult res;
  const std::string pair = corpus_file_name(cfg.client.model_id, cfg.responder.model_id, "drift");
  res.rows_path = out_path(cfg, pair);
  JsonlWriter rows(res.rows_path);
  res.study = run_drift_study(*backends.chat, *backends.embedder, cfg.campaign(schema), cfg.drift(),
                              [&](const DriftRow& r) { rows.write_value(r); });

  for (auto* cond : {&res.study.ecp, &res.study.concat}) {
    RunConfig c = cfg;
    c.history_mode = cond->mode;
    write_jsonl(corpus_path(c, cond->mode), cond->campaign.records);
  }

  const std::string backbone = cfg.client.model_id + " / " + cfg.responder.model_id;
  const auto by_mean = report::drift_table(backbone, res.study.comparisons, "mean_drift");
  const auto by_auc = report::drift_table(backbone, res.study.comparisons, "auc");
  out << by_mean.render() << "\n" << by_auc.render();

  json rep = json::array();
  for (const auto& c : res.study.comparisons)
    rep.push_back({{"backbone", backbone},
                   {"dimension", c.dimension},
                   {"statistic", c.statistic},
                   {"delta_drift", c.delta},
                   {"cohens_d", c.cohens_d ? json(*c.cohens_d) : json(nullptr)},
                   {"t", c.t ? json(*c.t) : json(nullptr)},
                   {"p_value", c.p_value},
                   {"test", c.test},
                   {"n_ecp", c.n_ecp},
                   {"n_concat", c.n_concat}});
  res.report_path = out_path(cfg, "drift_report.json");
  std::ofstream(res.report_path) << rep.dump(2) << "\n";
  return res;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeResult {
  std::vector<std::pair<std::string, CorpusAnalysis>> datasets;
  fs::path report_path;
};

inline AnalyzeResult cmd_analyze(const RunConfig& cfg, Backends& backends,
                                 const std::vector<fs::path>& corpora, std::ostream& out) {
  if (corpora.empty()) throw ConfigError("analyze: no corpus given");
  AnalyzeResult res;
  EmbeddingCache cache(out_path(cfg, cfg.paths.embedding_cache));
  std::vector<std::pair<std::string, GeometryReport>> geo;
  std::vector<std::pair<std::string, RetrievalReport>> ret;
  json rep = json::array();
  for (const auto& path : corpora) {
    const auto records = read_jsonl_as<ConversationRecord>(path);
    auto emb = restrict_personas(embed_corpus(records, *backends.embedder, cfg.embed_model, &cache),
                                 cfg.analysis.max_personas);
    auto analysis = analyze_embeddings(emb, cfg.analysis);
    const auto name = path.stem().string();
    geo.emplace_back(name, analysis.geometry);
    ret.emplace_back(name, analysis.retrieval);
    const auto& g = analysis.geometry;
    json acc, base;
    for (const auto& [k, v] : analysis.retrieval.acc_at_k) acc[std::to_string(k)] = v;
    for (const auto& [k, v] : analysis.retrieval.baseline_acc_at_k) base[std::to_string(k)] = v;
    rep.push_back({{"dataset", name},
                   {"n_conversations", g.n_conversations},
                   {"n_personas", g.n_personas},
                   {"pca_components", g.pca_components},
                   {"pca_cumulative_variance", g.pca_cumulative_variance},
                   {"silhouette", g.silhouette},
                   {"dbi", g.dbi.coincident_centroids ? json(nullptr) : json(g.dbi.value)},
                   {"within_mean", g.within_mean},
                   {"within_std", g.within_std},
                   {"between_mean", g.between_mean},
                   {"between_std", g.between_std},
                   {"anova_f", std::isfinite(g.anova_f) ? json(g.anova_f) : json(nullptr)},
                   {"anova_p", g.anova_p},
                   {"acc_at_k", acc},
                   {"baseline_acc_at_k", base},
                   {"baseline_seeds", analysis.retrieval.n_seeds}});
    res.datasets.emplace_back(name, std::move(analysis));
  }
  out << report::geometry_table(geo).render() << "\n" << report::retrieval_table(ret).render();
  res.report_path = out_path(cfg, "analysis_report.json");
  fs::create_directories(res.report_path.parent_path());
  std::ofstream(res.report_path) << rep.dump(2) << "\n";
  return res;
}

// ---------------------------------------------------------------------------
// judge

struct JudgeResult {
  std::map<std::string, std::vector<EchoVerdict>> verdicts; // corpus stem -> verdicts
  std::map<std::string, std::size_t> failed;                // corpus stem -> JudgementFailed count
  std::map<std::pair<std::string, std::string>, report::EchoCell> cells;
};

inline fs::path verdicts_path(const fs::path& corpus) {
  auto p = corpus;
  return p.replace_extension(".verdicts.jsonl");
}

inline JudgeResult cmd_judge(const RunConfig& cfg, Backends& backends, const std::vector<fs::path>& corpora,
                             std::ostream& out) {
  if (corpora.empty()) throw ConfigError("judge: no corpus given");
  JudgeResult res;
  std::optional<std::vector<LabelRecord>> labels;
  if (const auto lp = out_path(cfg, cfg.paths.labels); fs::exists(lp)) labels = read_jsonl_as<LabelRecord>(lp);

  std::vector<std::string> clients, responders;
  auto note = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };

  for (const auto& path : corpora) {
    const auto records = read_jsonl_as<ConversationRecord>(path);
    const auto stem = path.stem().string();
    std::vector<std::optional<EchoVerdict>> slots(records.size());
    std::atomic<std::size_t> failures{0};
    parallel_for(records.size(), static_cast<std::size_t>(cfg.workers), [&](std::size_t i) {
      try {
        slots[i] = judge_echoing(*backends.chat, records[i], identities_for(records[i], cfg.responder.system_prompt),
                                 cfg.judge);
      } catch (const JudgementFailed& e) {
        spdlog::warn("{}", e.what());
        ++failures;
      }
    });
    auto& verdicts = res.verdicts[stem];
    for (auto& v : slots)
      if (v) verdicts.push_back(std::move(*v));
    res.failed[stem] = failures;
    write_jsonl(verdicts_path(path), verdicts);

    std::vector<std::string> ids;
    for (const auto& r : records) ids.push_back(r.conversation_id);
    if (!records.empty()) {
      const auto& meta = records.front().run_meta;
      const auto sample = sample_for_human_validation(ids, meta.history_mode, cfg.validation_sample, cfg.seed);
      if (sample.truncated) spdlog::warn("{}: validation sample larger than corpus; using all", stem);
      std::ofstream ids_out(fs::path(path).replace_extension(".validation_ids.txt"));
      for (const auto& id : sample.conversation_ids) ids_out << id << "\n";

      note(clients, meta.client_model);
      note(responders, meta.responder_model);
      auto& cell = res.cells[{meta.client_model, meta.responder_model}];
      const std::optional<double> judge_rate =
          verdicts.empty() ? std::nullopt : std::optional(echoing_rate(verdicts));
      std::optional<double> human_rate;
      if (labels) {
        const std::set<std::string> in_corpus(ids.begin(), ids.end());
        std::vector<LabelRecord> mine;
        for (const auto& l : *labels)
          if (in_corpus.contains(l.conversation_id)) mine.push_back(l);
        if (!resolve_labels(mine).empty()) human_rate = human_echoing_rate(mine);
      }
      if (meta.history_mode == HistoryMode::ecp) {
        cell.ecp_judge = judge_rate;
        cell.ecp_human = human_rate;
      } else {
        cell.concat_judge = judge_rate;
        cell.concat_human = human_rate;
      }
    }
    out << fmt::format("{}: {} verdicts, {} echoing, {} judgement failures\n", stem, verdicts.size(),
                       std::count_if(verdicts.begin(), verdicts.end(), [](const EchoVerdict& v) { return v.sigma == 1; }),
                       res.failed[stem]);
  }
  out << report::echo_table(clients, responders, res.cells).render();
  return res;
}

// ---------------------------------------------------------------------------
// agreement

struct AgreementResult {
  std::map<std::pair<std::string, std::string>, KappaResult> kappas; // annotator pairs
  std::optional<AgreementReport> judge;
};

inline AgreementResult cmd_agreement(const std::vector<fs::path>& label_files,
                                     const std::optional<fs::path>& verdict_file, std::ostream& out) {
  if (label_files.empty()) throw ConfigError("agreement: no label files given");
  std::vector<LabelRecord> all;
  for (const auto& f : label_files) {
    auto rows = read_jsonl_as<LabelRecord>(f);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  std::map<std::string, std::vector<LabelRecord>> by_annotator;
  for (const auto& r : all) by_annotator[r.annotator_id].push_back(r);

  AgreementResult res;
  for (auto a = by_annotator.begin(); a != by_annotator.end(); ++a)
    for (auto b = std::next(a); b != by_annotator.end(); ++b) {
      try {
        res.kappas[{a->first, b->first}] = annotator_agreement(a->second, b->second);
      } catch (const std::invalid_argument& e) {
        spdlog::warn("{} vs {}: {}", a->first, b->first, e.what());
      }
    }
  if (verdict_file) {
    const auto verdicts = read_jsonl_as<EchoVerdict>(*verdict_file);
    res.judge = judge_vs_human(verdicts, all);
  }
  if (res.kappas.empty() && !res.judge) out << "no doubly-labelled conversations and no verdicts\n";
  for (const auto& [pair, k] : res.kappas) {
    out << fmt::format("{} vs {}\n", pair.first, pair.second);
    out << report::agreement_table(k, std::nullopt).render();
  }
  if (res.judge) out << report::agreement_table(std::nullopt, res.judge).render();
  return res;
}

// ---------------------------------------------------------------------------
// serve

namespace detail {
inline std::atomic<AnnotationServer*> active_server{nullptr};
inline void stop_active_server(int) {
  if (auto* s = active_server.load()) s->stop();
}
} // namespace detail

// Blocks until SIGINT/SIGTERM. Throws ConfigError when the port is taken.
inline void cmd_serve(const fs::path& corpus, const fs::path& labels, const std::string& host, int port,
                      const std::optional<fs::path>& assets, std::ostream& out) {
  AnnotationService service(read_jsonl_as<ConversationRecord>(corpus), labels);
  AnnotationServer server(service, assets);
  const int bound = server.bind(host, port);
  out << fmt::format("serving {} conversations on http://{}:{} (labels -> {})\n", service.size(), host, bound,
                     labels.string())
      << std::flush;
  detail::active_server = &server;
  std::signal(SIGINT, detail::stop_active_server);
  std::signal(SIGTERM, detail::stop_active_server);
  server.listen();
  detail::active_server = nullptr;
}

} // namespace spasm
