// spasm: command-line front end.
//
//   spasm generate --config run.json [--seed N] [--history-mode ecp|concat]
//   spasm drift    --config run.json
//   spasm analyze  --config run.json CORPUS...
//   spasm judge    --config run.json CORPUS...
//   spasm agreement --labels A.jsonl [--labels B.jsonl] [--verdicts V.jsonl]
//   spasm serve    --corpus C.jsonl --labels-out L.jsonl [--port 8080] [--assets DIR]

#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "spasm/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string history_mode;
  std::string backend;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (JSON)");
  cmd->add_option("--seed", c.seed, "campaign seed (overrides config)");
  cmd->add_option("--history-mode", c.history_mode, "ecp or concat (overrides config)")
      ->check(CLI::IsMember({"ecp", "concat", "ECP", "CONCAT"}));
  cmd->add_option("--backend", c.backend, "mock or http (overrides config)")
      ->check(CLI::IsMember({"mock", "http"}));
  cmd->add_option("--out-dir", c.out_dir, "output directory (overrides config)");
}

spasm::RunConfig resolve(const Common& c) {
  spasm::RunConfig cfg = c.config.empty() ? spasm::RunConfig{} : spasm::load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.history_mode.empty()) cfg.history_mode = spasm::parse_history_mode(c.history_mode);
  if (!c.backend.empty()) cfg.backend = c.backend;
  if (!c.out_dir.empty()) cfg.paths.out_dir = c.out_dir;
  cfg.validate();
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"persona-driven dialogue simulation and evaluation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  Common common;
  auto* generate = app.add_subcommand("generate", "run a persona campaign and write a corpus");
  add_common(generate, common);

  auto* drift = app.add_subcommand("drift", "paired ECP/CONCAT campaigns with persona-drift probes");
  add_common(drift, common);

  std::vector<std::string> corpora;
  auto* analyze = app.add_subcommand("analyze", "embedding geometry and persona retrieval");
  add_common(analyze, common);
  analyze->add_option("corpus", corpora, "corpus JSONL files")->required();

  auto* judge = app.add_subcommand("judge", "echoing judge over corpora");
  add_common(judge, common);
  judge->add_option("corpus", corpora, "corpus JSONL files")->required();

  std::vector<std::string> label_files;
  std::string verdict_file;
  auto* agreement = app.add_subcommand("agreement", "annotator and judge agreement");
  agreement->add_option("--labels", label_files, "label JSONL (repeatable)")->required();
  agreement->add_option("--verdicts", verdict_file, "judge verdict JSONL");

  std::string serve_corpus, labels_out, host = "127.0.0.1", assets;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "annotation data endpoints and viewer assets");
  serve->add_option("--corpus", serve_corpus, "corpus JSONL")->required();
  serve->add_option("--labels-out", labels_out, "label log JSONL (appended)")->required();
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");
  serve->add_option("--assets", assets, "static viewer files");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    auto paths = [&] {
      std::vector<spasm::fs::path> p(corpora.begin(), corpora.end());
      return p;
    };
    if (*generate) {
      auto cfg = resolve(common);
      auto backends = spasm::make_backends(cfg);
      spasm::cmd_generate(cfg, backends, std::cout);
    } else if (*drift) {
      auto cfg = resolve(common);
      auto backends = spasm::make_backends(cfg);
      spasm::cmd_drift(cfg, backends, std::cout);
    } else if (*analyze) {
      auto cfg = resolve(common);
      auto backends = spasm::make_backends(cfg);
      spasm::cmd_analyze(cfg, backends, paths(), std::cout);
    } else if (*judge) {
      auto cfg = resolve(common);
      auto backends = spasm::make_backends(cfg);
      spasm::cmd_judge(cfg, backends, paths(), std::cout);
    } else if (*agreement) {
      std::vector<spasm::fs::path> files(label_files.begin(), label_files.end());
      std::optional<spasm::fs::path> v;
      if (!verdict_file.empty()) v = verdict_file;
      spasm::cmd_agreement(files, v, std::cout);
    } else if (*serve) {
      std::optional<spasm::fs::path> a;
      if (!assets.empty()) a = assets;
      spasm::cmd_serve(serve_corpus, labels_out, host, port, a, std::cout);
    }
  } catch (const spasm::Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
