#pragma once

// Run configuration, read from a JSON file. Every key is optional; missing
// keys keep the production defaults below.

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "spasm/analytics.hpp"
#include "spasm/drift.hpp"
#include "spasm/echo.hpp"
#include "spasm/http_backend.hpp"
#include "spasm/mock_backend.hpp"
#include "spasm/orchestrator.hpp"

#ifndef SPASM_DEFAULT_DATA_DIR
#define SPASM_DEFAULT_DATA_DIR "data/personas"
#endif

namespace spasm {

struct MockSettings {
  std::size_t embedding_dimension = 256;
  std::uint64_t embedding_seed = 0;
  bool client_closure = true;
  int closure_min_turn = 3;
  int closure_max_turn = 8;
};

struct HttpSettings {
  std::string api_base; // empty: SPASM_API_BASE or the OpenAI default
  double rate_per_second = 0;
  double burst = 1;
  int max_attempts = 3;
  int initial_backoff_ms = 500;
};

struct PathSettings {
  std::string out_dir = "out";
  std::string corpus;           // input corpus for analyze / judge / serve
  std::string labels = "labels.jsonl";
  std::string embedding_cache = "embedding_cache.jsonl";
  std::string assets;           // viewer static files for serve
};

struct RunConfig {
  std::string backend = "mock"; // "mock" or "http"
  MockSettings mock;
  HttpSettings http;

  std::string schema_dir = SPASM_DEFAULT_DATA_DIR;
  GenerationConfig validator = validator_defaults("gpt-4o-mini");
  GenerationConfig crafter = crafter_defaults("gpt-4o-mini");
  GenerationConfig client = client_defaults("gpt-4o-mini");
  GenerationConfig responder = responder_defaults("gpt-4o-mini");
  GenerationConfig detector = detector_defaults("gpt-4o-mini");
  GenerationConfig judge = judge_defaults("gpt-4o");

  HistoryMode history_mode = HistoryMode::ecp;
  std::string concat_user_side = "client";
  Caps caps;
  int n_personas = 500;
  int convs_per_persona = 10;
  int workers = 4;
  int max_persona_attempts = 20;
  std::uint64_t seed = 0;

  // drift study
  std::string embed_model = env_or("SPASM_EMBED_MODEL", "text-embedding-3-large");
  int probe_interval_pairs = 1;
  bool permutation_test = false;
  std::size_t permutations = 10000;

  AnalysisOptions analysis;
  std::size_t validation_sample = 50;

  PathSettings paths;

  void validate() const {
    if (backend != "mock" && backend != "http")
      throw ConfigError("backend must be 'mock' or 'http', got '" + backend + "'");
    for (const auto* g : {&validator, &crafter, &client, &responder, &detector, &judge}) {
      try {
        g->validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    if (n_personas < 1 || convs_per_persona < 1 || workers < 1 || max_persona_attempts < 1)
      throw ConfigError("campaign counts, workers and max_persona_attempts must be positive");
    if (probe_interval_pairs < 1) throw ConfigError("probe_interval_pairs must be positive");
    if (concat_user_side != "client" && concat_user_side != "responder")
      throw ConfigError("concat_user_side must be 'client' or 'responder'");
    try {
      caps.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  CampaignConfig campaign(const PersonaSchema& schema) const {
    CampaignConfig c;
    c.schema = schema;
    c.validator = validator;
    c.crafter = crafter;
    c.agents = {client, responder, detector};
    c.mode = history_mode;
    c.caps = caps;
    c.n_personas = n_personas;
    c.convs_per_persona = convs_per_persona;
    c.seed = seed;
    c.max_persona_attempts = max_persona_attempts;
    c.workers = workers;
    c.concat.user_side = {concat_user_side};
    return c;
  }

  DriftSettings drift() const {
    DriftSettings d;
    d.embed_model = embed_model;
    d.interval_pairs = probe_interval_pairs;
    d.comparison.permutation = permutation_test;
    d.comparison.n_permutations = permutations;
    d.comparison.seed = seed;
    return d;
  }
};

namespace detail {
template <typename T>
void maybe(const json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}
} // namespace detail

inline void from_json(const json& j, MockSettings& m) {
  detail::maybe(j, "embedding_dimension", m.embedding_dimension);
  detail::maybe(j, "embedding_seed", m.embedding_seed);
  detail::maybe(j, "client_closure", m.client_closure);
  detail::maybe(j, "closure_min_turn", m.closure_min_turn);
  detail::maybe(j, "closure_max_turn", m.closure_max_turn);
}

inline void from_json(const json& j, HttpSettings& h) {
  detail::maybe(j, "api_base", h.api_base);
  detail::maybe(j, "rate_per_second", h.rate_per_second);
  detail::maybe(j, "burst", h.burst);
  detail::maybe(j, "max_attempts", h.max_attempts);
  detail::maybe(j, "initial_backoff_ms", h.initial_backoff_ms);
}

inline void from_json(const json& j, PathSettings& p) {
  detail::maybe(j, "out_dir", p.out_dir);
  detail::maybe(j, "corpus", p.corpus);
  detail::maybe(j, "labels", p.labels);
  detail::maybe(j, "embedding_cache", p.embedding_cache);
  detail::maybe(j, "assets", p.assets);
}

inline void from_json(const json& j, AnalysisOptions& a) {
  detail::maybe(j, "pca_components", a.pca_components);
  detail::maybe(j, "raw_space", a.raw_space);
  detail::maybe(j, "ks", a.ks);
  detail::maybe(j, "baseline_seeds", a.baseline_seeds);
  detail::maybe(j, "seed", a.seed);
  detail::maybe(j, "max_personas", a.max_personas);
}

inline void from_json(const json& j, RunConfig& c) {
  using detail::maybe;
  maybe(j, "backend", c.backend);
  maybe(j, "mock", c.mock);
  maybe(j, "http", c.http);
  maybe(j, "schema_dir", c.schema_dir);
  // Role configs overlay the defaults field by field.
  maybe(j, "validator", c.validator);
  maybe(j, "crafter", c.crafter);
  maybe(j, "client", c.client);
  maybe(j, "responder", c.responder);
  maybe(j, "detector", c.detector);
  maybe(j, "judge", c.judge);
  if (j.contains("history_mode")) c.history_mode = parse_history_mode(j.at("history_mode").get<std::string>());
  maybe(j, "concat_user_side", c.concat_user_side);
  maybe(j, "caps", c.caps);
  maybe(j, "n_personas", c.n_personas);
  maybe(j, "convs_per_persona", c.convs_per_persona);
  maybe(j, "workers", c.workers);
  maybe(j, "max_persona_attempts", c.max_persona_attempts);
  maybe(j, "seed", c.seed);
  maybe(j, "embed_model", c.embed_model);
  maybe(j, "probe_interval_pairs", c.probe_interval_pairs);
  maybe(j, "permutation_test", c.permutation_test);
  maybe(j, "permutations", c.permutations);
  maybe(j, "analysis", c.analysis);
  maybe(j, "validation_sample", c.validation_sample);
  maybe(j, "paths", c.paths);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  const auto j = json::parse(in, nullptr, false, true);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config " + path.string() + " is not a JSON object");
  RunConfig c;
  try {
    j.get_to(c);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

// Backends selected by `backend`. For the mock, chat and embeddings are two
// objects; for HTTP both point at one client.
struct Backends {
  std::shared_ptr<ChatBackend> chat;
  std::shared_ptr<EmbeddingBackend> embedder;
};

inline Backends make_backends(const RunConfig& cfg) {
  if (cfg.backend == "mock") {
    OfflineMockOptions opts;
    if (cfg.mock.client_closure) opts.client_closure_turns = std::pair{cfg.mock.closure_min_turn, cfg.mock.closure_max_turn};
    else opts.client_closure_turns.reset();
    return {std::shared_ptr<ChatBackend>(make_offline_mock(opts)),
            std::make_shared<MockEmbeddingBackend>(cfg.mock.embedding_dimension, cfg.mock.embedding_seed)};
  }
  HttpBackendOptions opts;
  if (!cfg.http.api_base.empty()) opts.api_base = cfg.http.api_base;
  opts.rate_per_second = cfg.http.rate_per_second;
  opts.burst = cfg.http.burst;
  opts.retry.max_attempts = cfg.http.max_attempts;
  opts.retry.initial_backoff = std::chrono::milliseconds(cfg.http.initial_backoff_ms);
  auto http = std::make_shared<HttpBackend>(opts);
  return {http, http};
}

} // namespace spasm
