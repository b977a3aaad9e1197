#pragma once

// Corpus geometry: conversation embeddings, PCA, cluster indices on cosine
// distance, within/between centroid distances and persona retrieval.
//
// Every metric goes through cosine_distance(); points are rows of `Points`.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spasm/backend.hpp"
#include "spasm/error.hpp"
#include "spasm/record.hpp"
#include "spasm/stats.hpp"
#include "spasm/store.hpp"

namespace spasm {

using Points = std::vector<std::vector<double>>;

// 1 - cos(a, b). A zero vector has no direction: two zero vectors are at
// distance 0, a zero and a nonzero vector at distance 1 (cos taken as 0).
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw EmbeddingDimensionMismatch("cosine_distance: dimensions " + std::to_string(a.size()) +
                                     " and " + std::to_string(b.size()));
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 && nb == 0) return 0.0;
  if (na == 0 || nb == 0) return 1.0;
  return 1.0 - std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Conversation embeddings

struct ConversationEmbedding {
  std::string conversation_id;
  std::string persona_label;
  EmbeddingVector raw;
  std::vector<double> reduced;
};

inline constexpr std::string_view kClientSeparator = "\n";

inline std::string conversation_text(const ConversationRecord& record) {
  const auto parts = client_utterances(record);
  if (parts.empty()) throw NoClientContent("conversation " + record.conversation_id + " has no client turns");
  std::string out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    out += kClientSeparator;
    out += parts[i];
  }
  return out;
}

inline ConversationEmbedding embed_conversation(const ConversationRecord& record,
                                                EmbeddingBackend& backend,
                                                const std::string& model) {
  return {record.conversation_id, record.persona_id, embed_one(backend, conversation_text(record), model), {}};
}

// Batched embedding of a corpus with an optional cache; only misses reach the
// backend. Output order follows `records`.
inline std::vector<ConversationEmbedding> embed_corpus(std::span<const ConversationRecord> records,
                                                       EmbeddingBackend& backend,
                                                       const std::string& model,
                                                       EmbeddingCache* cache = nullptr,
                                                       std::size_t batch_size = 64) {
  std::vector<ConversationEmbedding> out(records.size());
  std::vector<std::string> texts(records.size());
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < records.size(); ++i) {
    texts[i] = conversation_text(records[i]);
    out[i].conversation_id = records[i].conversation_id;
    out[i].persona_label = records[i].persona_id;
    out[i].raw.model_id = model;
    if (cache)
      if (auto v = cache->get(records[i].conversation_id, model, texts[i])) {
        out[i].raw.values = std::move(*v);
        continue;
      }
    misses.push_back(i);
  }
  for (std::size_t start = 0; start < misses.size(); start += batch_size) {
    const auto end = std::min(misses.size(), start + batch_size);
    std::vector<std::string> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(texts[misses[k]]);
    auto vectors = embed(backend, batch, model);
    for (std::size_t k = start; k < end; ++k) {
      const auto i = misses[k];
      out[i].raw = std::move(vectors[k - start]);
      if (cache) cache->put(out[i].conversation_id, model, texts[i], out[i].raw.values);
    }
  }
  const auto dim = out.empty() ? 0 : out.front().raw.dimension();
  for (const auto& e : out)
    if (e.raw.dimension() != dim)
      throw EmbeddingDimensionMismatch("corpus embeddings have mixed dimensions (stale cache?)");
  return out;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components; // m x d, orthonormal rows
  std::vector<double> explained_variance_ratio;
  bool degenerate = false; // no variance at all; ratios are zero

  std::size_t n_components() const { return static_cast<std::size_t>(components.rows()); }
  double cumulative_ratio() const {
    return std::accumulate(explained_variance_ratio.begin(), explained_variance_ratio.end(), 0.0);
  }
};

inline Eigen::MatrixXd to_matrix(const Points& points) {
  if (points.empty()) return {};
  const auto d = points.front().size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) throw EmbeddingDimensionMismatch("ragged point set");
    for (std::size_t j = 0; j < d; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i][j];
  }
  return x;
}

// Number of components actually fitted: min(m, n-1, d).
inline std::size_t effective_components(std::size_t m, std::size_t n, std::size_t d) {
  return std::min({m, n > 0 ? n - 1 : 0, d});
}

// Thin SVD of the centred data matrix. Component signs are fixed so that the
// largest-magnitude loading of each component is positive.
inline PcaModel fit_pca(const Points& points, std::size_t m = 50) {
  if (points.size() < 2) throw std::invalid_argument("fit_pca: need at least two samples");
  const Eigen::MatrixXd x = to_matrix(points);
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  const auto k = effective_components(m, n, d);
  if (k == 0) throw std::invalid_argument("fit_pca: no components to fit");

  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - model.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const double total = s.squaredNorm();
  model.components = svd.matrixV().leftCols(static_cast<Eigen::Index>(k)).transpose();
  for (Eigen::Index r = 0; r < model.components.rows(); ++r) {
    Eigen::Index arg = 0;
    model.components.row(r).cwiseAbs().maxCoeff(&arg);
    if (model.components(r, arg) < 0) model.components.row(r) *= -1.0;
  }
  model.degenerate = !(total > 0);
  model.explained_variance_ratio.assign(k, 0.0);
  if (!model.degenerate)
    for (std::size_t i = 0; i < k; ++i)
      model.explained_variance_ratio[i] = s(static_cast<Eigen::Index>(i)) *
                                          s(static_cast<Eigen::Index>(i)) / total;
  return model;
}

inline Points pca_project(const PcaModel& model, const Points& points) {
  if (points.empty()) return {};
  const Eigen::MatrixXd x = to_matrix(points);
  if (x.cols() != model.mean.size()) throw EmbeddingDimensionMismatch("pca_project: dimension mismatch");
  const Eigen::MatrixXd z = (x.rowwise() - model.mean.transpose()) * model.components.transpose();
  Points out(points.size(), std::vector<double>(static_cast<std::size_t>(z.cols())));
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = z(i, j);
  return out;
}

// Maps reduced coordinates back to the original space (mean added back).
inline Points pca_reconstruct(const PcaModel& model, const Points& reduced) {
  if (reduced.empty()) return {};
  const Eigen::MatrixXd z = to_matrix(reduced);
  const Eigen::MatrixXd x = (z * model.components).rowwise() + model.mean.transpose();
  Points out(reduced.size(), std::vector<double>(static_cast<std::size_t>(x.cols())));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = x(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Cluster indices

// Relabels arbitrary keys as 0..G-1 in order of first appearance.
inline std::vector<int> encode_labels(std::span<const std::string> keys) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(ids.try_emplace(k, static_cast<int>(ids.size())).first->second);
  return out;
}

namespace detail {
inline void check_points(const Points& points, std::span<const int> labels, const char* who) {
  if (points.size() != labels.size())
    throw std::invalid_argument(std::string(who) + ": points and labels differ in length");
  if (points.empty()) throw std::invalid_argument(std::string(who) + ": no points");
  for (const auto& p : points)
    if (p.size() != points.front().size()) throw EmbeddingDimensionMismatch(std::string(who) + ": ragged points");
}

inline std::map<int, std::vector<std::size_t>> groups_of(std::span<const int> labels) {
  std::map<int, std::vector<std::size_t>> g;
  for (std::size_t i = 0; i < labels.size(); ++i) g[labels[i]].push_back(i);
  return g;
}

inline std::vector<double> centroid(const Points& points, const std::vector<std::size_t>& members) {
  std::vector<double> c(points.front().size(), 0.0);
  for (auto i : members)
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += points[i][j];
  for (auto& v : c) v /= static_cast<double>(members.size());
  return c;
}
} // namespace detail

// Mean silhouette with cosine distance. Members of singleton clusters get
// s(i) = 0, as does any point with a(i) = b(i) = 0.
inline double silhouette_cosine(const Points& points, std::span<const int> labels) {
  detail::check_points(points, labels, "silhouette_cosine");
  const auto groups = detail::groups_of(labels);
  if (groups.size() < 2) throw UndefinedMetric("silhouette needs at least two labels");
  const std::size_t n = points.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = groups.at(labels[i]);
    if (own.size() < 2) continue;
    double a = 0;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [g, members] : groups) {
      double sum = 0;
      for (auto j : members)
        if (j != i) sum += cosine_distance(points[i], points[j]);
      if (g == labels[i]) a = sum / static_cast<double>(members.size() - 1);
      else b = std::min(b, sum / static_cast<double>(members.size()));
    }
    const double denom = std::max(a, b);
    if (denom > 0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

// Centroid distances at or below this count as zero; 1 - cos leaves ~1e-16
// residue for identical directions.
inline constexpr double kCoincidentTol = 1e-12;

struct DbiResult {
  double value = 0;
  bool coincident_centroids = false; // some M_gh = 0; value is +inf
};

inline DbiResult davies_bouldin_cosine(const Points& points, std::span<const int> labels) {
  detail::check_points(points, labels, "davies_bouldin_cosine");
  const auto groups = detail::groups_of(labels);
  if (groups.size() < 2) throw UndefinedMetric("Davies-Bouldin index needs at least two labels");
  std::vector<std::vector<double>> mu;
  std::vector<double> scatter;
  for (const auto& [g, members] : groups) {
    mu.push_back(detail::centroid(points, members));
    double s = 0;
    for (auto i : members) s += cosine_distance(points[i], mu.back());
    scatter.push_back(s / static_cast<double>(members.size()));
  }
  DbiResult r;
  const std::size_t G = mu.size();
  for (std::size_t g = 0; g < G; ++g) {
    double worst = 0;
    for (std::size_t h = 0; h < G; ++h) {
      if (h == g) continue;
      const double m = cosine_distance(mu[g], mu[h]);
      if (m <= kCoincidentTol) {
        r.coincident_centroids = true;
        worst = std::numeric_limits<double>::infinity();
        break;
      }
      worst = std::max(worst, (scatter[g] + scatter[h]) / m);
    }
    r.value += worst;
  }
  r.value /= static_cast<double>(G);
  return r;
}

struct WithinBetween {
  std::vector<double> within;  // per point: distance to own centroid
  std::vector<double> between; // per point: distance to nearest other centroid
  double within_mean = 0, within_std = 0;
  double between_mean = 0, between_std = 0;
  stats::Anova anova;
};

// Spreads are population standard deviations.
inline WithinBetween within_between_anova(const Points& points, std::span<const int> labels) {
  detail::check_points(points, labels, "within_between_anova");
  const auto groups = detail::groups_of(labels);
  if (groups.size() < 2) throw UndefinedMetric("within/between distances need at least two labels");
  std::map<int, std::vector<double>> mu;
  for (const auto& [g, members] : groups) mu[g] = detail::centroid(points, members);

  WithinBetween r;
  for (std::size_t i = 0; i < points.size(); ++i) {
    r.within.push_back(cosine_distance(points[i], mu.at(labels[i])));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [g, c] : mu)
      if (g != labels[i]) best = std::min(best, cosine_distance(points[i], c));
    r.between.push_back(best);
  }
  r.within_mean = stats::mean(r.within);
  r.within_std = stats::population_sd(r.within);
  r.between_mean = stats::mean(r.between);
  r.between_std = stats::population_sd(r.between);
  r.anova = stats::one_way_anova({r.within, r.between});
  return r;
}

// ---------------------------------------------------------------------------
// Retrieval

inline const std::vector<int> kDefaultKs{1, 3, 5, 10};

// For each query, the `k` nearest other points by cosine distance; equal
// distances are ordered by input index.
inline std::vector<std::vector<std::size_t>> nearest_neighbors(const Points& points, std::size_t k) {
  const std::size_t n = points.size();
  if (k >= n) throw std::invalid_argument("nearest_neighbors: need more than k points");
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cand.emplace_back(cosine_distance(points[i], points[j]), j);
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) out[i].push_back(cand[r].second);
  }
  return out;
}

// Acc@K from precomputed neighbour lists.
inline std::map<int, double> acc_at_k(const std::vector<std::vector<std::size_t>>& neighbors,
                                      std::span<const int> labels, std::span<const int> ks) {
  std::map<int, double> out;
  for (int k : ks) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
      const auto lim = std::min<std::size_t>(static_cast<std::size_t>(k), neighbors[i].size());
      for (std::size_t r = 0; r < lim; ++r)
        if (labels[neighbors[i][r]] == labels[i]) {
          ++hits;
          break;
        }
    }
    out[k] = static_cast<double>(hits) / static_cast<double>(neighbors.size());
  }
  return out;
}

inline std::size_t max_k(std::span<const int> ks) {
  if (ks.empty()) throw std::invalid_argument("empty K set");
  const int m = *std::max_element(ks.begin(), ks.end());
  if (m < 1) throw std::invalid_argument("K must be positive");
  return static_cast<std::size_t>(m);
}

inline std::map<int, double> retrieval_acc(const Points& points, std::span<const int> labels,
                                           std::span<const int> ks = kDefaultKs) {
  detail::check_points(points, labels, "retrieval_acc");
  if (points.size() < max_k(ks) + 1)
    throw std::invalid_argument("retrieval_acc: need at least max(K)+1 points");
  return acc_at_k(nearest_neighbors(points, max_k(ks)), labels, ks);
}

// Labels shuffled across conversations with a fresh seed per round; the
// neighbour structure is computed once and never changes.
inline std::map<int, double> retrieval_random_baseline(
    const std::vector<std::vector<std::size_t>>& neighbors, std::span<const int> labels,
    std::span<const int> ks, std::size_t n_seeds, std::uint64_t seed = 0) {
  if (n_seeds < 1) throw std::invalid_argument("retrieval_random_baseline: n_seeds must be >= 1");
  std::map<int, double> sum;
  for (int k : ks) sum[k] = 0;
  std::vector<int> permuted(labels.begin(), labels.end());
  for (std::size_t s = 0; s < n_seeds; ++s) {
    std::copy(labels.begin(), labels.end(), permuted.begin());
    std::mt19937_64 rng(seed + s);
    std::shuffle(permuted.begin(), permuted.end(), rng);
    for (const auto& [k, v] : acc_at_k(neighbors, permuted, ks)) sum[k] += v;
  }
  for (auto& [k, v] : sum) v /= static_cast<double>(n_seeds);
  return sum;
}

inline std::map<int, double> retrieval_random_baseline(const Points& points,
                                                       std::span<const int> labels,
                                                       std::span<const int> ks,
                                                       std::size_t n_seeds, std::uint64_t seed = 0) {
  detail::check_points(points, labels, "retrieval_random_baseline");
  return retrieval_random_baseline(nearest_neighbors(points, max_k(ks)), labels, ks, n_seeds, seed);
}

// ---------------------------------------------------------------------------
// Reports

struct GeometryReport {
  std::size_t n_conversations = 0;
  std::size_t n_personas = 0;
  std::size_t raw_dimension = 0;
  std::size_t pca_components = 0;
  double pca_cumulative_variance = 0; // fraction in [0,1]
  bool pca_degenerate = false;
  double silhouette = 0;
  DbiResult dbi;
  double within_mean = 0, within_std = 0;
  double between_mean = 0, between_std = 0;
  double anova_f = 0;
  double anova_p = 1;
  bool raw_space = false;
};

struct RetrievalReport {
  std::map<int, double> acc_at_k;
  std::map<int, double> baseline_acc_at_k;
  std::size_t n_seeds = 0;
  std::uint64_t seed = 0;
};

struct AnalysisOptions {
  std::size_t pca_components = 50;
  bool raw_space = false; // metrics on raw embeddings instead of PCA space
  std::vector<int> ks = kDefaultKs;
  std::size_t baseline_seeds = 100;
  std::uint64_t seed = 0;
  // Restrict to the first N persona labels (sorted); 0 keeps all.
  std::size_t max_personas = 0;
};

inline std::vector<ConversationEmbedding>
restrict_personas(std::vector<ConversationEmbedding> embeddings, std::size_t max_personas) {
  if (max_personas == 0) return embeddings;
  std::set<std::string> labels;
  for (const auto& e : embeddings) labels.insert(e.persona_label);
  std::set<std::string> keep;
  for (const auto& l : labels) {
    if (keep.size() == max_personas) break;
    keep.insert(l);
  }
  std::erase_if(embeddings, [&](const ConversationEmbedding& e) { return !keep.contains(e.persona_label); });
  return embeddings;
}

struct CorpusAnalysis {
  GeometryReport geometry;
  RetrievalReport retrieval;
  PcaModel pca;
};

// Fills `reduced` in place and computes both reports.
inline CorpusAnalysis analyze_embeddings(std::vector<ConversationEmbedding>& embeddings,
                                         const AnalysisOptions& opts = {}) {
  if (embeddings.size() < 2) throw std::invalid_argument("analysis needs at least two conversations");
  Points raw;
  std::vector<std::string> keys;
  for (const auto& e : embeddings) {
    raw.push_back(e.raw.values);
    keys.push_back(e.persona_label);
  }
  const auto labels = encode_labels(keys);

  CorpusAnalysis out;
  out.pca = fit_pca(raw, opts.pca_components);
  const Points reduced = pca_project(out.pca, raw);
  for (std::size_t i = 0; i < embeddings.size(); ++i) embeddings[i].reduced = reduced[i];
  const Points& space = opts.raw_space ? raw : reduced;

  auto& g = out.geometry;
  g.n_conversations = embeddings.size();
  g.n_personas = std::set<int>(labels.begin(), labels.end()).size();
  g.raw_dimension = raw.front().size();
  g.pca_components = out.pca.n_components();
  g.pca_cumulative_variance = out.pca.cumulative_ratio();
  g.pca_degenerate = out.pca.degenerate;
  g.raw_space = opts.raw_space;
  g.silhouette = silhouette_cosine(space, labels);
  g.dbi = davies_bouldin_cosine(space, labels);
  const auto wb = within_between_anova(space, labels);
  g.within_mean = wb.within_mean;
  g.within_std = wb.within_std;
  g.between_mean = wb.between_mean;
  g.between_std = wb.between_std;
  g.anova_f = wb.anova.f;
  g.anova_p = wb.anova.p;

  // K values the corpus is too small for are left out of the report.
  std::vector<int> ks;
  for (int k : opts.ks)
    if (k >= 1 && static_cast<std::size_t>(k) < space.size()) ks.push_back(k);
  if (!ks.empty()) {
    const auto neighbors = nearest_neighbors(space, max_k(ks));
    out.retrieval.acc_at_k = acc_at_k(neighbors, labels, ks);
    out.retrieval.baseline_acc_at_k =
        retrieval_random_baseline(neighbors, labels, ks, opts.baseline_seeds, opts.seed);
  }
  out.retrieval.n_seeds = opts.baseline_seeds;
  out.retrieval.seed = opts.seed;
  return out;
}

} // namespace spasm
