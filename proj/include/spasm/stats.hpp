#pragma once

// Small-sample statistics shared by the drift comparison and the corpus
// analytics: moments, Student's t-test, Cohen's d, a permutation test and a
// one-way ANOVA. Distribution tails come from Boost.Math.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace spasm::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Unbiased (n-1) variance; 0 for a single observation.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double sd(std::span<const double> x) { return std::sqrt(variance(x)); }

// Population (n) standard deviation, the "mean ± std" convention for
// distance summaries.
inline double population_sd(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("sd of empty sample");
  const double m = mean(x);
  double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

inline double pooled_sd(std::span<const double> a, std::span<const double> b) {
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  if (na + nb < 3) return 0.0;
  return std::sqrt(((na - 1) * variance(a) + (nb - 1) * variance(b)) / (na + nb - 2));
}

// Undefined when the pooled standard deviation is zero.
inline std::optional<double> cohens_d(std::span<const double> a, std::span<const double> b) {
  const double s = pooled_sd(a, b);
  if (!(s > 0)) return std::nullopt;
  return (mean(a) - mean(b)) / s;
}

struct TTest {
  std::optional<double> t; // undefined for zero pooled variance
  double df = 0;
  double p = 1.0;
};

inline double student_two_sided_p(double t, double df) {
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))), 0.0, 1.0);
}

// Independent two-sample t-test with pooled variance, two-sided. With zero
// pooled variance the samples are constants: p = 1 if they agree, 0 if not.
inline TTest t_test(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("t_test: empty sample");
  TTest r;
  r.df = static_cast<double>(a.size() + b.size()) - 2.0;
  const double diff = mean(a) - mean(b);
  const double s = pooled_sd(a, b);
  const double se = s * std::sqrt(1.0 / static_cast<double>(a.size()) +
                                  1.0 / static_cast<double>(b.size()));
  if (r.df < 1 || !(se > 0)) {
    r.p = diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = diff / se;
  r.p = student_two_sided_p(*r.t, r.df);
  return r;
}

// Two-sided permutation test on the difference of means. The observed
// labelling counts as one permutation, so p is never exactly 0.
inline double permutation_p(std::span<const double> a, std::span<const double> b,
                            std::size_t n_permutations, std::uint64_t seed) {
  if (a.empty() || b.empty()) throw std::invalid_argument("permutation_p: empty sample");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const double observed = std::fabs(mean(a) - mean(b));
  std::mt19937_64 rng(seed);
  std::size_t extreme = 1;
  const auto na = static_cast<std::ptrdiff_t>(a.size());
  for (std::size_t i = 0; i < n_permutations; ++i) {
    std::shuffle(pooled.begin(), pooled.end(), rng);
    const std::span<const double> all(pooled);
    const double d = std::fabs(mean(all.first(a.size())) - mean(all.subspan(static_cast<std::size_t>(na))));
    if (d >= observed - 1e-12) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(n_permutations + 1);
}

struct Anova {
  double f = 0;
  double df_between = 0;
  double df_within = 0;
  double p = 1.0;
  double ss_between = 0;
  double ss_within = 0;
};

// One-way ANOVA across groups. Zero within-group variance with a nonzero
// between-group effect gives F = inf and p = 0.
inline Anova one_way_anova(const std::vector<std::vector<double>>& groups) {
  std::size_t n = 0, k = 0;
  double grand = 0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    ++k;
    n += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  if (k < 2) throw std::invalid_argument("one_way_anova: need at least two nonempty groups");
  if (n <= k) throw std::invalid_argument("one_way_anova: no within-group degrees of freedom");
  grand /= static_cast<double>(n);

  Anova r;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    const double m = mean(g);
    r.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) r.ss_within += (v - m) * (v - m);
  }
  r.df_between = static_cast<double>(k - 1);
  r.df_within = static_cast<double>(n - k);
  const double ms_between = r.ss_between / r.df_between;
  const double ms_within = r.ss_within / r.df_within;
  if (!(ms_within > 0)) {
    r.f = ms_between > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.p = ms_between > 0 ? 0.0 : 1.0;
    return r;
  }
  r.f = ms_between / ms_within;
  boost::math::fisher_f dist(r.df_between, r.df_within);
  r.p = std::clamp(boost::math::cdf(boost::math::complement(dist, r.f)), 0.0, 1.0);
  return r;
}

// Trapezoid rule over (x, y) points sorted by x.
inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("trapezoid: length mismatch");
  double area = 0;
  for (std::size_t i = 1; i < x.size(); ++i) area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return area;
}

} // namespace spasm::stats
