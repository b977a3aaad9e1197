#pragma once

// Reference implementations used only by tests. They share no code with the
// library: different formulas where one exists (normalise-then-subtract for
// cosine distance, Jacobi rotations for PCA, a continued fraction for the F
// and t tails) and plain loops everywhere else.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Vec unit(const Vec& v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  Vec out(v.size(), 0.0);
  if (n == 0) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

inline bool is_zero(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Half squared distance of the unit vectors; same zero-vector convention as
// the library (both zero -> 0, one zero -> 1).
inline double cos_dist(const Vec& a, const Vec& b) {
  if (is_zero(a) && is_zero(b)) return 0.0;
  if (is_zero(a) || is_zero(b)) return 1.0;
  const Vec ua = unit(a), ub = unit(b);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (ua[i] - ub[i]) * (ua[i] - ub[i]);
  return 0.5 * s;
}

inline Vec mean_of(const Mat& pts, const std::vector<int>& labels, int g) {
  Vec m(pts.front().size(), 0.0);
  int n = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (labels[i] == g) {
      for (std::size_t j = 0; j < m.size(); ++j) m[j] += pts[i][j];
      ++n;
    }
  for (auto& x : m) x /= n;
  return m;
}

inline std::set<int> label_set(const std::vector<int>& labels) { return {labels.begin(), labels.end()}; }

inline double silhouette(const Mat& pts, const std::vector<int>& labels) {
  const auto groups = label_set(labels);
  double total = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    int own = 0;
    for (std::size_t j = 0; j < pts.size(); ++j) own += labels[j] == labels[i];
    if (own == 1) continue; // singleton: s = 0
    double a = 0;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i && labels[j] == labels[i]) a += cos_dist(pts[i], pts[j]);
    a /= own - 1;
    double b = std::numeric_limits<double>::max();
    for (int g : groups) {
      if (g == labels[i]) continue;
      double s = 0;
      int n = 0;
      for (std::size_t j = 0; j < pts.size(); ++j)
        if (labels[j] == g) {
          s += cos_dist(pts[i], pts[j]);
          ++n;
        }
      b = std::min(b, s / n);
    }
    const double m = std::max(a, b);
    total += m == 0 ? 0.0 : (b - a) / m;
  }
  return total / static_cast<double>(pts.size());
}

inline double dbi(const Mat& pts, const std::vector<int>& labels) {
  const auto groups = label_set(labels);
  std::map<int, Vec> mu;
  std::map<int, double> s;
  for (int g : groups) {
    mu[g] = mean_of(pts, labels, g);
    double acc = 0;
    int n = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (labels[i] == g) {
        acc += cos_dist(pts[i], mu[g]);
        ++n;
      }
    s[g] = acc / n;
  }
  double total = 0;
  for (int g : groups) {
    double worst = 0;
    for (int h : groups)
      if (h != g) worst = std::max(worst, (s[g] + s[h]) / cos_dist(mu[g], mu[h]));
    total += worst;
  }
  return total / static_cast<double>(groups.size());
}

struct WB {
  Vec within, between;
};

inline WB within_between(const Mat& pts, const std::vector<int>& labels) {
  const auto groups = label_set(labels);
  std::map<int, Vec> mu;
  for (int g : groups) mu[g] = mean_of(pts, labels, g);
  WB r;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    r.within.push_back(cos_dist(pts[i], mu[labels[i]]));
    double b = std::numeric_limits<double>::max();
    for (int g : groups)
      if (g != labels[i]) b = std::min(b, cos_dist(pts[i], mu[g]));
    r.between.push_back(b);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Special functions

inline double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a - 1.0 + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + 1.0 + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return h;
}

// Regularised incomplete beta I_x(a, b).
inline double inc_beta(double a, double b, double x) {
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(a, b)) * beta_cf(b, a, 1.0 - x) / b;
}

// Upper tail of F(d1, d2).
inline double f_sf(double f, double d1, double d2) { return inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)); }

// Two-sided tail of Student's t with df degrees of freedom.
inline double t_two_sided(double t, double df) { return inc_beta(df / 2.0, 0.5, df / (df + t * t)); }

struct Anova {
  double f, p;
};

inline Anova anova(const std::vector<Vec>& groups) {
  double n = 0, grand = 0;
  for (const auto& g : groups)
    for (double v : g) {
      grand += v;
      n += 1;
    }
  grand /= n;
  double ssb = 0, ssw = 0;
  for (const auto& g : groups) {
    double m = 0;
    for (double v : g) m += v;
    m /= static_cast<double>(g.size());
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) ssw += (v - m) * (v - m);
  }
  const double d1 = static_cast<double>(groups.size()) - 1, d2 = n - static_cast<double>(groups.size());
  const double f = (ssb / d1) / (ssw / d2);
  return {f, f_sf(f, d1, d2)};
}

// ---------------------------------------------------------------------------
// Retrieval: full sort of all other points per query.

inline std::map<int, double> acc_at_k(const Mat& pts, const std::vector<int>& labels, const std::vector<int>& ks) {
  std::map<int, double> out;
  for (int k : ks) {
    int hits = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t j = 0; j < pts.size(); ++j)
        if (j != i) d.push_back({cos_dist(pts[i], pts[j]), j});
      std::stable_sort(d.begin(), d.end(), [](auto& a, auto& b) { return a.first < b.first; });
      bool hit = false;
      for (int r = 0; r < k && r < static_cast<int>(d.size()); ++r) hit |= labels[d[r].second] == labels[i];
      hits += hit;
    }
    out[k] = static_cast<double>(hits) / static_cast<double>(pts.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
// eigenvalues sorted in decreasing order.

inline Vec jacobi_eigenvalues(Mat a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  Vec ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

// Explained-variance ratios of the first m principal components via the
// covariance matrix.
inline Vec pca_ratios(const Mat& x, std::size_t m) {
  const std::size_t n = x.size(), d = x.front().size();
  Vec mu(d, 0.0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r[j] / static_cast<double>(n);
  Mat cov(d, Vec(d, 0.0));
  for (const auto& r : x)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov[i][j] += (r[i] - mu[i]) * (r[j] - mu[j]) / static_cast<double>(n - 1);
  const auto ev = jacobi_eigenvalues(cov);
  double total = 0;
  for (double e : ev) total += std::max(0.0, e);
  Vec out;
  for (std::size_t i = 0; i < m; ++i) out.push_back(std::max(0.0, ev[i]) / total);
  return out;
}

// ---------------------------------------------------------------------------
// Agreement

struct Kappa {
  double po, pe, kappa;
};

inline Kappa kappa2(double a, double b, double c, double d) {
  // [[a, b], [c, d]]: rows rater A, columns rater B
  const double n = a + b + c + d;
  const double po = (a + d) / n;
  const double pe = ((a + b) / n) * ((a + c) / n) + ((c + d) / n) * ((b + d) / n);
  return {po, pe, (po - pe) / (1.0 - pe)};
}

// ---------------------------------------------------------------------------
// Misc

// Chance that at least one of the K fixed neighbours of a query shares its
// label when labels are shuffled over n items with `per` items per label:
// 1 - C(n-per, K) / C(n-1, K).
inline double random_hit_rate(int per, int n, int k) {
  double miss = 1.0;
  for (int j = 0; j < k; ++j) miss *= static_cast<double>(n - per - j) / static_cast<double>(n - 1 - j);
  return 1.0 - miss;
}

// Regularised upper incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
  if (x <= 0) return 1.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double sum = 1.0 / a, term = sum;
    for (int n = 1; n < 100000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - lg) * h;
}

inline double chi_square_sf(double stat, double df) { return gamma_q(df / 2.0, stat / 2.0); }

inline Vec random_vec(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> g;
  Vec v(d);
  for (auto& x : v) x = g(rng);
  return v;
}

} // namespace oracle
