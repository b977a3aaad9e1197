#pragma once

// Plain-text and JSON renderings of the evaluation tables.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "spasm/agreement.hpp"
#include "spasm/analytics.hpp"
#include "spasm/drift.hpp"

namespace spasm::report {

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render() const {
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& r : rows)
      for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
    auto line = [&](const std::vector<std::string>& cells) {
      std::string out;
      for (std::size_t c = 0; c < width.size(); ++c) {
        const std::string cell = c < cells.size() ? cells[c] : "";
        out += c == 0 ? fmt::format("{:<{}}", cell, width[c]) : fmt::format("  {:>{}}", cell, width[c]);
      }
      return out + "\n";
    };
    std::string out;
    if (!title.empty()) out += title + "\n";
    out += line(header);
    std::size_t total = 0;
    for (auto w : width) total += w + 2;
    out += std::string(total > 2 ? total - 2 : 0, '-') + "\n";
    for (const auto& r : rows) out += line(r);
    return out;
  }

  json rows_json() const {
    json out = json::array();
    for (const auto& r : rows) {
      json row;
      for (std::size_t c = 0; c < header.size() && c < r.size(); ++c) row[header[c]] = r[c];
      out.push_back(std::move(row));
    }
    return out;
  }
};

// p-values below 1e-20 are shown as "<1e-20".
inline std::string format_p(double p) {
  if (p < 1e-20) return "<1e-20";
  if (p < 1e-3) return fmt::format("{:.2e}", p);
  return fmt::format("{:.3f}", p);
}

inline std::string format_opt(const std::optional<double>& v, int precision = 3) {
  return v ? fmt::format("{:.{}f}", *v, precision) : "undefined";
}

inline std::string mean_pm(double m, double s) { return fmt::format("{:.3f} ± {:.3f}", m, s); }

inline Table geometry_table(const std::vector<std::pair<std::string, GeometryReport>>& datasets) {
  Table t{"Corpus geometry",
          {"Dataset", "PCA Var. (%)", "Silhouette", "DBI", "Within", "Between", "ANOVA p"},
          {}};
  for (const auto& [name, g] : datasets)
    t.rows.push_back({name, fmt::format("{:.1f}", 100.0 * g.pca_cumulative_variance),
                      fmt::format("{:.3f}", g.silhouette),
                      g.dbi.coincident_centroids ? "inf" : fmt::format("{:.3f}", g.dbi.value),
                      mean_pm(g.within_mean, g.within_std), mean_pm(g.between_mean, g.between_std),
                      format_p(g.anova_p)});
  return t;
}

inline Table retrieval_table(const std::vector<std::pair<std::string, RetrievalReport>>& datasets) {
  std::vector<int> ks;
  for (const auto& [name, r] : datasets)
    for (const auto& [k, v] : r.acc_at_k)
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  std::sort(ks.begin(), ks.end());
  Table t{"Persona retrieval", {"Dataset"}, {}};
  for (int k : ks) t.header.push_back(fmt::format("Acc@{}", k));
  auto cells = [&](const std::map<int, double>& m) {
    std::vector<std::string> out;
    for (int k : ks) out.push_back(m.contains(k) ? fmt::format("{:.3f}", m.at(k)) : "-");
    return out;
  };
  for (const auto& [name, r] : datasets) {
    auto row = cells(r.acc_at_k);
    row.insert(row.begin(), name);
    t.rows.push_back(row);
  }
  for (const auto& [name, r] : datasets) {
    auto row = cells(r.baseline_acc_at_k);
    row.insert(row.begin(), datasets.size() == 1 ? std::string("Random baseline") : "Random baseline (" + name + ")");
    t.rows.push_back(row);
  }
  return t;
}

inline Table drift_table(const std::string& backbone, const std::vector<DriftComparison>& cmp,
                         const std::string& statistic = "mean_drift") {
  Table t{"ECP vs CONCAT persona drift (" + statistic + ")",
          {"Backbone", "Dimension", "Delta Drift", "Cohen's d", "p"},
          {}};
  for (const auto& c : cmp)
    if (c.statistic == statistic)
      t.rows.push_back({backbone, c.dimension, fmt::format("{:+.3f}", c.delta), format_opt(c.cohens_d, 2),
                        format_p(c.p_value)});
  return t;
}

// One cell per (client, responder) pairing: judge and human rates under both
// history modes. Missing values print as "-".
struct EchoCell {
  std::optional<double> concat_judge, concat_human, ecp_judge, ecp_human;
};

inline Table echo_table(const std::vector<std::string>& clients, const std::vector<std::string>& responders,
                        const std::map<std::pair<std::string, std::string>, EchoCell>& cells) {
  Table t{"Echoing rate (Concat J/H | ECP J/H)", {"Client \\ Responder"}, {}};
  for (const auto& r : responders) t.header.push_back(r);
  auto pct = [](const std::optional<double>& v) { return v ? fmt::format("{:.1f}", 100.0 * *v) : std::string("-"); };
  for (const auto& c : clients) {
    std::vector<std::string> row{c};
    for (const auto& r : responders) {
      auto it = cells.find({c, r});
      if (it == cells.end()) {
        row.push_back("-");
        continue;
      }
      const auto& e = it->second;
      row.push_back(fmt::format("{}/{} | {}/{}", pct(e.concat_judge), pct(e.concat_human), pct(e.ecp_judge),
                                pct(e.ecp_human)));
    }
    t.rows.push_back(row);
  }
  return t;
}

inline Table agreement_table(const std::optional<KappaResult>& kappa, const std::optional<AgreementReport>& judge) {
  Table t{"Agreement", {"Metric", "Value"}, {}};
  if (kappa) {
    t.rows.push_back({"Annotator observed agreement", fmt::format("{:.3f}", kappa->observed_agreement)});
    t.rows.push_back({"Cohen's kappa", format_opt(kappa->kappa)});
    t.rows.push_back({"Doubly-annotated conversations", std::to_string(kappa->n)});
  }
  if (judge) {
    t.rows.push_back({"Judge vs human agreement", fmt::format("{:.3f}", judge->observed_agreement)});
    t.rows.push_back({"Precision", format_opt(judge->precision)});
    t.rows.push_back({"Recall", format_opt(judge->recall)});
    t.rows.push_back({"F1", format_opt(judge->f1)});
    t.rows.push_back({"Reference ties (counted as echoing)", std::to_string(judge->ties)});
  }
  return t;
}

} // namespace spasm::report
