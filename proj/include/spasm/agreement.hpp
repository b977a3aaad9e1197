#pragma once

// Agreement statistics for echoing labels: Cohen's kappa between annotators
// and precision/recall/F1 of the judge against a human reference.

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spasm/echo.hpp"

namespace spasm {

struct KappaResult {
  double observed_agreement = 0;
  double expected_agreement = 0;
  std::optional<double> kappa; // undefined when expected agreement is 1
  std::size_t n = 0;
};

// confusion[i][j] = number of items rater A put in class i and rater B in j.
inline KappaResult cohens_kappa(const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t k = confusion.size();
  if (k == 0) throw std::invalid_argument("cohens_kappa: empty confusion matrix");
  for (const auto& row : confusion)
    if (row.size() != k) throw std::invalid_argument("cohens_kappa: matrix must be square");

  std::vector<double> rows(k, 0), cols(k, 0);
  double total = 0, diag = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const auto c = static_cast<double>(confusion[i][j]);
      rows[i] += c;
      cols[j] += c;
      total += c;
      if (i == j) diag += c;
    }
  if (total == 0) throw std::invalid_argument("cohens_kappa: no items");

  KappaResult r;
  r.n = static_cast<std::size_t>(total);
  r.observed_agreement = diag / total;
  for (std::size_t i = 0; i < k; ++i) r.expected_agreement += (rows[i] / total) * (cols[i] / total);
  if (r.expected_agreement < 1.0)
    r.kappa = (r.observed_agreement - r.expected_agreement) / (1.0 - r.expected_agreement);
  return r;
}

inline KappaResult cohens_kappa(std::span<const bool> a, std::span<const bool> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cohens_kappa: length mismatch");
  std::vector<std::vector<std::size_t>> m(2, std::vector<std::size_t>(2, 0));
  for (std::size_t i = 0; i < a.size(); ++i) ++m[a[i] ? 0 : 1][b[i] ? 0 : 1];
  return cohens_kappa(m);
}

struct AgreementReport {
  double observed_agreement = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t ties = 0; // reference items decided by the tie rule
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  void add(bool predicted, bool reference) {
    if (predicted && reference) ++tp;
    else if (predicted) ++fp;
    else if (reference) ++fn;
    else ++tn;
  }
  std::size_t total() const { return tp + fp + fn + tn; }
};

// Binary metrics with echoing as the positive class.
inline AgreementReport classification_agreement(const ConfusionCounts& c) {
  if (c.total() == 0) throw std::invalid_argument("classification_agreement: no items");
  AgreementReport r;
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  r.tn = c.tn;
  r.observed_agreement = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fn == 0) return r; // no reference positives: P/R/F1 undefined
  r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (r.precision && r.recall)
    r.f1 = (*r.precision + *r.recall) > 0
               ? 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall)
               : 0.0;
  return r;
}

inline AgreementReport classification_agreement(std::span<const bool> predicted,
                                                std::span<const bool> reference) {
  if (predicted.size() != reference.size())
    throw std::invalid_argument("classification_agreement: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) c.add(predicted[i], reference[i]);
  return classification_agreement(c);
}

struct HumanReference {
  std::map<std::string, bool> echoing; // conversation_id -> reference label
  std::size_t ties = 0;
};

// Per-conversation majority over annotators; a split vote counts as echoing.
inline HumanReference human_reference(std::span<const LabelRecord> labels) {
  std::map<std::string, std::pair<int, int>> votes; // id -> (echoing, not)
  for (const auto& r : resolve_labels(labels)) {
    auto& v = votes[r.conversation_id];
    (*r.label == EchoLabel::echoing ? v.first : v.second)++;
  }
  HumanReference ref;
  for (const auto& [id, v] : votes) {
    if (v.first == v.second) ++ref.ties;
    ref.echoing[id] = v.first >= v.second;
  }
  return ref;
}

// Judge vs human reference over the conversations both cover.
inline AgreementReport judge_vs_human(std::span<const EchoVerdict> verdicts,
                                      std::span<const LabelRecord> labels) {
  const auto ref = human_reference(labels);
  std::map<std::string, int> by_id;
  for (const auto& v : verdicts) by_id[v.conversation_id] = v.sigma;
  ConfusionCounts c;
  for (const auto& [id, is_echo] : ref.echoing)
    if (auto it = by_id.find(id); it != by_id.end()) c.add(it->second == 1, is_echo);
  if (c.total() == 0) throw std::invalid_argument("judge_vs_human: no overlapping conversations");
  auto r = classification_agreement(c);
  r.ties = ref.ties;
  return r;
}

// Agreement between two annotators on the conversations both labelled.
inline KappaResult annotator_agreement(std::span<const LabelRecord> a,
                                       std::span<const LabelRecord> b) {
  std::map<std::string, bool> la, lb;
  for (const auto& r : resolve_labels(a)) la[r.conversation_id] = *r.label == EchoLabel::echoing;
  for (const auto& r : resolve_labels(b)) lb[r.conversation_id] = *r.label == EchoLabel::echoing;
  std::vector<std::vector<std::size_t>> m(2, std::vector<std::size_t>(2, 0));
  std::size_t n = 0;
  for (const auto& [id, va] : la) {
    auto it = lb.find(id);
    if (it == lb.end()) continue;
    ++m[va ? 0 : 1][it->second ? 0 : 1];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("annotator_agreement: no doubly-labelled conversations");
  return cohens_kappa(m);
}

} // namespace spasm
