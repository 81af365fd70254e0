// SPDX-License-Identifier: Apache-2.0
#include "premier/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>

#include "premier/error.hpp"

namespace premier {

namespace {

std::size_t intersection_size(const IndexSet& a, const IndexSet& b) {
  std::size_t n = 0;
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j)
      ++i;
    else if (*j < *i)
      ++j;
    else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

}  // namespace

Real jaccard(const IndexSet& predicted, const IndexSet& truth) {
  const IndexSet p = normalize(predicted), t = normalize(truth);
  if (p.empty() && t.empty()) return 1.0;
  const auto inter = intersection_size(p, t);
  return static_cast<Real>(inter) / static_cast<Real>(p.size() + t.size() - inter);
}

Real f1(const IndexSet& predicted, const IndexSet& truth) {
  const IndexSet p = normalize(predicted), t = normalize(truth);
  if (p.empty() && t.empty()) return 1.0;
  if (p.empty() || t.empty()) return 0.0;
  const auto inter = static_cast<Real>(intersection_size(p, t));
  if (inter == 0) return 0.0;
  const Real precision = inter / static_cast<Real>(p.size());
  const Real recall = inter / static_cast<Real>(t.size());
  return 2 * precision * recall / (precision + recall);
}

Real auc(const std::vector<VectorX>& scores, const std::vector<IndexSet>& truth) {
  if (scores.size() != truth.size()) throw ShapeError("auc: score and truth visit counts differ");
  std::vector<std::pair<Real, bool>> entries;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    std::vector<bool> positive(static_cast<std::size_t>(scores[v].size()), false);
    for (std::size_t k : truth[v]) {
      if (k >= positive.size()) throw EncodingError("auc: truth index out of range", k);
      positive[k] = true;
    }
    for (Eigen::Index k = 0; k < scores[v].size(); ++k) entries.emplace_back(scores[v][k], positive[static_cast<std::size_t>(k)]);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Real positive_rank_sum = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t j = i;
    while (j < entries.size() && entries[j].first == entries[i].first) ++j;
    const Real mean_rank = (static_cast<Real>(i + 1) + static_cast<Real>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (entries[k].second) {
        positive_rank_sum += mean_rank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = entries.size() - positives;
  if (positives == 0 || negatives == 0) throw MetricError("auc needs at least one positive and one negative entry");
  const Real p = static_cast<Real>(positives), n = static_cast<Real>(negatives);
  return (positive_rank_sum - p * (p + 1) / 2.0) / (p * n);
}

std::size_t interacting_pairs(const IndexSet& predicted, const MatrixX& adjacency) {
  std::size_t n = 0;
  for (std::size_t a = 0; a < predicted.size(); ++a)
    for (std::size_t b = a + 1; b < predicted.size(); ++b)
      if (adjacency(static_cast<Eigen::Index>(predicted[a]), static_cast<Eigen::Index>(predicted[b])) != 0) ++n;
  return n;
}

Real ddi_rate(const std::vector<IndexSet>& predicted, const MatrixX& adjacency) {
  std::size_t interacting = 0, total = 0;
  for (const auto& raw : predicted) {
    const IndexSet p = normalize(raw);
    if (p.size() < 2) continue;
    for (std::size_t k : p)
      if (k >= static_cast<std::size_t>(adjacency.rows())) throw EncodingError("ddi_rate: medication index out of range", k);
    interacting += interacting_pairs(p, adjacency);
    total += p.size() * (p.size() - 1) / 2;
  }
  if (total == 0) throw MetricError("ddi_rate needs a visit with at least two predicted medications");
  return static_cast<Real>(interacting) / static_cast<Real>(total);
}

Real dscore(Real accuracy, Real ddi) {
  const Real safety = 1.0 - ddi;
  const Real denom = accuracy + safety;
  return denom == 0 ? 0.0 : 2.0 * accuracy * safety / denom;
}

MissedExtra missed_extra(const std::vector<IndexSet>& predicted, const std::vector<IndexSet>& truth) {
  if (predicted.size() != truth.size()) throw ShapeError("missed_extra: visit counts differ");
  MissedExtra out;
  if (predicted.empty()) return out;
  for (std::size_t v = 0; v < predicted.size(); ++v) {
    const IndexSet p = normalize(predicted[v]), t = normalize(truth[v]);
    const auto inter = intersection_size(p, t);
    out.missed += static_cast<Real>(t.size() - inter);
    out.extra += static_cast<Real>(p.size() - inter);
  }
  out.missed /= static_cast<Real>(predicted.size());
  out.extra /= static_cast<Real>(predicted.size());
  return out;
}

Predictor model_predictor(const PremierModel& model, HistoryMode history, Real threshold) {
  auto drugs = std::make_shared<const DrugValues>(compute_drug_values(model));
  return [&model, history, threshold, drugs](const PatientRecord& record) {
    return predict_patient(model, record, history, threshold, drugs.get());
  };
}

FrequencyBaseline::FrequencyBaseline(const Cohort& train, std::size_t k) {
  const std::size_t n = train.vocab_m.size();
  if (k > n) throw ConfigError("frequency baseline k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " medications");
  counts_.assign(n, 0);
  for (const auto& r : train.records)
    for (const auto& v : r.visits)
      for (std::size_t m : v.medications) ++counts_.at(m);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) { return counts_[a] > counts_[b]; });
  predicted_ = normalize(IndexSet(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k)));
  const Real max_count = n == 0 ? 0.0 : static_cast<Real>(*std::max_element(counts_.begin(), counts_.end()));
  scores_ = VectorX::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j)
    scores_[static_cast<Eigen::Index>(j)] = max_count > 0 ? static_cast<Real>(counts_[j]) / max_count : 0.0;
}

std::vector<VisitScores> FrequencyBaseline::operator()(const PatientRecord& record) const {
  std::vector<VisitScores> out(record.visits.size());
  for (auto& s : out) {
    s.probabilities = scores_;
    s.logits = scores_;
    s.predicted = predicted_;
  }
  return out;
}

std::size_t mean_prescription_count(const Cohort& cohort) {
  std::size_t visits = 0, total = 0;
  for (const auto& r : cohort.records)
    for (const auto& v : r.visits) {
      ++visits;
      total += v.medications.size();
    }
  if (visits == 0) throw DataError("cohort has no visits");
  return static_cast<std::size_t>(std::lround(static_cast<Real>(total) / static_cast<Real>(visits)));
}

EvaluationSet collect_predictions(const Cohort& cohort, const Predictor& predictor) {
  EvaluationSet set;
  for (const auto& record : cohort.records) {
    const auto scores = predictor(record);
    if (scores.size() != record.visits.size()) throw ShapeError("predictor returned the wrong number of visits");
    for (std::size_t t = 0; t < scores.size(); ++t) {
      if (record.visits[t].medications.empty()) continue;
      set.scores.push_back(scores[t].probabilities);
      set.predicted.push_back(scores[t].predicted);
      set.truth.push_back(record.visits[t].medications);
    }
  }
  return set;
}

MetricsReport evaluate(const EvaluationSet& set, const MatrixX& adjacency, std::string method) {
  if (set.truth.empty()) throw MetricError("evaluation set has no visits with recorded medications");
  MetricsReport r;
  r.method = std::move(method);
  r.visits = set.truth.size();
  for (std::size_t v = 0; v < set.truth.size(); ++v) {
    r.jaccard += jaccard(set.predicted[v], set.truth[v]);
    r.f1 += f1(set.predicted[v], set.truth[v]);
    r.avg_medications += static_cast<Real>(set.predicted[v].size());
  }
  const Real n = static_cast<Real>(r.visits);
  r.jaccard /= n;
  r.f1 /= n;
  r.avg_medications /= n;
  try {
    r.auc = auc(set.scores, set.truth);
  } catch (const MetricError&) {
    r.auc_defined = false;
    r.auc = 0.5;
  }
  try {
    r.ddi_rate = ddi_rate(set.predicted, adjacency);
  } catch (const MetricError&) {
    r.ddi_defined = false;
    r.ddi_rate = 0.0;
  }
  const auto me = missed_extra(set.predicted, set.truth);
  r.avg_missed = me.missed;
  r.avg_extra = me.extra;
  r.dscore_auc = dscore(r.auc, r.ddi_rate);
  r.dscore_f1 = dscore(r.f1, r.ddi_rate);
  r.dscore_jac = dscore(r.jaccard, r.ddi_rate);
  return r;
}

MetricsReport evaluate(const Cohort& cohort, const Predictor& predictor, const MatrixX& adjacency,
                       std::string method) {
  return evaluate(collect_predictions(cohort, predictor), adjacency, std::move(method));
}

std::string metrics_csv_header() {
  return "method,auc,f1,jaccard,ddi,dscore_auc,dscore_f1,dscore_jac,avg_medications,avg_missed,avg_extra";
}

std::string metrics_csv_row(const MetricsReport& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  std::string method = r.method;
  if (method.find_first_of(",\"") != std::string::npos) {
    std::string quoted = "\"";
    for (char c : method) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
    method = quoted + "\"";
  }
  out << method << ',' << r.auc << ',' << r.f1 << ',' << r.jaccard << ',' << r.ddi_rate << ',' << r.dscore_auc << ','
      << r.dscore_f1 << ',' << r.dscore_jac << ',' << r.avg_medications << ',' << r.avg_missed << ',' << r.avg_extra;
  return out.str();
}

void write_metrics_report(const MetricsReport& r, std::ostream& out) {
  const auto old_precision = out.precision(6);
  out << "method=" << r.method << '\n'
      << "visits=" << r.visits << '\n'
      << "auc=" << r.auc << '\n'
      << "auc_defined=" << (r.auc_defined ? "true" : "false") << '\n'
      << "f1=" << r.f1 << '\n'
      << "jaccard=" << r.jaccard << '\n'
      << "ddi_rate=" << r.ddi_rate << '\n'
      << "ddi_defined=" << (r.ddi_defined ? "true" : "false") << '\n'
      << "dscore_auc=" << r.dscore_auc << '\n'
      << "dscore_f1=" << r.dscore_f1 << '\n'
      << "dscore_jac=" << r.dscore_jac << '\n'
      << "avg_medications=" << r.avg_medications << '\n'
      << "avg_missed=" << r.avg_missed << '\n'
      << "avg_extra=" << r.avg_extra << '\n';
  out.precision(old_precision);
}

}  // namespace premier
