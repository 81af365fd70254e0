// SPDX-License-Identifier: Apache-2.0
//
// Set and ranking metrics over visits, DDI rate, DScore, and the
// most-frequent-medications baseline.
#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "premier/ehr.hpp"
#include "premier/model.hpp"

namespace premier {

/// |pred ∩ truth| / |pred ∪ truth|; 1 when both are empty.
Real jaccard(const IndexSet& predicted, const IndexSet& truth);
/// 2PR / (P + R); 1 when both are empty, 0 when exactly one is.
Real f1(const IndexSet& predicted, const IndexSet& truth);

/// Micro ROC-AUC over all (visit, medication) entries, rank statistic with tied
/// ranks averaged. Columns are visits. MetricError without both classes.
Real auc(const std::vector<VectorX>& scores, const std::vector<IndexSet>& truth);

/// Interacting predicted pairs over all predicted pairs, pooled over visits.
/// MetricError when no visit has two or more predictions.
Real ddi_rate(const std::vector<IndexSet>& predicted, const MatrixX& adjacency);
std::size_t interacting_pairs(const IndexSet& predicted, const MatrixX& adjacency);

/// Harmonic mean of acc and 1 - ddi; 0 when both vanish.
Real dscore(Real accuracy, Real ddi);

struct MissedExtra {
  Real missed = 0;
  Real extra = 0;
};
MissedExtra missed_extra(const std::vector<IndexSet>& predicted, const std::vector<IndexSet>& truth);

/// Per-visit scores and predicted sets for one patient.
using Predictor = std::function<std::vector<VisitScores>(const PatientRecord&)>;

/// Model inference with Z_C / Z_D computed once.
Predictor model_predictor(const PremierModel& model, HistoryMode history = HistoryMode::Recorded,
                          Real threshold = 0.5);

class FrequencyBaseline {
 public:
  FrequencyBaseline(const Cohort& train, std::size_t k);

  const std::vector<std::size_t>& counts() const { return counts_; }
  /// The k most frequent codes in ascending index order; ties go to the lower index.
  const IndexSet& predicted() const { return predicted_; }
  std::vector<VisitScores> operator()(const PatientRecord& record) const;

 private:
  std::vector<std::size_t> counts_;
  IndexSet predicted_;
  VectorX scores_;
};

/// Mean medication-set size over training visits, rounded to nearest.
std::size_t mean_prescription_count(const Cohort& cohort);

struct EvaluationSet {
  std::vector<VectorX> scores;
  std::vector<IndexSet> predicted;
  std::vector<IndexSet> truth;
};

/// Runs `predictor` over every patient; visits without recorded medications are skipped.
EvaluationSet collect_predictions(const Cohort& cohort, const Predictor& predictor);

struct MetricsReport {
  std::string method;
  Real auc = 0;
  Real f1 = 0;
  Real jaccard = 0;
  Real ddi_rate = 0;
  Real dscore_auc = 0;
  Real dscore_f1 = 0;
  Real dscore_jac = 0;
  Real avg_medications = 0;
  Real avg_missed = 0;
  Real avg_extra = 0;
  std::size_t visits = 0;
  bool auc_defined = true;  // false when the truth has a single class
  bool ddi_defined = true;  // false when no visit has two predictions; ddi_rate is then 0
};

MetricsReport evaluate(const EvaluationSet& set, const MatrixX& adjacency, std::string method);
MetricsReport evaluate(const Cohort& cohort, const Predictor& predictor, const MatrixX& adjacency,
                       std::string method);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);
void write_metrics_report(const MetricsReport& report, std::ostream& out);

}  // namespace premier
