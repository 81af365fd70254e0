// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "premier/error.hpp"
#include "premier/metrics.hpp"
#include "test_util.hpp"

namespace premier {
namespace {

using testing::random_adjacency;
using testing::random_subset;

VectorX vec(std::initializer_list<double> values) {
  VectorX v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
double pairwise_auc(const std::vector<VectorX>& scores, const std::vector<IndexSet>& truth) {
  std::vector<double> pos, neg;
  for (std::size_t v = 0; v < scores.size(); ++v)
    for (Eigen::Index k = 0; k < scores[v].size(); ++k) {
      const bool is_pos = std::find(truth[v].begin(), truth[v].end(), static_cast<std::size_t>(k)) != truth[v].end();
      (is_pos ? pos : neg).push_back(scores[v][k]);
    }
  double good = 0;
  for (double a : pos)
    for (double b : neg) good += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return good / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

TEST(SetMetrics, JaccardAndF1Examples) {
  EXPECT_DOUBLE_EQ(jaccard({0, 1, 2}, {1, 2, 3}), 0.5);
  EXPECT_DOUBLE_EQ(jaccard({}, {}), 1.0);
  EXPECT_DOUBLE_EQ(jaccard({}, {1}), 0.0);
  EXPECT_DOUBLE_EQ(jaccard({4}, {4}), 1.0);
  // P = 2/3, R = 2/3.
  EXPECT_NEAR(f1({0, 1, 2}, {1, 2, 3}), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(f1({}, {}), 1.0);
  EXPECT_DOUBLE_EQ(f1({0}, {}), 0.0);
  EXPECT_DOUBLE_EQ(f1({}, {0}), 0.0);
  // P = 1, R = 1/4.
  EXPECT_NEAR(f1({0}, {0, 1, 2, 3}), 0.4, 1e-15);
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc({vec({0.9, 0.1, 0.8, 0.2})}, {{0, 2}}), 1.0);
  EXPECT_DOUBLE_EQ(auc({vec({0.1, 0.9, 0.2, 0.8})}, {{0, 2}}), 0.0);
  EXPECT_DOUBLE_EQ(auc({vec({0.5, 0.5, 0.5, 0.5})}, {{0, 2}}), 0.5);
  // Pooled over visits, not averaged per visit.
  EXPECT_DOUBLE_EQ(auc({vec({0.9, 0.1}), vec({0.2, 0.3})}, {{0}, {0}}), 0.75);
  EXPECT_THROW(auc({vec({0.9, 0.1})}, {{0, 1}}), MetricError);
  EXPECT_THROW(auc({vec({0.9, 0.1})}, {{}}), MetricError);
}

TEST(Auc, MatchesPairwiseCountWithTies) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<VectorX> scores;
    std::vector<IndexSet> truth;
    for (int v = 0; v < 4; ++v) {
      VectorX s(6);
      for (Eigen::Index k = 0; k < 6; ++k) s[k] = static_cast<double>(rng() % 5) / 4.0;
      scores.push_back(s);
      truth.push_back(random_subset(rng, 6, 1, 5));
    }
    EXPECT_NEAR(auc(scores, truth), pairwise_auc(scores, truth), 1e-12);
  }
}

TEST(DdiRate, Examples) {
  MatrixX a = MatrixX::Zero(4, 4);
  a(0, 1) = a(1, 0) = 1;
  EXPECT_DOUBLE_EQ(ddi_rate({{0, 1}}, a), 1.0);
  EXPECT_DOUBLE_EQ(ddi_rate({{0, 1, 2}}, a), 1.0 / 3.0);
  // Pooled: one interacting pair out of 3 + 1 pairs; the singleton visit adds nothing.
  EXPECT_DOUBLE_EQ(ddi_rate({{0, 1, 2}, {2, 3}, {0}}, a), 0.25);
  EXPECT_EQ(interacting_pairs({0, 1, 2, 3}, a), 1u);
  EXPECT_THROW(ddi_rate({{0}, {}}, a), MetricError);
}

TEST(DdiRate, MatchesBruteForce) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixX a = random_adjacency(rng, 8, 0.3);
    std::vector<IndexSet> sets;
    for (int v = 0; v < 5; ++v) sets.push_back(random_subset(rng, 8, 2, 6));
    double hits = 0, pairs = 0;
    for (const auto& s : sets)
      for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = i + 1; j < s.size(); ++j) {
          ++pairs;
          hits += a(static_cast<Eigen::Index>(s[i]), static_cast<Eigen::Index>(s[j])) != 0;
        }
    EXPECT_NEAR(ddi_rate(sets, a), hits / pairs, 1e-15);
  }
}

TEST(DScore, ReportedTableValues) {
  EXPECT_NEAR(dscore(0.7795, 0.0750), 0.8460, 5e-4);
  EXPECT_NEAR(dscore(0.6549, 0.0792), 0.7654, 5e-4);
  EXPECT_NEAR(dscore(0.7472, 0.0790), 0.8250, 5e-4);
  EXPECT_DOUBLE_EQ(dscore(0.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(dscore(1.0, 0.0), 1.0);
}

TEST(DScore, MonotoneInBothArguments) {
  for (int i = 0; i <= 20; ++i)
    for (int j = 0; j <= 20; ++j) {
      const double acc = i / 20.0, ddi = j / 20.0;
      const double d = dscore(acc, ddi);
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      if (i < 20) EXPECT_LE(d, dscore((i + 1) / 20.0, ddi) + 1e-15);
      if (j < 20) EXPECT_GE(d, dscore(acc, (j + 1) / 20.0) - 1e-15);
    }
}

TEST(MissedExtra, CountsPerVisit) {
  const auto me = missed_extra({{0, 1, 2}, {3}}, {{1, 2, 3}, {0, 3, 4}});
  EXPECT_DOUBLE_EQ(me.missed, 1.5);
  EXPECT_DOUBLE_EQ(me.extra, 0.5);
}

Cohort tally_cohort() {
  std::mt19937_64 rng(13);
  return testing::random_cohort(rng, 12, 5, 4, 7, 4);
}

TEST(FrequencyBaseline, CountsAndRanking) {
  const Cohort c = tally_cohort();
  std::vector<std::size_t> counts(7, 0);
  for (const auto& r : c.records)
    for (const auto& v : r.visits)
      for (auto m : v.medications) ++counts[m];
  const FrequencyBaseline all(c, 7);
  EXPECT_EQ(all.counts(), counts);
  ASSERT_EQ(all.predicted().size(), 7u);
  for (std::size_t k = 0; k <= 7; ++k) {
    const FrequencyBaseline top(c, k);
    const auto& chosen = top.predicted();
    ASSERT_EQ(chosen.size(), k);
    EXPECT_TRUE(std::is_sorted(chosen.begin(), chosen.end()));
    for (std::size_t in : chosen)
      for (std::size_t out = 0; out < 7; ++out) {
        if (std::find(chosen.begin(), chosen.end(), out) != chosen.end()) continue;
        EXPECT_TRUE(counts[in] > counts[out] || (counts[in] == counts[out] && in < out));
      }
  }
  const FrequencyBaseline none(c, 0);
  const auto scores = none(c.records.front());
  ASSERT_EQ(scores.size(), c.records.front().visits.size());
  for (const auto& s : scores) EXPECT_TRUE(s.predicted.empty());
  const FrequencyBaseline three(c, 3);
  for (const auto& s : three(c.records.front())) {
    EXPECT_EQ(s.predicted.size(), 3u);
    EXPECT_TRUE(std::is_sorted(s.predicted.begin(), s.predicted.end()));
  }
  EXPECT_THROW(FrequencyBaseline(c, 8), ConfigError);
}

TEST(FrequencyBaseline, MeanPrescriptionCountRounds) {
  Cohort c;
  const auto v = testing::synthetic_vocabularies(2, 2, 5);
  c.vocab_d = v.vocab_d;
  c.vocab_p = v.vocab_p;
  c.vocab_m = v.vocab_m;
  PatientRecord r;
  r.patient_id = "a";
  r.visits.push_back({{0}, {}, {0, 1}});
  r.visits.push_back({{0}, {}, {0, 1, 2}});
  r.visits.push_back({{0}, {}, {0, 1, 2, 3}});
  c.records.push_back(r);
  EXPECT_EQ(mean_prescription_count(c), 3u);
}

TEST(Evaluate, ReportIsConsistent) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    EvaluationSet set;
    for (int v = 0; v < 10; ++v) {
      VectorX s(6);
      for (Eigen::Index k = 0; k < 6; ++k) s[k] = std::uniform_real_distribution<double>(0, 1)(rng);
      set.scores.push_back(s);
      set.predicted.push_back(threshold_predictions(s));
      set.truth.push_back(random_subset(rng, 6, 1, 6));
    }
    const auto a = random_adjacency(rng, 6, 0.3);
    const auto r = evaluate(set, a, "m");
    double overlap = 0, truth = 0;
    for (std::size_t v = 0; v < 10; ++v) {
      truth += static_cast<double>(set.truth[v].size());
      for (auto k : set.predicted[v])
        overlap += std::find(set.truth[v].begin(), set.truth[v].end(), k) != set.truth[v].end();
    }
    EXPECT_NEAR(r.avg_missed + overlap / 10, truth / 10, 1e-12);
    EXPECT_EQ(r.visits, 10u);
    if (r.ddi_defined) EXPECT_NEAR(r.dscore_jac, dscore(r.jaccard, r.ddi_rate), 1e-15);
  }
}

TEST(Evaluate, UndefinedMetricsAreFlagged) {
  EvaluationSet set;
  set.scores = {vec({0.9, 0.1})};
  set.predicted = {{0}};
  set.truth = {{0, 1}};
  const auto r = evaluate(set, MatrixX::Zero(2, 2), "m");
  EXPECT_FALSE(r.auc_defined);
  EXPECT_FALSE(r.ddi_defined);
  EXPECT_DOUBLE_EQ(r.ddi_rate, 0.0);
}

TEST(Evaluate, CsvFormat) {
  MetricsReport r;
  r.method = "x";
  r.auc = 0.5;
  r.f1 = 0.25;
  EXPECT_EQ(metrics_csv_header(),
            "method,auc,f1,jaccard,ddi,dscore_auc,dscore_f1,dscore_jac,avg_medications,avg_missed,avg_extra");
  EXPECT_EQ(metrics_csv_row(r), "x,0.5000,0.2500,0.0000,0.0000,0.0000,0.0000,0.0000,0.0000,0.0000,0.0000");
  std::ostringstream out;
  write_metrics_report(r, out);
  EXPECT_NE(out.str().find("auc=0.5"), std::string::npos);
}

TEST(Evaluate, ModelPredictorMatchesPredictPatient) {
  const auto model = testing::random_model(15);
  std::mt19937_64 rng(15);
  const auto record = testing::random_record(rng, 4, 3, 5, 3, true);
  const auto cached = model_predictor(model)(record);
  const auto direct = predict_patient(model, record);
  ASSERT_EQ(cached.size(), direct.size());
  for (std::size_t v = 0; v < direct.size(); ++v) {
    EXPECT_LE((cached[v].probabilities - direct[v].probabilities).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(cached[v].predicted, direct[v].predicted);
  }
}

}  // namespace
}  // namespace premier
