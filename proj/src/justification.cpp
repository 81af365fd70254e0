// SPDX-License-Identifier: Apache-2.0
#include "premier/justification.hpp"

#include <algorithm>
#include <cmath>

#include "premier/error.hpp"

namespace premier {

std::string_view to_string(Source source) {
  switch (source) {
    case Source::Diagnosis: return "diagnosis";
    case Source::Procedure: return "procedure";
    case Source::Medication: return "medication";
    case Source::Cooccurrence: return "cooccurrence";
    case Source::Interaction: return "interaction";
  }
  return "unknown";
}

Real ContributionBreakdown::residual() const {
  Real sum = bias - logit;
  for (const auto& e : elements) sum += e.raw;
  return sum;
}

namespace {

std::size_t slot(Source s) { return static_cast<std::size_t>(s); }

Real scalar_of(const Parameter& p) { return p.value()(0, 0); }

void finish_shares(ContributionBreakdown& b) {
  Real denom = 0;
  for (Real t : b.totals) denom += std::abs(t);
  for (std::size_t s = 0; s < kNumSources; ++s) {
    b.signs[s] = (b.totals[s] > 0) - (b.totals[s] < 0);
    b.shares[s] = denom > 0 ? std::abs(b.totals[s]) / denom : 1.0 / kNumSources;
  }
  b.degenerate = !(denom > 0);
}

}  // namespace

ContributionBreakdown compute_contributions(const PremierModel& model, const PatientRecord& record,
                                            const PatientForward& forward, std::size_t visit,
                                            std::size_t medication) {
  const auto& cfg = model.config();
  if (visit >= forward.visits.size() || visit >= record.visits.size())
    throw EncodingError("visit index out of range", visit);
  if (medication >= cfg.n_medications) throw EncodingError("medication index out of range", medication);

  const auto& vf = forward.visits[visit];
  const auto j = static_cast<Eigen::Index>(medication);
  const MatrixX& ef = model.output_weight.value();
  const VectorX row = ef.row(j).transpose();
  const MatrixX& ed = model.embeddings.diagnosis.value();
  const MatrixX& ep = model.embeddings.procedure.value();
  const MatrixX& em = model.embeddings.medication.value();

  ContributionBreakdown b;
  b.visit = visit;
  b.medication = medication;
  b.logit = vf.prediction.logits.value()(j, 0);
  b.probability = vf.prediction.probabilities.value()(j, 0);
  b.bias = model.output_bias.value()(j, 0);
  b.predicted = b.probability > 0.5;

  auto add = [&b](Source s, std::optional<std::size_t> i, std::optional<std::size_t> k, Real raw) {
    b.elements.push_back({s, i, k, raw});
    b.totals[slot(s)] += raw;
  };

  const MatrixX& alpha_d = vf.alpha_d.value();
  const MatrixX& beta_d = vf.beta_d.value();
  for (std::size_t i = 0; i <= visit; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const VectorX gated_row = row.cwiseProduct(beta_d.col(ii));
    for (std::size_t k : record.visits[i].diagnoses)
      add(Source::Diagnosis, i, k, alpha_d(0, ii) * gated_row.dot(ed.col(static_cast<Eigen::Index>(k))));
  }

  const Real w1 = scalar_of(model.w1);
  const MatrixX& alpha_p = vf.alpha_p.value();
  const MatrixX& beta_p = vf.beta_p.value();
  for (std::size_t i = 0; i <= visit; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const VectorX gated_row = row.cwiseProduct(beta_p.col(ii));
    for (std::size_t k : record.visits[i].procedures)
      add(Source::Procedure, i, k, w1 * alpha_p(0, ii) * gated_row.dot(ep.col(static_cast<Eigen::Index>(k))));
  }

  if (vf.gamma) {
    const Real w2 = scalar_of(model.w2);
    const MatrixX& gamma = vf.gamma->value();
    for (std::size_t i = 0; i < visit; ++i)
      for (std::size_t k : forward.memory_medications[i])
        add(Source::Medication, i, k,
            w2 * gamma(static_cast<Eigen::Index>(i), 0) * row.dot(em.col(static_cast<Eigen::Index>(k))));
  }

  if (vf.drug_read) {
    const Real w3 = scalar_of(model.w3);
    const Real w4 = scalar_of(model.w4);
    const MatrixX& lambda = vf.drug_read->lambda.value();
    if (forward.drugs.cooccurrence) {
      const MatrixX& zc = forward.drugs.cooccurrence->representation.value();
      add(Source::Cooccurrence, std::nullopt, std::nullopt, w4 * row.dot((zc * lambda).col(0)));
    }
    if (forward.drugs.interaction) {
      const MatrixX& zd = forward.drugs.interaction->representation.value();
      add(Source::Interaction, std::nullopt, std::nullopt, w4 * w3 * row.dot((zd * lambda).col(0)));
    }
  }

  finish_shares(b);
  return b;
}

std::vector<ContributionBreakdown> explain_visit(const PremierModel& model, const PatientRecord& record,
                                                 std::size_t visit, HistoryMode history, Real threshold) {
  Tape tape(false);
  ForwardOptions options;
  options.history = history;
  options.threshold = threshold;
  const auto forward = forward_patient(tape, model, record, options);
  std::vector<ContributionBreakdown> out;
  out.reserve(model.config().n_medications);
  for (std::size_t j = 0; j < model.config().n_medications; ++j) {
    auto b = compute_contributions(model, record, forward, visit, j);
    b.predicted = b.probability > threshold;
    out.push_back(std::move(b));
  }
  return out;
}

Justification normalize_and_rank(const ContributionBreakdown& breakdown, std::size_t top_n) {
  Justification out;
  out.medication = breakdown.medication;
  out.shares = breakdown.shares;
  out.signs = breakdown.signs;
  out.bias = breakdown.bias;
  out.degenerate = breakdown.degenerate;
  if (breakdown.degenerate) return out;

  Real denom = 0;
  for (Real t : breakdown.totals) denom += std::abs(t);
  std::vector<const ElementScore*> order;
  order.reserve(breakdown.elements.size());
  for (const auto& e : breakdown.elements)
    if (e.raw != 0) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(),
                   [](const ElementScore* a, const ElementScore* b) { return std::abs(a->raw) > std::abs(b->raw); });
  for (std::size_t i = 0; i < std::min(top_n, order.size()); ++i) {
    const auto& e = *order[i];
    out.top.push_back({e.source, e.visit, e.code, e.raw, std::abs(e.raw) / denom});
  }
  return out;
}

SourceArray source_distribution(std::span<const ContributionBreakdown> breakdowns) {
  if (breakdowns.empty()) throw DataError("source distribution needs at least one recommended medication");
  SourceArray mean{};
  for (const auto& b : breakdowns)
    for (std::size_t s = 0; s < kNumSources; ++s) mean[s] += b.shares[s];
  for (auto& m : mean) m /= static_cast<Real>(breakdowns.size());
  return mean;
}

std::string contributor_label(const Contributor& c, const Vocabularies& vocabularies) {
  switch (c.source) {
    case Source::Diagnosis: return vocabularies.vocab_d.code(*c.code);
    case Source::Procedure: return vocabularies.vocab_p.code(*c.code);
    case Source::Medication: return vocabularies.vocab_m.code(*c.code);
    case Source::Cooccurrence: return "drug co-occurrence";
    case Source::Interaction: return "drug interaction";
  }
  return "unknown";
}

}  // namespace premier
