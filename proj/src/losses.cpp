// SPDX-License-Identifier: Apache-2.0
#include "premier/losses.hpp"

#include <cmath>
#include <string>

#include "premier/error.hpp"

namespace premier {

void LossWeights::validate() const {
  if (entropy < 0 || hinge < 0 || adverse < 0) throw ConfigError("loss weights must be nonnegative");
  if (std::abs(entropy + hinge + adverse - 1.0) > 1e-9)
    throw ConfigError("loss weights must sum to 1 (got " + std::to_string(entropy + hinge + adverse) + ")");
}

namespace {

MatrixX scalar_matrix(Real v) {
  MatrixX m(1, 1);
  m(0, 0) = v;
  return m;
}

void require_targets(const Var& p, const MatrixX& y, const char* op) {
  if (p.rows() != y.rows() || p.cols() != y.cols())
    throw ShapeError(std::string(op) + ": probabilities " + ad::shape_string(p.rows(), p.cols()) + " vs targets " +
                     ad::shape_string(y.rows(), y.cols()));
}

}  // namespace

Var bce_loss(const Var& probabilities, const MatrixX& targets) {
  require_targets(probabilities, targets, "bce_loss");
  const MatrixX& p = probabilities.value();
  const MatrixX clamped = p.cwiseMax(kProbabilityClamp).cwiseMin(1.0 - kProbabilityClamp);
  const Real loss = -(targets.array() * clamped.array().log() +
                      (1.0 - targets.array()) * (1.0 - clamped.array()).log())
                         .sum();
  const auto ip = probabilities.id();
  return probabilities.tape()->record(
      scalar_matrix(loss), {probabilities}, [ip, p, targets](Tape& t, std::size_t self) {
        const Real g = t.grad(self)(0, 0);
        MatrixX d(p.rows(), p.cols());
        for (Eigen::Index c = 0; c < p.cols(); ++c)
          for (Eigen::Index r = 0; r < p.rows(); ++r) {
            const Real x = p(r, c), y = targets(r, c);
            d(r, c) = (x < kProbabilityClamp || x > 1.0 - kProbabilityClamp) ? 0.0 : -y / x + (1.0 - y) / (1.0 - x);
          }
        t.accumulate(ip, g * d);
      });
}

Var hinge_loss(const Var& probabilities, const MatrixX& targets, std::size_t* skipped) {
  require_targets(probabilities, targets, "hinge_loss");
  const MatrixX& p = probabilities.value();
  const Eigen::Index n = p.rows();
  Real loss = 0;
  MatrixX d = MatrixX::Zero(n, p.cols());
  std::size_t skipped_visits = 0;
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    std::vector<Eigen::Index> positives;
    for (Eigen::Index r = 0; r < n; ++r)
      if (targets(r, c) > 0.5) positives.push_back(r);
    if (positives.empty()) {
      ++skipped_visits;
      continue;
    }
    const Real scale = 1.0 / static_cast<Real>(positives.size());
    for (Eigen::Index u : positives)
      for (Eigen::Index k = 0; k < n; ++k) {
        const Real margin = 1.0 - (p(u, c) - p(k, c));
        if (margin <= 0) continue;
        loss += scale * margin;
        if (k != u) {
          d(u, c) -= scale;
          d(k, c) += scale;
        }
      }
  }
  if (skipped) *skipped = skipped_visits;
  const auto ip = probabilities.id();
  return probabilities.tape()->record(scalar_matrix(loss), {probabilities},
                                      [ip, d = std::move(d)](Tape& t, std::size_t self) {
                                        t.accumulate(ip, t.grad(self)(0, 0) * d);
                                      });
}

Var ddi_loss(const Var& probabilities, const MatrixX& adjacency) {
  const MatrixX& p = probabilities.value();
  if (adjacency.rows() != p.rows() || adjacency.cols() != p.rows())
    throw ShapeError("ddi_loss: adjacency " + ad::shape_string(adjacency.rows(), adjacency.cols()) +
                     " does not match " + std::to_string(p.rows()) + " medications");
  const MatrixX lower = adjacency.triangularView<Eigen::StrictlyLower>();
  const Real loss = (p.transpose() * lower * p).trace();
  const MatrixX sym = lower + lower.transpose();
  const auto ip = probabilities.id();
  return probabilities.tape()->record(scalar_matrix(loss), {probabilities},
                                      [ip, sym, p](Tape& t, std::size_t self) {
                                        t.accumulate(ip, t.grad(self)(0, 0) * (sym * p));
                                      });
}

Var combined_loss(const Var& bce, const Var& hinge, const Var& ddi, const LossWeights& weights) {
  weights.validate();
  return weights.entropy * bce + weights.hinge * hinge + weights.adverse * ddi;
}

}  // namespace premier
