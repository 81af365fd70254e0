// SPDX-License-Identifier: Apache-2.0
//
// Training objectives over a patient's visits. Probabilities and targets are
// N_m x t, one column per visit.
#pragma once

#include <cstddef>

#include "premier/types.hpp"

namespace premier {

inline constexpr Real kProbabilityClamp = 1e-7;

struct LossWeights {
  Real entropy = 0.79;
  Real hinge = 0.01;
  Real adverse = 0.2;

  /// Nonnegative and summing to one within 1e-9, else ConfigError.
  void validate() const;
};

/// -sum y ln p + (1 - y) ln(1 - p), with p clamped to [eps, 1 - eps].
Var bce_loss(const Var& probabilities, const MatrixX& targets);

/// sum over visits, k, and u in U of max(0, 1 - (p[u] - p[k])) / |U|, U the
/// positive set. Visits with empty U are skipped and counted in `skipped`.
Var hinge_loss(const Var& probabilities, const MatrixX& targets, std::size_t* skipped = nullptr);

/// sum over visits and j > k of A[j, k] p[j] p[k].
Var ddi_loss(const Var& probabilities, const MatrixX& adjacency);

Var combined_loss(const Var& bce, const Var& hinge, const Var& ddi, const LossWeights& weights);

}  // namespace premier
