// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient checks.
//
// Per entry the error is |analytic - numeric| / max(1, |analytic|, |numeric|),
// i.e. relative for large gradients and absolute near zero. The step for entry
// x is rel_step * max(1, |x|).
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "premier/autodiff.hpp"
#include "premier/error.hpp"

namespace premier {

struct GradCheckReport {
  double max_error = 0.0;
  double tolerance = 1e-4;
  Eigen::Index worst_entry = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries = 0;
  bool passed() const { return max_error <= tolerance; }
};

namespace detail {

inline double gradient_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

template <typename Scalar, typename Eval>
double central_difference(Eval&& eval, Scalar& slot, double rel_step) {
  const Scalar original = slot;
  const double h = rel_step * std::max(1.0, std::abs(static_cast<double>(original)));
  slot = static_cast<Scalar>(original + h);
  const double up = static_cast<double>(eval());
  slot = static_cast<Scalar>(original - h);
  const double down = static_cast<double>(eval());
  slot = original;
  if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite evaluation");
  return (up - down) / (2.0 * h);
}

inline void record(GradCheckReport& report, Eigen::Index entry, double analytic, double numeric) {
  const double err = gradient_error(analytic, numeric);
  ++report.entries;
  if (err > report.max_error || report.worst_entry < 0) {
    report.max_error = std::max(report.max_error, err);
    report.worst_entry = entry;
    report.worst_analytic = analytic;
    report.worst_numeric = numeric;
  }
}

}  // namespace detail

/// Checks a caller-supplied analytic gradient of a plain scalar function.
template <typename Scalar>
GradCheckReport grad_check(const std::function<Scalar(const ad::Matrix<Scalar>&)>& f,
                           const ad::Matrix<Scalar>& analytic, ad::Matrix<Scalar> point, double tol = 1e-4,
                           double rel_step = 1e-5) {
  if (analytic.rows() != point.rows() || analytic.cols() != point.cols())
    throw ShapeError("grad_check: gradient shape differs from point");
  if (!std::isfinite(static_cast<double>(f(point)))) throw NumericError("grad_check: non-finite evaluation");
  GradCheckReport report;
  report.tolerance = tol;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double numeric =
        detail::central_difference([&] { return f(point); }, point.data()[i], rel_step);
    detail::record(report, i, static_cast<double>(analytic.data()[i]), numeric);
  }
  return report;
}

/// Differentiates `build` with the tape and compares against central differences at `point`.
template <typename Scalar>
GradCheckReport grad_check(const std::function<ad::Var<Scalar>(ad::Tape<Scalar>&, const ad::Var<Scalar>&)>& build,
                           const ad::Matrix<Scalar>& point, double tol = 1e-4, double rel_step = 1e-5) {
  ad::Matrix<Scalar> analytic;
  {
    ad::Tape<Scalar> tape;
    auto x = tape.variable(point);
    auto y = build(tape, x);
    tape.backward(y);
    analytic = x.grad();
  }
  std::function<Scalar(const ad::Matrix<Scalar>&)> f = [&](const ad::Matrix<Scalar>& p) {
    ad::Tape<Scalar> tape;
    return build(tape, tape.constant(p)).scalar();
  };
  return grad_check<Scalar>(f, analytic, point, tol, rel_step);
}

/// Checks d(build)/d(every entry of every parameter). Existing gradients are cleared.
template <typename Scalar>
GradCheckReport grad_check_parameters(const std::function<ad::Var<Scalar>(ad::Tape<Scalar>&)>& build,
                                      const std::vector<ad::Parameter<Scalar>*>& params, double tol = 1e-4,
                                      double rel_step = 1e-5) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape<Scalar> tape;
    auto y = build(tape);
    if (!std::isfinite(static_cast<double>(y.scalar()))) throw NumericError("grad_check: non-finite evaluation");
    tape.backward(y);
  }
  auto eval = [&] {
    ad::Tape<Scalar> tape;
    return build(tape).scalar();
  };
  GradCheckReport report;
  report.tolerance = tol;
  Eigen::Index offset = 0;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      const double numeric = detail::central_difference(eval, p->value().data()[i], rel_step);
      detail::record(report, offset + i, static_cast<double>(p->grad().data()[i]), numeric);
    }
    offset += p->size();
  }
  for (auto* p : params) p->zero_grad();
  return report;
}

}  // namespace premier
