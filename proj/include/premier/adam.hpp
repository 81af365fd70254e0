// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "premier/autodiff.hpp"
#include "premier/error.hpp"

namespace premier {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment estimates persist across step() calls.
template <typename Scalar>
class Adam {
 public:
  using ParameterType = ad::Parameter<Scalar>;
  using MatrixType = ad::Matrix<Scalar>;

  Adam(std::vector<ParameterType*> params, AdamOptions options = {})
      : params_(std::move(params)), options_(options) {
    if (!(options_.learning_rate > 0)) throw ConfigError("Adam learning rate must be positive");
    if (options_.beta1 < 0 || options_.beta1 >= 1 || options_.beta2 < 0 || options_.beta2 >= 1)
      throw ConfigError("Adam betas must lie in [0, 1)");
    for (auto* p : params_) {
      first_.push_back(MatrixType::Zero(p->rows(), p->cols()));
      second_.push_back(MatrixType::Zero(p->rows(), p->cols()));
    }
  }

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    const auto b1 = static_cast<Scalar>(options_.beta1), b2 = static_cast<Scalar>(options_.beta2);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& g = params_[i]->grad();
      first_[i] = b1 * first_[i] + (Scalar(1) - b1) * g;
      second_[i] = b2 * second_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
      params_[i]->value().array() -=
          static_cast<Scalar>(options_.learning_rate) * (first_[i].array() / static_cast<Scalar>(c1)) /
          ((second_[i].array() / static_cast<Scalar>(c2)).sqrt() + static_cast<Scalar>(options_.epsilon));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  std::size_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }

 private:
  std::vector<ParameterType*> params_;
  AdamOptions options_;
  std::vector<MatrixType> first_, second_;
  std::size_t steps_ = 0;
};

}  // namespace premier
