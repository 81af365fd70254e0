// SPDX-License-Identifier: Apache-2.0
//
// Single-layer, forward-in-time GRU over a sequence of column vectors.
//
//   z  = sigmoid(W_z x + b_z + U_z h + c_z)
//   r  = sigmoid(W_r x + b_r + U_r h + c_r)
//   n  = tanh(W_n x + b_n + r .* (U_n h + c_n))
//   h' = (1 - z) .* n + z .* h
//
// Gate blocks are stacked [z; r; n] in the 3H-row weights.
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "premier/autodiff.hpp"

namespace premier {

template <typename Scalar>
class GruCell {
 public:
  using ParameterType = ad::Parameter<Scalar>;
  using MatrixType = ad::Matrix<Scalar>;

  GruCell() = default;
  GruCell(const std::string& name, Eigen::Index input_size, Eigen::Index hidden_size)
      : input_size_(input_size),
        hidden_size_(hidden_size),
        w_ih_(name + ".w_ih", MatrixType::Zero(3 * hidden_size, input_size)),
        w_hh_(name + ".w_hh", MatrixType::Zero(3 * hidden_size, hidden_size)),
        b_ih_(name + ".b_ih", MatrixType::Zero(3 * hidden_size, 1)),
        b_hh_(name + ".b_hh", MatrixType::Zero(3 * hidden_size, 1)) {}

  Eigen::Index input_size() const { return input_size_; }
  Eigen::Index hidden_size() const { return hidden_size_; }

  ParameterType& w_ih() { return w_ih_; }
  ParameterType& w_hh() { return w_hh_; }
  ParameterType& b_ih() { return b_ih_; }
  ParameterType& b_hh() { return b_hh_; }
  const ParameterType& w_ih() const { return w_ih_; }
  const ParameterType& w_hh() const { return w_hh_; }
  const ParameterType& b_ih() const { return b_ih_; }
  const ParameterType& b_hh() const { return b_hh_; }

  std::vector<ParameterType*> parameters() { return {&w_ih_, &w_hh_, &b_ih_, &b_hh_}; }

  /// Uniform in [-bound, bound] for every weight and bias.
  template <typename Rng>
  void initialize_uniform(Scalar bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    for (auto* p : parameters())
      p->value() = p->value().unaryExpr([&](Scalar) { return static_cast<Scalar>(dist(rng)); });
  }

 private:
  Eigen::Index input_size_ = 0;
  Eigen::Index hidden_size_ = 0;
  ParameterType w_ih_, w_hh_, b_ih_, b_hh_;
};

/// Hidden state after each input; output[i] depends on inputs[0..i] only.
template <typename Scalar>
std::vector<ad::Var<Scalar>> gru_sequence(ad::Tape<Scalar>& tape, const GruCell<Scalar>& cell,
                                          std::span<const ad::Var<Scalar>> inputs, ad::Var<Scalar> h0) {
  const Eigen::Index H = cell.hidden_size();
  if (h0.rows() != H || h0.cols() != 1)
    throw ShapeError("gru_sequence: h0 is " + ad::shape_string(h0.rows(), h0.cols()) + ", expected " +
                     ad::shape_string(H, 1));
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (inputs[i].rows() != cell.input_size() || inputs[i].cols() != 1)
      throw ShapeError("gru_sequence: input " + std::to_string(i) + " is " +
                       ad::shape_string(inputs[i].rows(), inputs[i].cols()) + ", expected " +
                       ad::shape_string(cell.input_size(), 1));
  std::vector<ad::Var<Scalar>> hidden;
  if (inputs.empty()) return hidden;
  hidden.reserve(inputs.size());

  auto w_ih = tape.parameter(cell.w_ih());
  auto w_hh = tape.parameter(cell.w_hh());
  auto b_ih = tape.parameter(cell.b_ih());
  auto b_hh = tape.parameter(cell.b_hh());

  // Input projections for the whole sequence in one product.
  auto projected = ad::add_bias(w_ih * ad::hcat(inputs), b_ih);

  ad::Var<Scalar> h = h0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto gi = ad::column(projected, static_cast<Eigen::Index>(i));
    auto gh = w_hh * h + b_hh;
    auto z = ad::sigmoid(ad::middle_rows(gi, 0, H) + ad::middle_rows(gh, 0, H));
    auto r = ad::sigmoid(ad::middle_rows(gi, H, H) + ad::middle_rows(gh, H, H));
    auto n = ad::tanh(ad::middle_rows(gi, 2 * H, H) + ad::cwise_product(r, ad::middle_rows(gh, 2 * H, H)));
    h = n + ad::cwise_product(z, h - n);
    hidden.push_back(h);
  }
  return hidden;
}

template <typename Scalar>
std::vector<ad::Var<Scalar>> gru_sequence(ad::Tape<Scalar>& tape, const GruCell<Scalar>& cell,
                                          const std::vector<ad::Var<Scalar>>& inputs, ad::Var<Scalar> h0) {
  return gru_sequence(tape, cell, std::span<const ad::Var<Scalar>>(inputs), h0);
}

}  // namespace premier
