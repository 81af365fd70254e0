// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every intermediate matrix together with a closure that
// propagates its adjoint to its inputs. Vars are lightweight handles into the
// tape; the free functions below build expressions out of them:
//
//   ad::Tape<double> tape;
//   auto x = tape.parameter(weights);
//   auto y = ad::sum(ad::tanh(x * tape.constant(input)));
//   tape.backward(y);           // weights.grad() now holds dy/dweights
//
// Column vectors are n x 1 matrices and scalars are 1 x 1.
#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "premier/error.hpp"

namespace premier::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

/// Trainable matrix with a gradient accumulator of the same shape.
template <typename Scalar>
class Parameter {
 public:
  using MatrixType = Matrix<Scalar>;

  Parameter() = default;
  Parameter(std::string name, MatrixType value)
      : name_(std::move(name)), value_(std::move(value)), grad_(MatrixType::Zero(value_.rows(), value_.cols())) {}

  const std::string& name() const { return name_; }
  MatrixType& value() { return value_; }
  const MatrixType& value() const { return value_; }
  // The accumulator is logically separate from the value: a const parameter
  // can still receive gradients from a tape that tracks it.
  MatrixType& grad() const { return grad_; }
  Eigen::Index rows() const { return value_.rows(); }
  Eigen::Index cols() const { return value_.cols(); }
  Eigen::Index size() const { return value_.size(); }

  void zero_grad() const { grad_.setZero(value_.rows(), value_.cols()); }
  /// Replaces the value; the new shape must match.
  void assign(const MatrixType& value) {
    if (value.rows() != value_.rows() || value.cols() != value_.cols())
      throw ShapeError("parameter " + name_ + ": cannot assign " + shape_string(value.rows(), value.cols()) +
                       " to " + shape_string(value_.rows(), value_.cols()));
    value_ = value;
  }

 private:
  std::string name_;
  MatrixType value_;
  mutable MatrixType grad_;
};

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  using MatrixType = Matrix<Scalar>;

  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<Scalar>* tape() const { return tape_; }
  std::size_t id() const { return id_; }

  const MatrixType& value() const { return tape_->value(id_); }
  /// Adjoint after Tape::backward; zero if the node was not reached.
  MatrixType grad() const { return tape_->grad_or_zero(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using MatrixType = Matrix<Scalar>;
  using VarType = Var<Scalar>;
  using Backward = std::function<void(Tape&, std::size_t)>;

  /// With `track_gradients` false, parameters bind as constants and no
  /// backward closures are stored.
  explicit Tape(bool track_gradients = true) : track_(track_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  VarType constant(MatrixType value) { return push(std::move(value), false, {}); }

  /// Leaf that requires a gradient but is not bound to a Parameter.
  VarType variable(MatrixType value) { return push(std::move(value), true, {}); }

  /// Leaf bound to `p`; backward() adds into p.grad().
  VarType parameter(const Parameter<Scalar>& p) {
    if (!track_) return constant(p.value());
    const Parameter<Scalar>* target = &p;
    return push(p.value(), true, [target](Tape& t, std::size_t self) { target->grad() += t.nodes_[self].grad; });
  }

  bool tracks_gradients() const { return track_; }

  /// Records an op result. The closure runs only if some input needs a gradient.
  VarType record(MatrixType value, std::initializer_list<VarType> inputs, Backward backward) {
    return record(std::move(value), std::span<const VarType>(inputs.begin(), inputs.size()), std::move(backward));
  }

  VarType record(MatrixType value, std::span<const VarType> inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const MatrixType& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Upstream adjoint of node `id`, allocated on first use.
  MatrixType& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad.setZero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  MatrixType grad_or_zero(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.has_grad) return n.grad;
    return MatrixType::Zero(n.value.rows(), n.value.cols());
  }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    if (!nodes_[id].requires_grad) return;
    grad(id) += g;
  }

  /// Reverse sweep from a 1x1 root.
  void backward(const VarType& root) {
    check_owner(root);
    if (value(root.id()).size() != 1) throw ShapeError("backward root must be 1x1");
    grad(root.id()).setOnes();
    for (std::size_t id = root.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.has_grad && n.backward) n.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    MatrixType value;
    MatrixType grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  VarType push(MatrixType value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), MatrixType(), requires_grad, false, std::move(backward)});
    return VarType(this, nodes_.size() - 1);
  }

  void check_owner(const VarType& v) const {
    if (v.tape() != this) throw Error("variable belongs to a different tape");
  }

  std::deque<Node> nodes_;
  bool track_ = true;
};

namespace detail {

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": operand shapes " + shape_string(a.rows(), a.cols()) + " and " +
                     shape_string(b.rows(), b.cols()) + " differ");
}

template <typename Scalar>
void require_finite(const Matrix<Scalar>& m, const char* op) {
  if (!m.allFinite()) throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "subtract");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  const auto ia = a.id();
  return a.tape()->record(-a.value(), {a},
                          [ia](Tape<Scalar>& t, std::size_t self) { t.accumulate(ia, -t.grad(self)); });
}

/// Matrix product.
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_string(a.rows(), a.cols()) + " times " + shape_string(b.rows(), b.cols()));
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia).noalias() += t.grad(self) * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * t.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) {
  const auto ia = a.id();
  return a.tape()->record(s * a.value(), {a},
                          [ia, s](Tape<Scalar>& t, std::size_t self) { t.accumulate(ia, s * t.grad(self)); });
}

/// Multiplies every entry of `a` by the 1x1 variable `s`.
template <typename Scalar>
Var<Scalar> scalar_mul(const Var<Scalar>& s, const Var<Scalar>& a) {
  if (s.value().size() != 1) throw ShapeError("scalar_mul: first operand must be 1x1");
  const auto is = s.id(), ia = a.id();
  return a.tape()->record(s.scalar() * a.value(), {s, a}, [is, ia](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(is)) t.grad(is)(0, 0) += (g.array() * t.value(ia).array()).sum();
    t.accumulate(ia, t.value(is)(0, 0) * g);
  });
}

template <typename Scalar>
Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "cwise_product");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(ib)));
    t.accumulate(ib, t.grad(self).cwiseProduct(t.value(ia)));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> y = (Scalar(1) + (-a.value().array()).exp()).inverse().matrix();
  return a.tape()->record(std::move(y), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self).array();
    t.accumulate(ia, (t.grad(self).array() * y * (Scalar(1) - y)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  const auto ia = a.id();
  return a.tape()->record(a.value().array().tanh().matrix(), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self).array();
    t.accumulate(ia, (t.grad(self).array() * (Scalar(1) - y.square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& a, Scalar slope = Scalar(0.2)) {
  const auto ia = a.id();
  Matrix<Scalar> y = a.value().unaryExpr([slope](Scalar x) { return x > 0 ? x : slope * x; });
  return a.tape()->record(std::move(y), {a}, [ia, slope](Tape<Scalar>& t, std::size_t self) {
    const auto& x = t.value(ia);
    Matrix<Scalar> d = x.unaryExpr([slope](Scalar v) { return v > 0 ? Scalar(1) : slope; });
    t.accumulate(ia, t.grad(self).cwiseProduct(d));
  });
}

/// Softmax over all entries of a row or column vector, with max subtraction.
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& a) {
  if (a.rows() != 1 && a.cols() != 1) throw ShapeError("softmax: operand must be a vector");
  if (a.value().size() == 0) throw ShapeError("softmax: empty operand");
  detail::require_finite(a.value(), "softmax");
  const auto ia = a.id();
  Matrix<Scalar> y = (a.value().array() - a.value().maxCoeff()).exp().matrix();
  y /= y.sum();
  return a.tape()->record(std::move(y), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    const Scalar inner = (g.array() * y.array()).sum();
    t.accumulate(ia, (y.array() * (g.array() - inner)).matrix());
  });
}

/// Row-wise softmax restricted to entries where mask != 0; masked entries are 0.
/// Every row needs at least one unmasked entry.
template <typename Scalar>
Var<Scalar> masked_row_softmax(const Var<Scalar>& a, const Matrix<Scalar>& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) throw ShapeError("masked_row_softmax: mask shape");
  detail::require_finite(a.value(), "masked_row_softmax");
  const auto ia = a.id();
  const auto& x = a.value();
  Matrix<Scalar> y = Matrix<Scalar>::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0) best = std::max(best, x(r, c));
    if (!std::isfinite(best))
      throw DataError("masked_row_softmax: row " + std::to_string(r) + " has an empty neighbourhood");
    Scalar total = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0) total += (y(r, c) = std::exp(x(r, c) - best));
    y.row(r) /= total;
  }
  return a.tape()->record(std::move(y), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inner = (g.array() * y.array()).rowwise().sum();
    t.accumulate(ia, (y.array() * (g.colwise() - inner).array()).matrix());
  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  const auto ia = a.id();
  return a.tape()->record(a.value().transpose(), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).transpose());
  });
}

/// Concatenates along columns; all parts share a row count.
template <typename Scalar>
Var<Scalar> hcat(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("hcat: no operands");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("hcat: row counts differ");
    cols += p.cols();
  }
  Matrix<Scalar> y(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    y.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.cols();
  }
  return parts.front().tape()->record(std::move(y), parts, [layout](Tape<Scalar>& t, std::size_t self) {
    for (const auto& [id, off] : layout)
      if (t.requires_grad(id)) t.grad(id) += t.grad(self).middleCols(off, t.value(id).cols());
  });
}

template <typename Scalar>
Var<Scalar> hcat(const std::vector<Var<Scalar>>& parts) {
  return hcat(std::span<const Var<Scalar>>(parts));
}

/// Concatenates along rows; all parts share a column count.
template <typename Scalar>
Var<Scalar> vcat(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("vcat: no operands");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("vcat: column counts differ");
    rows += p.rows();
  }
  Matrix<Scalar> y(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    y.middleRows(offset, p.rows()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.rows();
  }
  return parts.front().tape()->record(std::move(y), parts, [layout](Tape<Scalar>& t, std::size_t self) {
    for (const auto& [id, off] : layout)
      if (t.requires_grad(id)) t.grad(id) += t.grad(self).middleRows(off, t.value(id).rows());
  });
}

template <typename Scalar>
Var<Scalar> vcat(const std::vector<Var<Scalar>>& parts) {
  return vcat(std::span<const Var<Scalar>>(parts));
}

/// Columns [start, start + count).
template <typename Scalar>
Var<Scalar> middle_cols(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("middle_cols: range out of bounds");
  const auto ia = a.id();
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [ia, start, count](Tape<Scalar>& t, std::size_t self) {
                            if (t.requires_grad(ia)) t.grad(ia).middleCols(start, count) += t.grad(self);
                          });
}

/// Rows [start, start + count).
template <typename Scalar>
Var<Scalar> middle_rows(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("middle_rows: range out of bounds");
  const auto ia = a.id();
  return a.tape()->record(a.value().middleRows(start, count), {a},
                          [ia, start, count](Tape<Scalar>& t, std::size_t self) {
                            if (t.requires_grad(ia)) t.grad(ia).middleRows(start, count) += t.grad(self);
                          });
}

/// Adds the column vector `b` to every column of `a`.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (b.cols() != 1 || b.rows() != a.rows())
    throw ShapeError("add_bias: bias " + shape_string(b.rows(), b.cols()) + " for " +
                     shape_string(a.rows(), a.cols()));
  const auto ia = a.id(), ib = b.id();
  Matrix<Scalar> y = a.value().colwise() + b.value().col(0);
  return a.tape()->record(std::move(y), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self).rowwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> column(const Var<Scalar>& a, Eigen::Index j) {
  return middle_cols(a, j, 1);
}

/// Sum of all entries, as 1x1.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape()->record(std::move(y), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia).array() += t.grad(self)(0, 0);
  });
}

/// y(j,k) = u(j) + v(k) for a column u and a row v.
template <typename Scalar>
Var<Scalar> outer_sum(const Var<Scalar>& u, const Var<Scalar>& v) {
  if (u.cols() != 1 || v.rows() != 1) throw ShapeError("outer_sum: expects a column and a row");
  const auto iu = u.id(), iv = v.id();
  Matrix<Scalar> y = u.value().replicate(1, v.cols()).rowwise() + v.value().row(0);
  return u.tape()->record(std::move(y), {u, v}, [iu, iv](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    t.accumulate(iu, g.rowwise().sum());
    t.accumulate(iv, g.colwise().sum());
  });
}

/// Sum of the selected columns of `table` (multi-hot embedding lookup).
template <typename Scalar>
Var<Scalar> column_sum(const Var<Scalar>& table, const std::vector<std::size_t>& columns) {
  Matrix<Scalar> y = Matrix<Scalar>::Zero(table.rows(), 1);
  for (auto c : columns) {
    if (static_cast<Eigen::Index>(c) >= table.cols())
      throw EncodingError("column_sum: column " + std::to_string(c) + " out of range", c);
    y += table.value().col(static_cast<Eigen::Index>(c));
  }
  const auto it = table.id();
  return table.tape()->record(std::move(y), {table}, [it, columns](Tape<Scalar>& t, std::size_t self) {
    if (!t.requires_grad(it)) return;
    auto& g = t.grad(it);
    for (auto c : columns) g.col(static_cast<Eigen::Index>(c)) += t.grad(self);
  });
}

/// Inverted dropout: entries are zeroed with probability `rate` and survivors
/// scaled by 1/(1 - rate). Identity when not training.
template <typename Scalar, typename Rng>
Var<Scalar> dropout(const Var<Scalar>& a, Scalar rate, bool training, Rng& rng) {
  if (!(rate >= 0) || rate >= 1) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0) return a;
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const Scalar scale = Scalar(1) / (Scalar(1) - rate);
  Matrix<Scalar> mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : Scalar(0);
  const auto ia = a.id();
  Matrix<Scalar> y = a.value().cwiseProduct(mask);
  return a.tape()->record(std::move(y), {a}, [ia, mask = std::move(mask)](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(mask));
  });
}

}  // namespace premier::ad
