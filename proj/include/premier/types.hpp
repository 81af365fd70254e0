// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include "premier/autodiff.hpp"

namespace premier {

using Real = double;
using Tape = ad::Tape<Real>;
using Var = ad::Var<Real>;
using Parameter = ad::Parameter<Real>;
using MatrixX = ad::Matrix<Real>;
using VectorX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

}  // namespace premier
