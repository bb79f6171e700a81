#pragma once

#include <Eigen/Dense>

namespace masgrad {

using Scalar = double;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

template <typename S>
using VecX = Eigen::VectorX<S>;
template <typename S>
using MatX = Eigen::MatrixX<S>;

}  // namespace masgrad
