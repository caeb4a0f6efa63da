#pragma once

#include <Eigen/Dense>

namespace convemo {

// Scalar used by the production training path. Gradient-check tests
// instantiate the templated model in double instead.
using real_t = float;

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using MatR = MatX<real_t>;

}  // namespace convemo
