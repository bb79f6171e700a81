#pragma once

// Composite objective L = g + h with a smooth part given by value/gradient
// callables and a non-smooth part given by a prox oracle.  The adjustment
// matrix V defines the metric the proximal step is taken in.

#include <functional>

#include "masgrad/types.hpp"

namespace masgrad::prox {

struct ProxProblem {
  Index dim = 0;
  std::function<double(const Vec&)> smooth_value;
  std::function<Vec(const Vec&)> smooth_grad;
  std::function<double(const Vec&)> reg_value;
  // Weighted prox oracle: argmin_u sum_i (u_i - v_i)^2 / (2 s_i) + h(u).
  // For separable h this must be exact for any positive scale vector s; for
  // non-separable h only uniform s is ever requested.
  std::function<Vec(const Vec& v, const Vec& s)> reg_prox;
  bool reg_separable = true;
  Mat v_adjust;              // SPD adjustment metric V
  bool diagonal_only = false;  // use diag(V) even when V is dense

  double value(const Vec& w) const { return smooth_value(w) + reg_value(w); }
};

}  // namespace masgrad::prox
