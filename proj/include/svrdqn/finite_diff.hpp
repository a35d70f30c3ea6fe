#pragma once

#include <cmath>
#include <stdexcept>

#include "svrdqn/param_vector.hpp"

namespace svrdqn {

// Central-difference gradient oracle: (loss(w + h e_j) - loss(w - h e_j)) / 2h
// per coordinate. Independent of the analytic backward paths it is used to
// check. Default h balances truncation against round-off at 64-bit.
template <typename LossFn>
Gradient finite_difference_gradient(const LossFn& loss, const ParamVector& w, double h = 1e-5) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be positive");
  ParamVector probe = w;
  Gradient grad{w.zero_like(), GradSource::Minibatch};
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double orig = probe[j];
    probe[j] = orig + h;
    const double up = loss(probe);
    probe[j] = orig - h;
    const double down = loss(probe);
    probe[j] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("finite_difference_gradient: loss returned non-finite value");
    grad.v[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace svrdqn
