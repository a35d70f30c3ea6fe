#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "svrdqn/param_vector.hpp"

namespace svrdqn {

// A finite-sum objective f(w) = (1/n) sum_i f_i(w) with per-sample losses and
// gradients, plus analytic metadata (optimum, Lipschitz constant of the
// per-sample gradients) when the family provides it. The test problems for
// optimizer and variance checks are all instances of this.
struct FiniteSumProblem {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::function<double(std::size_t, const ParamVector&)> sample_loss;
  std::function<void(std::size_t, const ParamVector&, ParamVector&)> sample_grad;

  std::optional<ParamVector> optimum;       // w*
  std::optional<double> optimum_value;      // f(w*)
  std::optional<double> grad_lipschitz;     // L such that each grad f_i is L-Lipschitz

  // Builds the sub-problem restricted to a set of sample ids, with its own
  // recomputed optimum. Used when variance bounds are evaluated conditional
  // on a fixed anchor batch.
  std::function<FiniteSumProblem(const std::vector<std::size_t>&)> restricted;

  double loss(const ParamVector& w) const;
  ParamVector gradient(const ParamVector& w) const;  // full-batch mean gradient
  ParamVector zero_like() const { return proto.zero_like(); }

  ParamVector proto;  // zero vector of the right shape
};

// f_i(w) = 0.5 * ||w - a_i||^2; w* = mean(a_i), L = 1.
FiniteSumProblem quadratic_finite_sum(std::vector<std::vector<double>> centers);

// l2-regularized logistic loss on (x_i, y_i), y_i in {-1, +1}:
//   f_i(w) = log(1 + exp(-y_i <x_i, w>)) + (lambda/2) ||w||^2
// L = lambda + max_i ||x_i||^2 / 4. The reference optimum is found by
// long-run full-batch gradient descent when lambda > 0.
FiniteSumProblem logistic_finite_sum(std::vector<std::vector<double>> features,
                                     std::vector<int> labels, double lambda);

}  // namespace svrdqn
