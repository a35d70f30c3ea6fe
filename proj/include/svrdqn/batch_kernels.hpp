#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "svrdqn/param_vector.hpp"

namespace svrdqn {

// Per-sample gradient callback: fills `out` (already shaped) with the
// gradient of sample `id` at `w`. Must be pure so samples can be evaluated
// concurrently.
using PerSampleGradFn =
    std::function<void(std::size_t id, const ParamVector& w, ParamVector& out)>;

// Neumaier-compensated scalar accumulator. Summation order is always the
// caller's iteration order, so results do not depend on thread count.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// The data-parallel kernels below are the hot loops of the optimizer stack:
// every anchor/minibatch evaluation is a map over independent samples. Each
// sample writes its own slot and reductions run in sample order afterwards,
// so outputs are bit-identical for any OpenMP thread count (including 1).
// tests/ compares them against the plain serial implementations kept in
// svrdqn::reference.

// out[k] = gradient of ids[k] at w. `out` is resized and shaped from `proto`.
void per_sample_gradients(const PerSampleGradFn& grad_fn, const ParamVector& w,
                          std::span<const std::size_t> ids, const ParamVector& proto,
                          std::vector<ParamVector>& out);

// In-order compensated mean of a non-empty gradient list.
ParamVector mean_in_order(std::span<const ParamVector> grads);

// mean_{k} grad(ids[k], w): parallel map, ordered compensated reduce.
ParamVector mean_gradient(const PerSampleGradFn& grad_fn, const ParamVector& w,
                          std::span<const std::size_t> ids, const ParamVector& proto);

}  // namespace svrdqn
