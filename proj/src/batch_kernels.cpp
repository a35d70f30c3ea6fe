#include "svrdqn/batch_kernels.hpp"

#include <exception>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace svrdqn {

namespace {

// Nested teams only add fork/join cost; the outer level owns the cores.
bool inside_parallel() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

}  // namespace

void per_sample_gradients(const PerSampleGradFn& grad_fn, const ParamVector& w,
                          std::span<const std::size_t> ids, const ParamVector& proto,
                          std::vector<ParamVector>& out) {
  const std::size_t n = ids.size();
  out.assign(n, ParamVector());
  const auto count = static_cast<std::ptrdiff_t>(n);
  const bool parallel = n > 24 && !inside_parallel();
  std::exception_ptr failure;  // exceptions must not unwind across the omp region
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    try {
      auto& slot = out[static_cast<std::size_t>(k)];
      slot = proto.zero_like();
      grad_fn(ids[static_cast<std::size_t>(k)], w, slot);
    } catch (...) {
#pragma omp critical(svrdqn_kernel_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

ParamVector mean_in_order(std::span<const ParamVector> grads) {
  if (grads.empty()) throw std::invalid_argument("mean_in_order: empty gradient list");
  const std::size_t dim = grads[0].size();
  std::vector<double> sum(dim, 0.0);
  std::vector<double> comp(dim, 0.0);
  for (const auto& g : grads) {
    grads[0].check_shape(g);
    auto v = g.values();
    for (std::size_t j = 0; j < dim; ++j) {
      const double x = v[j];
      const double t = sum[j] + x;
      if (std::abs(sum[j]) >= std::abs(x))
        comp[j] += (sum[j] - t) + x;
      else
        comp[j] += (x - t) + sum[j];
      sum[j] = t;
    }
  }
  ParamVector mean = grads[0].zero_like();
  const double inv = 1.0 / static_cast<double>(grads.size());
  for (std::size_t j = 0; j < dim; ++j) mean[j] = (sum[j] + comp[j]) * inv;
  return mean;
}

ParamVector mean_gradient(const PerSampleGradFn& grad_fn, const ParamVector& w,
                          std::span<const std::size_t> ids, const ParamVector& proto) {
  std::vector<ParamVector> slots;
  per_sample_gradients(grad_fn, w, ids, proto, slots);
  return mean_in_order(slots);
}

}  // namespace svrdqn
