#include "svrdqn/finite_sum.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "svrdqn/batch_kernels.hpp"

namespace svrdqn {

double FiniteSumProblem::loss(const ParamVector& w) const {
  CompensatedSum acc;
  for (std::size_t i = 0; i < n; ++i) acc.add(sample_loss(i, w));
  return acc.value() / static_cast<double>(n);
}

ParamVector FiniteSumProblem::gradient(const ParamVector& w) const {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return mean_gradient(sample_grad, w, ids, proto);
}

FiniteSumProblem quadratic_finite_sum(std::vector<std::vector<double>> centers) {
  if (centers.empty()) throw std::invalid_argument("quadratic_finite_sum: no samples");
  const std::size_t dim = centers.front().size();
  for (const auto& c : centers)
    if (c.size() != dim) throw std::invalid_argument("quadratic_finite_sum: ragged centers");

  auto data = std::make_shared<std::vector<std::vector<double>>>(std::move(centers));
  const std::size_t n = data->size();

  FiniteSumProblem p;
  p.n = n;
  p.dim = dim;
  p.proto = ParamVector(std::vector<BlockShape>{{dim, 1}});

  p.sample_loss = [data](std::size_t i, const ParamVector& w) {
    const auto& a = data->at(i);
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double d = w[j] - a[j];
      s += d * d;
    }
    return 0.5 * s;
  };
  p.sample_grad = [data](std::size_t i, const ParamVector& w, ParamVector& out) {
    const auto& a = data->at(i);
    for (std::size_t j = 0; j < a.size(); ++j) out[j] = w[j] - a[j];
  };

  ParamVector opt = p.proto.zero_like();
  for (const auto& a : *data)
    for (std::size_t j = 0; j < dim; ++j) opt[j] += a[j];
  opt.scale(1.0 / static_cast<double>(n));
  p.optimum = opt;
  {
    CompensatedSum acc;
    for (std::size_t i = 0; i < n; ++i) acc.add(p.sample_loss(i, opt));
    p.optimum_value = acc.value() / static_cast<double>(n);
  }
  p.grad_lipschitz = 1.0;  // identity Hessian

  p.restricted = [data](const std::vector<std::size_t>& ids) {
    std::vector<std::vector<double>> subset;
    subset.reserve(ids.size());
    for (std::size_t id : ids) subset.push_back((*data)[id]);
    return quadratic_finite_sum(std::move(subset));
  };
  return p;
}

namespace {

// Full-batch gradient descent to the reference optimum; plain 1/L steps,
// linear rate for lambda > 0.
ParamVector descend_to_optimum(const FiniteSumProblem& p, double step, double tol,
                               std::size_t max_iters) {
  ParamVector w = p.zero_like();
  for (std::size_t it = 0; it < max_iters; ++it) {
    ParamVector g = p.gradient(w);
    double inf_norm = 0.0;
    for (double x : g.values()) inf_norm = std::max(inf_norm, std::abs(x));
    if (inf_norm < tol) break;
    w.add_scaled(g, -step);
  }
  return w;
}

}  // namespace

FiniteSumProblem logistic_finite_sum(std::vector<std::vector<double>> features,
                                     std::vector<int> labels, double lambda) {
  if (features.empty()) throw std::invalid_argument("logistic_finite_sum: no samples");
  if (features.size() != labels.size())
    throw std::invalid_argument("logistic_finite_sum: features/labels length mismatch");
  if (lambda < 0.0) throw std::invalid_argument("logistic_finite_sum: lambda must be >= 0");
  const std::size_t dim = features.front().size();
  for (const auto& x : features)
    if (x.size() != dim) throw std::invalid_argument("logistic_finite_sum: ragged features");
  for (int y : labels)
    if (y != -1 && y != 1) throw std::invalid_argument("logistic_finite_sum: labels must be +-1");

  auto xs = std::make_shared<std::vector<std::vector<double>>>(std::move(features));
  auto ys = std::make_shared<std::vector<int>>(std::move(labels));
  const std::size_t n = xs->size();

  FiniteSumProblem p;
  p.n = n;
  p.dim = dim;
  p.proto = ParamVector(std::vector<BlockShape>{{dim, 1}});

  p.sample_loss = [xs, ys, lambda](std::size_t i, const ParamVector& w) {
    const auto& x = xs->at(i);
    const double y = static_cast<double>((*ys)[i]);
    double z = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) z += x[j] * w[j];
    const double margin = -y * z;
    // log(1 + exp(margin)) without overflow
    const double ll = margin > 0.0 ? margin + std::log1p(std::exp(-margin))
                                   : std::log1p(std::exp(margin));
    return ll + 0.5 * lambda * w.squared_norm();
  };
  p.sample_grad = [xs, ys, lambda](std::size_t i, const ParamVector& w, ParamVector& out) {
    const auto& x = xs->at(i);
    const double y = static_cast<double>((*ys)[i]);
    double z = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) z += x[j] * w[j];
    const double sig = 1.0 / (1.0 + std::exp(y * z));  // sigmoid(-y z)
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = -y * sig * x[j] + lambda * w[j];
  };

  double max_sq = 0.0;
  for (const auto& x : *xs) {
    double s = 0.0;
    for (double v : x) s += v * v;
    max_sq = std::max(max_sq, s);
  }
  p.grad_lipschitz = lambda + max_sq / 4.0;

  if (lambda > 0.0) {
    ParamVector opt = descend_to_optimum(p, 1.0 / *p.grad_lipschitz, 1e-13, 500000);
    p.optimum_value = p.loss(opt);
    p.optimum = std::move(opt);
  }

  p.restricted = [xs, ys, lambda](const std::vector<std::size_t>& ids) {
    std::vector<std::vector<double>> fx;
    std::vector<int> fy;
    fx.reserve(ids.size());
    fy.reserve(ids.size());
    for (std::size_t id : ids) {
      fx.push_back((*xs)[id]);
      fy.push_back((*ys)[id]);
    }
    return logistic_finite_sum(std::move(fx), std::move(fy), lambda);
  };
  return p;
}

}  // namespace svrdqn
