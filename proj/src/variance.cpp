#include "svrdqn/variance.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

#include "svrdqn/batch_kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace svrdqn {

namespace {

bool inside_parallel() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

std::vector<std::size_t> all_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

void require_reference(const FiniteSumProblem& p, const char* who) {
  if (!p.optimum || !p.optimum_value || !p.grad_lipschitz)
    throw std::invalid_argument(std::string(who) + ": problem lacks known optimum or Lipschitz constant");
}

}  // namespace

VarianceReport empirical_gradient_variance(const GradientEstimator& estimator,
                                           const ParamVector& proto, std::size_t trials,
                                           std::uint64_t seed, std::string tag) {
  if (trials < 2) throw std::invalid_argument("empirical_gradient_variance: trials must be >= 2");

  std::vector<ParamVector> draws(trials, proto.zero_like());
  const auto count = static_cast<std::ptrdiff_t>(trials);
  const bool parallel = trials > 8 && !inside_parallel();
  std::exception_ptr failure;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t t = 0; t < count; ++t) {
    try {
      Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(t)));
      estimator(rng, draws[static_cast<std::size_t>(t)]);
    } catch (...) {
#pragma omp critical(svrdqn_variance_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  const std::size_t dim = proto.size();
  std::vector<double> mean(dim, 0.0), comp(dim, 0.0);
  for (const auto& d : draws) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double x = d[j];
      const double t = mean[j] + x;
      if (std::abs(mean[j]) >= std::abs(x))
        comp[j] += (mean[j] - t) + x;
      else
        comp[j] += (x - t) + mean[j];
      mean[j] = t;
    }
  }
  for (std::size_t j = 0; j < dim; ++j) mean[j] = (mean[j] + comp[j]) / static_cast<double>(trials);

  // u_t = squared distance of draw t from the mean; the trace variance is
  // sum(u) / (T - 1) and its standard error follows from the spread of u.
  std::vector<double> u(trials, 0.0);
  CompensatedSum u_sum;
  for (std::size_t t = 0; t < trials; ++t) {
    CompensatedSum s;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = draws[t][j] - mean[j];
      s.add(d * d);
    }
    u[t] = s.value();
    u_sum.add(u[t]);
  }
  const double tden = static_cast<double>(trials);
  const double u_mean = u_sum.value() / tden;
  CompensatedSum u_var_acc;
  for (std::size_t t = 0; t < trials; ++t) {
    const double d = u[t] - u_mean;
    u_var_acc.add(d * d);
  }
  const double u_sd = std::sqrt(u_var_acc.value() / (tden - 1.0));

  VarianceReport rep;
  rep.estimator = std::move(tag);
  rep.trials = trials;
  rep.empirical_var = u_sum.value() / (tden - 1.0);
  rep.std_error = u_sd * std::sqrt(tden) / (tden - 1.0);
  return rep;
}

double svr_dqn_variance_bound(const SvrgConfig& cfg, double lipschitz, double suboptimality) {
  if (!(lipschitz > 0.0)) throw std::invalid_argument("svr_dqn_variance_bound: L must be positive");
  if (suboptimality < 0.0)
    throw std::invalid_argument("svr_dqn_variance_bound: negative suboptimality");
  return 8.0 * lipschitz * static_cast<double>(cfg.inner_steps) * cfg.eta * cfg.eta *
         suboptimality / static_cast<double>(cfg.minibatch);
}

double double_dqn_variance_bound(std::size_t batch, double lipschitz, double suboptimality) {
  if (batch == 0) throw std::invalid_argument("double_dqn_variance_bound: batch must be positive");
  if (!(lipschitz > 0.0))
    throw std::invalid_argument("double_dqn_variance_bound: L must be positive");
  if (suboptimality < 0.0)
    throw std::invalid_argument("double_dqn_variance_bound: negative suboptimality");
  return 2.0 * lipschitz * suboptimality / static_cast<double>(batch);
}

LipschitzBoundCheck lipschitz_suboptimality_bound_check(const FiniteSumProblem& problem,
                                                        const ParamVector& w) {
  require_reference(problem, "lipschitz_suboptimality_bound_check");
  const ParamVector& opt = *problem.optimum;

  CompensatedSum lhs_acc;
  ParamVector gw = problem.proto.zero_like();
  ParamVector gopt = problem.proto.zero_like();
  for (std::size_t i = 0; i < problem.n; ++i) {
    problem.sample_grad(i, w, gw);
    problem.sample_grad(i, opt, gopt);
    double sq = 0.0;
    for (std::size_t j = 0; j < gw.size(); ++j) {
      const double d = gw[j] - gopt[j];
      sq += d * d;
    }
    lhs_acc.add(sq);
  }

  LipschitzBoundCheck out;
  out.lhs = lhs_acc.value() / static_cast<double>(problem.n);
  out.rhs = 2.0 * *problem.grad_lipschitz * (problem.loss(w) - *problem.optimum_value);
  out.margin = out.rhs - out.lhs;
  out.holds = out.lhs <= out.rhs + 1e-9;
  return out;
}

GradientEstimator single_sample_estimator(const FiniteSumProblem& problem, ParamVector at,
                                          bool centered) {
  if (centered) require_reference(problem, "single_sample_estimator");
  return [&problem, at, centered](Rng& rng, ParamVector& out) {
    const std::size_t i = static_cast<std::size_t>(rng.next_below(problem.n));
    problem.sample_grad(i, at, out);
    if (centered) {
      ParamVector g_opt = out.zero_like();
      problem.sample_grad(i, *problem.optimum, g_opt);
      out.add_scaled(g_opt, -1.0);
    }
  };
}

GradientEstimator minibatch_mean_estimator(const FiniteSumProblem& problem, ParamVector at,
                                           std::size_t batch_size, bool centered,
                                           bool with_replacement) {
  if (batch_size == 0)
    throw std::invalid_argument("minibatch_mean_estimator: batch must be positive");
  if (!with_replacement && batch_size > problem.n)
    throw std::invalid_argument("minibatch_mean_estimator: batch exceeds sample count");
  if (centered) require_reference(problem, "minibatch_mean_estimator");

  return [&problem, at, batch_size, centered, with_replacement](Rng& rng, ParamVector& out) {
    std::vector<std::size_t> ids;
    if (with_replacement) {
      ids.resize(batch_size);
      for (auto& id : ids) id = static_cast<std::size_t>(rng.next_below(problem.n));
    } else {
      ids = rng.sample_without_replacement(problem.n, batch_size);
    }
    out = mean_gradient(problem.sample_grad, at, ids, problem.proto);
    if (centered) {
      ParamVector opt_mean = mean_gradient(problem.sample_grad, *problem.optimum, ids, problem.proto);
      out.add_scaled(opt_mean, -1.0);
    }
  };
}

GradientEstimator svr_dqn_estimator(const FiniteSumProblem& problem, const SvrgConfig& cfg,
                                    ParamVector at, AnchorMode mode,
                                    std::vector<std::size_t> fixed_ids) {
  if (mode == AnchorMode::FixedIds && fixed_ids.empty())
    throw std::invalid_argument("svr_dqn_estimator: fixed anchor ids missing");
  if (mode == AnchorMode::ResamplePerTrial && cfg.anchor_batch > problem.n)
    throw std::invalid_argument("svr_dqn_estimator: anchor batch exceeds sample count");

  return [&problem, cfg, at, mode, fixed_ids](Rng& rng, ParamVector& out) {
    std::vector<std::size_t> ids;
    switch (mode) {
      case AnchorMode::ResamplePerTrial:
        ids = rng.sample_without_replacement(problem.n, cfg.anchor_batch);
        break;
      case AnchorMode::FullBatch:
        ids = all_ids(problem.n);
        break;
      case AnchorMode::FixedIds:
        ids = fixed_ids;
        break;
    }
    const SvrgSnapshot snap = svrg_anchor(problem.sample_grad, at, ids);
    ParamVector w = at;
    std::vector<std::size_t> mb(cfg.minibatch);
    for (std::size_t step = 0; step < cfg.inner_steps; ++step) {
      for (auto& id : mb) id = ids[rng.next_below(ids.size())];
      w = svrg_inner_step(w, snap, mb, cfg.eta, problem.sample_grad);
    }
    out = at;
    out.add_scaled(w, -1.0);  // the surrogate handed to Adam
  };
}

std::vector<VarianceReport> bound_verification_sweep(const FiniteSumProblem& problem,
                                                     const SvrgConfig& cfg, std::size_t trials,
                                                     const std::vector<ParamVector>& points,
                                                     std::uint64_t seed) {
  require_reference(problem, "bound_verification_sweep");
  const double lips = *problem.grad_lipschitz;

  std::vector<VarianceReport> reports;
  reports.reserve(points.size() * 2);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const ParamVector& w = points[k];
    const std::uint64_t point_seed = Rng::mix(seed, k);

    // variance-reduced estimator, conditional on one anchor batch
    Rng anchor_rng(Rng::mix(point_seed, 1));
    std::vector<std::size_t> anchor_ids =
        anchor_rng.sample_without_replacement(problem.n, cfg.anchor_batch);
    const FiniteSumProblem batch_problem = problem.restricted(anchor_ids);
    const double subopt_batch =
        std::max(0.0, batch_problem.loss(w) - *batch_problem.optimum_value);

    VarianceReport svr = empirical_gradient_variance(
        svr_dqn_estimator(problem, cfg, w, AnchorMode::FixedIds, anchor_ids), problem.proto,
        trials, Rng::mix(point_seed, 2), "svr-dqn");
    svr.iteration = k;
    svr.suboptimality = subopt_batch;
    svr.bound = svr_dqn_variance_bound(cfg, lips, subopt_batch);
    svr.margin = svr.bound - svr.empirical_var;
    svr.pass = svr.empirical_var <= svr.bound + 3.0 * svr.std_error;
    reports.push_back(std::move(svr));

    // minibatch estimator, batch redrawn per trial
    const double subopt_full = std::max(0.0, problem.loss(w) - *problem.optimum_value);
    VarianceReport dqn = empirical_gradient_variance(
        minibatch_mean_estimator(problem, w, cfg.anchor_batch, /*centered=*/true,
                                 /*with_replacement=*/false),
        problem.proto, trials, Rng::mix(point_seed, 3), "double-dqn-minibatch");
    dqn.iteration = k;
    dqn.suboptimality = subopt_full;
    dqn.bound = double_dqn_variance_bound(cfg.anchor_batch, lips, subopt_full);
    dqn.margin = dqn.bound - dqn.empirical_var;
    dqn.pass = dqn.empirical_var <= dqn.bound + 3.0 * dqn.std_error;
    reports.push_back(std::move(dqn));
  }
  return reports;
}

RawVarianceComparison raw_variance_comparison(const FiniteSumProblem& problem,
                                              const SvrgConfig& cfg, const ParamVector& at,
                                              std::size_t trials, std::uint64_t seed) {
  RawVarianceComparison out;
  out.per_draw_evals = cfg.anchor_batch + cfg.inner_steps * cfg.minibatch;

  const VarianceReport svr = empirical_gradient_variance(
      svr_dqn_estimator(problem, cfg, at, AnchorMode::ResamplePerTrial), problem.proto, trials,
      Rng::mix(seed, 11), "svr-dqn-raw");
  const VarianceReport mb = empirical_gradient_variance(
      minibatch_mean_estimator(problem, at, out.per_draw_evals, /*centered=*/false,
                               /*with_replacement=*/true),
      problem.proto, trials, Rng::mix(seed, 12), "minibatch-raw");
  out.svr_var = svr.empirical_var;
  out.minibatch_var = mb.empirical_var;
  return out;
}

TauCovarianceDiagnostic tau_covariance_diagnostic(const FiniteSumProblem& problem,
                                                  const SvrgConfig& cfg, const ParamVector& at,
                                                  std::size_t trials, std::uint64_t seed) {
  if (trials < 2) throw std::invalid_argument("tau_covariance_diagnostic: trials must be >= 2");
  const std::vector<std::size_t> ids = all_ids(problem.n);
  const SvrgSnapshot snap = svrg_anchor(problem.sample_grad, at, ids);

  const std::size_t m = cfg.inner_steps;
  // per inner step: trials x dim draws of tau_i, plus the per-trial sum
  std::vector<std::vector<ParamVector>> tau(m);
  for (auto& v : tau) v.assign(trials, problem.proto.zero_like());
  std::vector<ParamVector> total(trials, problem.proto.zero_like());

  const auto count = static_cast<std::ptrdiff_t>(trials);
  const bool parallel = trials > 8 && !inside_parallel();
  std::exception_ptr failure;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t tt = 0; tt < count; ++tt) {
    try {
      const auto t = static_cast<std::size_t>(tt);
      Rng rng(Rng::mix(seed, t));
      ParamVector w = at;
      std::vector<std::size_t> mb(cfg.minibatch);
      for (std::size_t step = 0; step < m; ++step) {
        for (auto& id : mb) id = ids[rng.next_below(ids.size())];
        ParamVector next = svrg_inner_step(w, snap, mb, cfg.eta, problem.sample_grad);
        ParamVector tau_step = w;           // tau_i = w_i - w_{i+1} = eta * direction
        tau_step.add_scaled(next, -1.0);
        total[t].add_scaled(tau_step, 1.0);
        tau[step][t] = std::move(tau_step);
        w = std::move(next);
      }
    } catch (...) {
#pragma omp critical(svrdqn_tau_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  TauCovarianceDiagnostic diag;
  CompensatedSum sum_of_var;
  for (std::size_t step = 0; step < m; ++step) {
    CompensatedSum per;
    const std::size_t dim = problem.proto.size();
    std::vector<double> mean(dim, 0.0);
    for (const auto& d : tau[step])
      for (std::size_t j = 0; j < dim; ++j) mean[j] += d[j];
    for (auto& x : mean) x /= static_cast<double>(trials);
    for (const auto& d : tau[step])
      for (std::size_t j = 0; j < dim; ++j) {
        const double dv = d[j] - mean[j];
        per.add(dv * dv);
      }
    sum_of_var.add(per.value() / static_cast<double>(trials - 1));
  }
  diag.sum_of_var = sum_of_var.value();

  {
    const std::size_t dim = problem.proto.size();
    std::vector<double> mean(dim, 0.0);
    for (const auto& d : total)
      for (std::size_t j = 0; j < dim; ++j) mean[j] += d[j];
    for (auto& x : mean) x /= static_cast<double>(trials);
    CompensatedSum acc;
    for (const auto& d : total)
      for (std::size_t j = 0; j < dim; ++j) {
        const double dv = d[j] - mean[j];
        acc.add(dv * dv);
      }
    diag.var_of_sum = acc.value() / static_cast<double>(trials - 1);
  }
  diag.cross_term = diag.var_of_sum - diag.sum_of_var;
  return diag;
}

}  // namespace svrdqn
