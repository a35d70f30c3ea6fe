#include <doctest.h>

#include <cmath>

#include "svrdqn/finite_sum.hpp"
#include "svrdqn/variance.hpp"

using namespace svrdqn;

namespace {

ParamVector flat(std::vector<double> xs) {
  const std::size_t n = xs.size();
  return ParamVector(std::move(xs), {BlockShape{n, 1}});
}

FiniteSumProblem random_quadratic(std::size_t n, std::size_t dim, std::uint64_t seed,
                                  double spread = 1.0) {
  Rng rng(seed);
  std::vector<std::vector<double>> centers(n, std::vector<double>(dim));
  for (auto& c : centers)
    for (auto& x : c) x = rng.uniform(-spread, spread);
  return quadratic_finite_sum(std::move(centers));
}

FiniteSumProblem random_logistic(std::size_t n, std::size_t dim, std::uint64_t seed,
                                 double lambda) {
  Rng rng(seed);
  std::vector<std::vector<double>> xs(n, std::vector<double>(dim));
  std::vector<int> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : xs[i]) x = rng.uniform(-1, 1);
    ys[i] = rng.uniform01() < 0.5 ? -1 : 1;
  }
  return logistic_finite_sum(std::move(xs), std::move(ys), lambda);
}

}  // namespace

TEST_CASE("empirical variance: deterministic estimator reports zero") {
  FiniteSumProblem p = random_quadratic(32, 3, 1);
  ParamVector at = *p.optimum;
  at[0] += 1.5;
  // full-dataset mean without replacement is the same draw every time
  const GradientEstimator est = minibatch_mean_estimator(p, at, p.n, false);
  const VarianceReport rep = empirical_gradient_variance(est, p.proto, 64, 5, "full-batch");
  CHECK(rep.empirical_var <= 1e-20);
  CHECK(rep.std_error <= 1e-20);
  CHECK(rep.trials == 64);
}

TEST_CASE("empirical variance: single-sample two-point distribution") {
  // a = {-1, +1} at w = 0: gradients are exactly -a_i, population variance 1
  FiniteSumProblem p = quadratic_finite_sum({{-1.0}, {1.0}});
  const GradientEstimator est = single_sample_estimator(p, flat({0.0}), false);
  const VarianceReport rep = empirical_gradient_variance(est, p.proto, 10000, 9, "single");
  CHECK(std::abs(rep.empirical_var - 1.0) <= 3.0 * rep.std_error);
  CHECK(std::abs(rep.empirical_var - 1.0) < 0.05);
}

TEST_CASE("empirical variance: trials guard and thread-count determinism") {
  FiniteSumProblem p = random_quadratic(16, 2, 3);
  const GradientEstimator est = single_sample_estimator(p, flat({0.5, 0.5}), false);
  CHECK_THROWS_AS(empirical_gradient_variance(est, p.proto, 1, 1, "x"), std::invalid_argument);
  const VarianceReport a = empirical_gradient_variance(est, p.proto, 500, 2, "a");
  const VarianceReport b = empirical_gradient_variance(est, p.proto, 500, 2, "b");
  CHECK(a.empirical_var == b.empirical_var);  // bit-equal on reruns
}

TEST_CASE("svr estimator variance vanishes at the optimum with a full-batch anchor") {
  FiniteSumProblem p = random_quadratic(64, 4, 7);
  const SvrgConfig cfg = SvrgConfig::validated(64, 8, 8, 0.05);
  const GradientEstimator est = svr_dqn_estimator(p, cfg, *p.optimum, AnchorMode::FullBatch);
  const VarianceReport rep = empirical_gradient_variance(est, p.proto, 500, 11, "svr-at-opt");
  CHECK(rep.empirical_var < 1e-10);
}

TEST_CASE("variance bounds: values, monotonicity, eta scaling, ratio") {
  const SvrgConfig paper = SvrgConfig::validated(512, 32, 32, 0.01);
  // 8 * 1 * 32 * 0.0001 * 1 / 32 = 8e-4
  CHECK(svr_dqn_variance_bound(paper, 1.0, 1.0) == doctest::Approx(8e-4).epsilon(1e-12));
  CHECK(svr_dqn_variance_bound(paper, 1.0, 0.0) == 0.0);
  CHECK(double_dqn_variance_bound(512, 1.0, 1.0) == doctest::Approx(2.0 / 512).epsilon(1e-12));
  CHECK(double_dqn_variance_bound(512, 1.0, 0.0) == 0.0);

  // doubling eta quadruples the bound
  SvrgConfig twice = paper;
  twice.eta *= 2.0;
  CHECK(svr_dqn_variance_bound(twice, 1.0, 0.7) ==
        doctest::Approx(4.0 * svr_dqn_variance_bound(paper, 1.0, 0.7)).epsilon(1e-12));

  // bound ratio: 4 m eta^2 B / b with the reported constants = 0.2048
  const double ratio = svr_dqn_variance_bound(paper, 1.0, 1.0) / double_dqn_variance_bound(512, 1.0, 1.0);
  CHECK(ratio == doctest::Approx(0.2048).epsilon(1e-12));

  // monotone in suboptimality and L on grids
  double prev = -1.0;
  for (double sub : {0.0, 0.1, 0.5, 1.0, 3.0}) {
    const double v = svr_dqn_variance_bound(paper, 2.0, sub);
    CHECK(v >= prev);
    prev = v;
  }
  prev = -1.0;
  for (double lips : {0.5, 1.0, 2.0, 8.0}) {
    const double v = double_dqn_variance_bound(64, lips, 0.9);
    CHECK(v >= prev);
    prev = v;
  }

  CHECK_THROWS_AS(svr_dqn_variance_bound(paper, 1.0, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(double_dqn_variance_bound(0, 1.0, 0.1), std::invalid_argument);
}

TEST_CASE("Lipschitz suboptimality bound: exact at the optimum, tight for quadratics") {
  FiniteSumProblem pair = quadratic_finite_sum({{-1.0}, {1.0}});
  const LipschitzBoundCheck at_opt = lipschitz_suboptimality_bound_check(pair, *pair.optimum);
  CHECK(at_opt.holds);
  CHECK(at_opt.lhs == doctest::Approx(0.0));
  CHECK(at_opt.rhs == doctest::Approx(0.0));

  // w = 2: per-sample gradient differences are all w - w* = 2, LHS = 4;
  // RHS = 2 L (f(2) - f(0)) = 2 (2.5 - 0.5) = 4: equality for quadratics
  const LipschitzBoundCheck away = lipschitz_suboptimality_bound_check(pair, flat({2.0}));
  CHECK(away.holds);
  CHECK(away.lhs == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(away.rhs == doctest::Approx(4.0).epsilon(1e-12));

  // 100 random points on quadratic and logistic: zero violations
  FiniteSumProblem quad = random_quadratic(24, 3, 5);
  FiniteSumProblem logi = random_logistic(24, 3, 6, 0.1);
  Rng rng(8);
  for (int k = 0; k < 100; ++k) {
    ParamVector w = quad.zero_like();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = rng.uniform(-4, 4);
    CHECK(lipschitz_suboptimality_bound_check(quad, w).holds);
    CHECK(lipschitz_suboptimality_bound_check(logi, w).holds);
  }

  FiniteSumProblem no_ref = random_logistic(8, 2, 2, 0.0);  // lambda=0: no optimum
  CHECK_THROWS_AS(lipschitz_suboptimality_bound_check(no_ref, no_ref.zero_like()),
                  std::invalid_argument);
}

TEST_CASE("bound verification sweep passes on quadratic and logistic problems") {
  for (int which = 0; which < 2; ++which) {
    FiniteSumProblem p =
        which == 0 ? random_quadratic(256, 8, 11) : random_logistic(128, 5, 13, 0.1);
    const SvrgConfig cfg = SvrgConfig::validated(64, 8, 8, 0.05);

    // points along a crude descent path
    std::vector<ParamVector> points;
    ParamVector w = *p.optimum;
    for (std::size_t j = 0; j < w.size(); ++j) w[j] += (j % 2 == 0 ? 1.0 : -1.0);
    for (int k = 0; k < 3; ++k) {
      points.push_back(w);
      ParamVector g = p.gradient(w);
      w.add_scaled(g, -0.5 / *p.grad_lipschitz);
    }

    const auto reports = bound_verification_sweep(p, cfg, 2000, points, 21);
    REQUIRE(reports.size() == 6);
    for (const auto& r : reports) {
      CHECK(r.pass);
      CHECK(r.empirical_var >= 0.0);
      CHECK(r.bound >= 0.0);
      INFO(r.estimator << " at point " << r.iteration << ": empirical " << r.empirical_var
                       << " bound " << r.bound);
    }
    // at the optimum every quantity collapses to ~0
    const auto at_opt = bound_verification_sweep(p, cfg, 500, {*p.optimum}, 22);
    for (const auto& r : at_opt) {
      CHECK(r.pass);
      CHECK(r.empirical_var <= 1e-4);
    }
  }
}

TEST_CASE("near the optimum the composite estimator beats a budget-matched minibatch") {
  FiniteSumProblem p = random_quadratic(256, 8, 31);
  const SvrgConfig cfg = SvrgConfig::validated(64, 8, 8, 0.05);

  ParamVector w0 = *p.optimum;
  for (std::size_t j = 0; j < w0.size(); ++j) w0[j] += 1.0;
  // within 0.1 * ||w0 - w*|| of the optimum
  ParamVector near = *p.optimum;
  for (std::size_t j = 0; j < near.size(); ++j) near[j] += 0.08;

  const RawVarianceComparison cmp = raw_variance_comparison(p, cfg, near, 4000, 17);
  CHECK(cmp.per_draw_evals == 64 + 64);
  CHECK(cmp.svr_var < cmp.minibatch_var);
}

TEST_CASE("svr estimator variance decreases along a descent trace") {
  // heterogeneous per-sample curvature (logistic) with a full-batch anchor:
  // the minibatch corrections shrink as the iterate approaches the optimum
  FiniteSumProblem p = random_logistic(64, 4, 41, 0.5);
  const SvrgConfig cfg = SvrgConfig::validated(64, 8, 8, 0.05);
  const double step = 1.0 / *p.grad_lipschitz;

  std::vector<double> variances;
  ParamVector w = *p.optimum;
  for (std::size_t j = 0; j < w.size(); ++j) w[j] += 1.5;
  for (int k = 0; k < 4; ++k) {
    const GradientEstimator est = svr_dqn_estimator(p, cfg, w, AnchorMode::FullBatch);
    variances.push_back(
        empirical_gradient_variance(est, p.proto, 3000, 51 + k, "svr").empirical_var);
    for (int it = 0; it < 6; ++it) {
      ParamVector g = p.gradient(w);
      w.add_scaled(g, -step);
    }
  }
  for (std::size_t k = 0; k + 1 < variances.size(); ++k)
    CHECK(variances[k + 1] <= variances[k] * 1.1);  // noise slack
  CHECK(variances.back() < 0.5 * variances.front());
}

TEST_CASE("empirical variance is invariant to coordinate permutation") {
  FiniteSumProblem p = random_quadratic(64, 4, 61);
  ParamVector at = *p.optimum;
  at[0] += 0.7;
  at[2] -= 0.4;
  const GradientEstimator base = minibatch_mean_estimator(p, at, 16, false);
  const GradientEstimator permuted = [&base](Rng& rng, ParamVector& out) {
    ParamVector tmp = out.zero_like();
    base(rng, tmp);
    // rotate coordinates by one
    const std::size_t n = tmp.size();
    for (std::size_t j = 0; j < n; ++j) out[(j + 1) % n] = tmp[j];
  };
  const VarianceReport a = empirical_gradient_variance(base, p.proto, 2000, 71, "base");
  const VarianceReport b = empirical_gradient_variance(permuted, p.proto, 2000, 71, "perm");
  CHECK(a.empirical_var == doctest::Approx(b.empirical_var).epsilon(1e-12));
}

TEST_CASE("m = 1: the telescoped estimator is the single term, variances equal") {
  FiniteSumProblem p = random_logistic(32, 3, 81, 0.1);
  SvrgConfig cfg{32, 32, 1, 0.05};  // b = B, m = 1 satisfies b*m >= B
  ParamVector at = *p.optimum;
  at[0] += 0.9;

  const GradientEstimator g_est = svr_dqn_estimator(p, cfg, at, AnchorMode::FullBatch);
  // tau_0 rebuilt directly from one inner step
  const GradientEstimator tau_est = [&p, cfg, at](Rng& rng, ParamVector& out) {
    std::vector<std::size_t> ids(p.n);
    for (std::size_t i = 0; i < p.n; ++i) ids[i] = i;
    const SvrgSnapshot snap = svrg_anchor(p.sample_grad, at, ids);
    std::vector<std::size_t> mb(cfg.minibatch);
    for (auto& id : mb) id = ids[rng.next_below(ids.size())];
    const ParamVector next = svrg_inner_step(at, snap, mb, cfg.eta, p.sample_grad);
    out = at;
    out.add_scaled(next, -1.0);
  };

  const VarianceReport a = empirical_gradient_variance(g_est, p.proto, 600, 91, "g");
  const VarianceReport b = empirical_gradient_variance(tau_est, p.proto, 600, 91, "tau0");
  CHECK(a.empirical_var == b.empirical_var);  // same draws, same arithmetic
}

TEST_CASE("tau covariance diagnostic: additivity measured, not assumed") {
  FiniteSumProblem p = random_logistic(48, 4, 101, 0.1);
  const SvrgConfig cfg = SvrgConfig::validated(48, 8, 6, 0.05);
  ParamVector at = *p.optimum;
  for (std::size_t j = 0; j < at.size(); ++j) at[j] += 0.8;

  const TauCovarianceDiagnostic diag = tau_covariance_diagnostic(p, cfg, at, 2000, 111);
  CHECK(diag.var_of_sum > 0.0);
  CHECK(diag.sum_of_var > 0.0);
  CHECK(std::isfinite(diag.cross_term));
  // sequential dependence exists but stays a modest fraction of the total
  CHECK(std::abs(diag.cross_term) < diag.sum_of_var);
  MESSAGE("tau additivity: var(sum)=" << diag.var_of_sum << " sum(var)=" << diag.sum_of_var
                                      << " cross=" << diag.cross_term);
}
