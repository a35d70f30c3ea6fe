#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "svrdqn/finite_sum.hpp"
#include "svrdqn/optim.hpp"
#include "svrdqn/param_vector.hpp"
#include "svrdqn/rng.hpp"

namespace svrdqn {

// Empirical variance of a vector-valued gradient estimator, operationalized
// as the trace of the sample covariance (sum of per-coordinate unbiased
// variances), with the matching theoretical bound when one applies.
struct VarianceReport {
  std::string estimator;
  std::size_t iteration = 0;  // sweep point index
  double empirical_var = 0.0;
  double std_error = 0.0;  // standard error of empirical_var
  double bound = std::numeric_limits<double>::quiet_NaN();
  double suboptimality = std::numeric_limits<double>::quiet_NaN();
  double margin = std::numeric_limits<double>::quiet_NaN();  // bound - empirical
  std::size_t trials = 0;
  bool pass = true;  // empirical <= bound + 3 * std_error
};

// Draws one gradient estimate into `out` using the supplied stream.
using GradientEstimator = std::function<void(Rng&, ParamVector&)>;

// Runs the estimator `trials` times with independent per-trial streams
// derived from `seed`, at whatever parameter point the estimator closes
// over. Trials run in parallel into per-trial slots; the statistics pass is
// compensated and in trial order, so the result is identical for any thread
// count.
VarianceReport empirical_gradient_variance(const GradientEstimator& estimator,
                                           const ParamVector& proto, std::size_t trials,
                                           std::uint64_t seed, std::string tag);

// 8 L m eta^2 (f(w) - f(w*)) / b
double svr_dqn_variance_bound(const SvrgConfig& cfg, double lipschitz, double suboptimality);

// 2 L (f(w) - f(w*)) / B
double double_dqn_variance_bound(std::size_t batch, double lipschitz, double suboptimality);

// (1/n) sum_i ||grad f_i(w) - grad f_i(w*)||^2  <=  2 L (f(w) - f(w*)),
// evaluated with 1e-9 slack. Needs a problem with known optimum and L.
struct LipschitzBoundCheck {
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs
};
LipschitzBoundCheck lipschitz_suboptimality_bound_check(const FiniteSumProblem& problem,
                                                        const ParamVector& w);

// --- estimator factories ------------------------------------------------
// `centered` subtracts grad f_i(w*) per sample, the measurable surrogate for
// the per-sample estimation error that the bounds govern; it requires a
// known optimum.

GradientEstimator single_sample_estimator(const FiniteSumProblem& problem, ParamVector at,
                                          bool centered);

// Mean gradient over a batch drawn per trial (without replacement unless
// with_replacement is set).
GradientEstimator minibatch_mean_estimator(const FiniteSumProblem& problem, ParamVector at,
                                           std::size_t batch_size, bool centered,
                                           bool with_replacement = false);

enum class AnchorMode {
  ResamplePerTrial,  // fresh anchor batch every draw (the algorithm as run)
  FullBatch,         // anchor over all n samples
  FixedIds           // caller-provided batch, fixed across draws
};

// The composite estimate the outer step feeds to Adam (anchor parameters
// minus final inner iterate), with the anchor handled per `mode`. No Adam
// update is applied; this is the estimator whose variance the bounds govern.
GradientEstimator svr_dqn_estimator(const FiniteSumProblem& problem, const SvrgConfig& cfg,
                                    ParamVector at, AnchorMode mode,
                                    std::vector<std::size_t> fixed_ids = {});

// At each point: empirical variance of the variance-reduced estimator
// (anchor batch drawn once per point; suboptimality measured on the
// batch-restricted objective, matching the conditional analysis) and of the
// centered minibatch estimator (batch redrawn per trial; full-problem
// suboptimality), each against its bound with 3-standard-error slack.
// Returns two reports per point, variance-reduced first.
std::vector<VarianceReport> bound_verification_sweep(const FiniteSumProblem& problem,
                                                     const SvrgConfig& cfg, std::size_t trials,
                                                     const std::vector<ParamVector>& points,
                                                     std::uint64_t seed);

// Raw (uncentered) variance of the composite estimator vs a plain minibatch
// mean using the same number of per-sample gradient evaluations per draw.
struct RawVarianceComparison {
  double svr_var = 0.0;
  double minibatch_var = 0.0;
  std::size_t per_draw_evals = 0;
};
RawVarianceComparison raw_variance_comparison(const FiniteSumProblem& problem,
                                              const SvrgConfig& cfg, const ParamVector& at,
                                              std::size_t trials, std::uint64_t seed);

// Measures how additive the per-inner-step term variances actually are:
// trace Var(sum tau_i) vs sum_i trace Var(tau_i), over a full-batch anchor.
// The cross term is reported, not asserted, since inner iterates are
// sequentially dependent.
struct TauCovarianceDiagnostic {
  double var_of_sum = 0.0;
  double sum_of_var = 0.0;
  double cross_term = 0.0;  // var_of_sum - sum_of_var
};
TauCovarianceDiagnostic tau_covariance_diagnostic(const FiniteSumProblem& problem,
                                                  const SvrgConfig& cfg, const ParamVector& at,
                                                  std::size_t trials, std::uint64_t seed);

}  // namespace svrdqn
