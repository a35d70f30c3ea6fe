#pragma once

#include <array>
#include <vector>

#include "svrdqn/batch_kernels.hpp"
#include "svrdqn/env.hpp"
#include "svrdqn/mlp.hpp"
#include "svrdqn/param_vector.hpp"

// Plain serial implementations kept as independent checks for the parallel
// kernels and the learning stack. Nothing here is called from the production
// paths; tests and the benchmark link against this library.
namespace svrdqn::reference {

// Naive triple-loop forward pass over the weight blocks.
std::vector<double> naive_mlp_forward(const MlpNetwork& net, const std::vector<double>& input);

// Straight serial accumulation, no compensation.
ParamVector naive_mean(const std::vector<ParamVector>& grads);

// Serial per-sample gradient map.
std::vector<ParamVector> naive_per_sample_gradients(const PerSampleGradFn& grad_fn,
                                                    const ParamVector& w,
                                                    const std::vector<std::size_t>& ids,
                                                    const ParamVector& proto);

// Two-pass trace of the sample covariance (unbiased, divisor n-1).
double naive_trace_variance(const std::vector<ParamVector>& samples);

// Tabular value iteration on the gridworld dynamics, re-derived from the
// GridworldSpec parameters rather than the Environment implementation.
struct GridworldPlan {
  std::vector<double> value;                        // V[cell], terminal cells 0
  std::vector<std::array<double, 4>> q;             // Q[cell][action]
  std::vector<std::vector<std::size_t>> best_actions;  // argmax set per cell (1e-9 tie slack)
};
GridworldPlan gridworld_value_iteration(const GridworldSpec& spec, double gamma,
                                        double tol = 1e-12, std::size_t max_iters = 100000);

// Undiscounted return and step count of the greedy optimal policy rolled out
// from the start cell (deterministic dynamics required).
struct RolloutSummary {
  double undiscounted_return = 0.0;
  std::size_t steps = 0;
  bool reached_terminal = false;
};
RolloutSummary gridworld_optimal_rollout(const GridworldSpec& spec, double gamma);

// Discounted value of the two pure chain policies from the start state,
// closed form: gamma^(k-1) * terminal reward after k steps.
double chain_always_left_value(const ChainSpec& spec, double gamma);
double chain_always_right_value(const ChainSpec& spec, double gamma);
// Expected undiscounted return of the optimal policy from the start state.
double chain_optimal_return(const ChainSpec& spec, double gamma);

}  // namespace svrdqn::reference
