#pragma once

#include <optional>
#include <span>

#include "svrdqn/mlp.hpp"
#include "svrdqn/optim.hpp"
#include "svrdqn/replay.hpp"

namespace svrdqn {

enum class TargetRule { Dqn, DoubleQ };
enum class OptimizerKind { AdamBaseline, SvrDqn };

// Online network, delayed target copy, and the sync bookkeeping. gamma up to
// and including 1 is accepted so that undiscounted targets can be probed.
struct QLearner {
  MlpNetwork online;
  MlpNetwork target;
  double gamma = 0.99;
  std::size_t sync_period = 250;
  std::size_t steps_since_sync = 0;

  QLearner() = default;
  QLearner(MlpNetwork net, double gamma, std::size_t sync_period);

  std::size_t action_count() const { return online.output_dim(); }
};

// r for terminal transitions, else r + gamma * max_a Q(s', a; target).
double dqn_target(const QLearner& learner, const Transition& tr);

// r for terminal transitions, else r + gamma * Q(s', argmax_a Q(s', a; online); target).
// Argmax ties break toward the lowest action index.
double double_q_target(const QLearner& learner, const Transition& tr);

struct BellmanBatch {
  double loss = 0.0;                    // mean squared residual over the batch
  std::vector<double> targets;          // y_i, fixed for the whole optimization step
  std::vector<ParamVector> per_sample;  // gradient of (y_i - Q(s_i, a_i))^2 w.r.t. online weights
};

// Semi-gradient Bellman loss: targets are constants, nothing flows through
// the target network. The mean of per_sample equals the gradient of `loss`.
BellmanBatch bellman_loss_and_grads(const QLearner& learner, std::span<const Transition> batch,
                                    TargetRule rule);

// With probability eps a uniformly random action, otherwise the greedy one
// (lowest index on ties).
std::size_t epsilon_greedy_action(std::span<const double> q_values, double eps, Rng& rng);

// target := online, bit-exact; resets the sync counter.
void target_sync(QLearner& learner);

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.1;
  std::size_t anneal_frames = 1;

  EpsilonSchedule() = default;
  EpsilonSchedule(double start, double end, std::size_t anneal_frames);
  double at(std::size_t frame) const;
};

struct TrainStepResult {
  double loss = 0.0;  // Bellman loss at the pre-update parameters
  // variance-reduced path only: the step's anchor and its batch gradient
  // (checkpointed alongside the Adam moments), plus the Adam input
  std::optional<ParamVector> anchor_w;
  std::optional<Gradient> anchor_grad;
  std::optional<Gradient> surrogate;
};

// One optimization step on the replay buffer: draw the sample batch (size B,
// without replacement), freeze targets at the current parameters, then either
// a single Adam step on the mean gradient (baseline) or a full
// variance-reduced outer step. Returns nullopt (skipped iteration) when the
// buffer holds fewer than B transitions. Advances the sync counter and copies
// the target network every sync_period completed steps.
std::optional<TrainStepResult> train_iteration(QLearner& learner, const ReplayBuffer& buffer,
                                               OptimizerKind kind, const SvrgConfig& svrg,
                                               AdamState& adam, TargetRule rule, Rng& rng);

}  // namespace svrdqn
