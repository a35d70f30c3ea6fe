#include "svrdqn/qlearner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace svrdqn {

QLearner::QLearner(MlpNetwork net, double gamma_, std::size_t sync_period_)
    : online(net), target(std::move(net)), gamma(gamma_), sync_period(sync_period_) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("QLearner: gamma outside [0, 1]");
  if (sync_period == 0) throw std::invalid_argument("QLearner: sync_period must be positive");
}

namespace {

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

double dqn_target(const QLearner& learner, const Transition& tr) {
  if (tr.terminal) return tr.reward;
  const std::vector<double> q = learner.target.forward(tr.next_state);
  return tr.reward + learner.gamma * q[argmax_lowest(q)];
}

double double_q_target(const QLearner& learner, const Transition& tr) {
  if (tr.terminal) return tr.reward;
  const std::vector<double> q_online = learner.online.forward(tr.next_state);
  const std::size_t chosen = argmax_lowest(q_online);
  const std::vector<double> q_target = learner.target.forward(tr.next_state);
  return tr.reward + learner.gamma * q_target[chosen];
}

BellmanBatch bellman_loss_and_grads(const QLearner& learner, std::span<const Transition> batch,
                                    TargetRule rule) {
  if (batch.empty()) throw std::invalid_argument("bellman_loss_and_grads: empty batch");
  for (const Transition& tr : batch) {
    if (tr.action >= learner.action_count())
      throw std::invalid_argument("bellman_loss_and_grads: action out of range");
    if (tr.state.size() != learner.online.input_dim() ||
        (!tr.terminal && tr.next_state.size() != learner.online.input_dim()))
      throw std::invalid_argument("bellman_loss_and_grads: state dimension mismatch");
  }

  BellmanBatch out;
  out.targets.resize(batch.size());
  out.per_sample.resize(batch.size());

  const auto count = static_cast<std::ptrdiff_t>(batch.size());
  std::vector<double> sq_residual(batch.size());
#ifdef _OPENMP
  const bool parallel = batch.size() > 24 && omp_in_parallel() == 0;
#else
  const bool parallel = false;
#endif
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    const Transition& tr = batch[static_cast<std::size_t>(k)];
    const double y =
        rule == TargetRule::Dqn ? dqn_target(learner, tr) : double_q_target(learner, tr);
    const std::vector<double> q = learner.online.forward(tr.state);
    const double residual = y - q[tr.action];
    std::vector<double> upstream(learner.action_count(), 0.0);
    upstream[tr.action] = -2.0 * residual;  // d/dtheta (y - Q_a)^2
    Gradient g = learner.online.backward(tr.state, upstream);
    out.targets[static_cast<std::size_t>(k)] = y;
    out.per_sample[static_cast<std::size_t>(k)] = std::move(g.v);
    sq_residual[static_cast<std::size_t>(k)] = residual * residual;
  }

  CompensatedSum acc;
  for (double s : sq_residual) acc.add(s);
  out.loss = acc.value() / static_cast<double>(batch.size());
  return out;
}

std::size_t epsilon_greedy_action(std::span<const double> q_values, double eps, Rng& rng) {
  if (q_values.empty()) throw std::invalid_argument("epsilon_greedy_action: empty action values");
  if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("epsilon_greedy_action: eps outside [0, 1]");
  if (eps > 0.0 && rng.uniform01() < eps)
    return static_cast<std::size_t>(rng.next_below(q_values.size()));
  return argmax_lowest(q_values);
}

void target_sync(QLearner& learner) {
  learner.target.set_weights(learner.online.weights());
  learner.steps_since_sync = 0;
}

EpsilonSchedule::EpsilonSchedule(double start_, double end_, std::size_t anneal_frames_)
    : start(start_), end(end_), anneal_frames(anneal_frames_) {
  if (start < 0.0 || start > 1.0 || end < 0.0 || end > 1.0)
    throw std::invalid_argument("EpsilonSchedule: epsilons outside [0, 1]");
  if (end > start) throw std::invalid_argument("EpsilonSchedule: schedule must not increase");
  if (anneal_frames == 0) throw std::invalid_argument("EpsilonSchedule: anneal_frames must be positive");
}

double EpsilonSchedule::at(std::size_t frame) const {
  if (frame >= anneal_frames) return end;
  const double f = static_cast<double>(frame) / static_cast<double>(anneal_frames);
  return start + (end - start) * f;
}

std::optional<TrainStepResult> train_iteration(QLearner& learner, const ReplayBuffer& buffer,
                                               OptimizerKind kind, const SvrgConfig& svrg,
                                               AdamState& adam, TargetRule rule, Rng& rng) {
  if (buffer.size() < svrg.anchor_batch) return std::nullopt;  // skipped iteration

  // Sample batch drawn here (without replacement over buffer slots) so the
  // targets can be frozen once per step; the optimizer then treats the batch
  // as its whole sample universe.
  const std::vector<std::size_t> slots =
      rng.sample_without_replacement(buffer.size(), svrg.anchor_batch);
  std::vector<Transition> batch;
  batch.reserve(slots.size());
  for (std::size_t s : slots) batch.push_back(buffer.slot(s));

  const BellmanBatch fixed = bellman_loss_and_grads(learner, batch, rule);

  TrainStepResult step;
  step.loss = fixed.loss;
  if (kind == OptimizerKind::AdamBaseline) {
    ParamVector mean = mean_in_order(fixed.per_sample);
    adam_step(adam, learner.online.weights(), mean);
  } else {
    // Per-sample gradient of (y_k - Q(s_k, a_k; w))^2 with y_k frozen above.
    const MlpNetwork& arch = learner.online;
    const auto& targets = fixed.targets;
    auto grad_fn = [&arch, &batch, &targets](std::size_t k, const ParamVector& w,
                                             ParamVector& out) {
      const Transition& tr = batch[k];
      const std::vector<double> q = arch.forward_with(w, tr.state);
      const double residual = targets[k] - q[tr.action];
      std::vector<double> upstream(arch.output_dim(), 0.0);
      upstream[tr.action] = -2.0 * residual;
      out = arch.backward_with(w, tr.state, upstream).v;
    };
    step.anchor_w = learner.online.weights();
    OuterStepResult res = svr_dqn_outer_step(learner.online.weights(), svrg, adam, grad_fn,
                                             batch.size(), rng);
    learner.online.set_weights(res.w);
    step.anchor_grad = std::move(res.anchor_grad);
    step.surrogate = std::move(res.surrogate);
  }

  if (!learner.online.weights().all_finite())
    throw std::runtime_error("train_iteration: non-finite parameters");

  learner.steps_since_sync += 1;
  if (learner.steps_since_sync >= learner.sync_period) target_sync(learner);
  return step;
}

}  // namespace svrdqn
