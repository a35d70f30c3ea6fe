#include "svrdqn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace svrdqn {

AdamState AdamState::zero_like(const ParamVector& w, AdamConfig cfg) {
  if (!(cfg.alpha > 0.0)) throw std::invalid_argument("AdamState: alpha must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw std::invalid_argument("AdamState: betas must lie in [0, 1)");
  if (cfg.epsilon < 0.0) throw std::invalid_argument("AdamState: epsilon must be >= 0");
  AdamState s;
  s.cfg = cfg;
  s.m = w.zero_like();
  s.v = w.zero_like();
  s.t = 0;
  return s;
}

void adam_step(AdamState& state, ParamVector& w, const ParamVector& g) {
  w.check_shape(g);
  state.m.check_shape(g);
  const auto& c = state.cfg;
  const std::uint64_t t = state.t + 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double gj = g[j];
    const double mj = c.beta1 * state.m[j] + (1.0 - c.beta1) * gj;
    const double vj = c.beta2 * state.v[j] + (1.0 - c.beta2) * gj * gj;
    state.m[j] = mj;
    state.v[j] = vj;
    const double mhat = mj / bc1;
    const double vhat = vj / bc2;
    w[j] -= c.alpha * mhat / (std::sqrt(vhat) + c.epsilon);
  }
  state.t = t;
}

ParamVector sgd_minibatch_step(const ParamVector& w, std::span<const ParamVector> grads,
                               double eta) {
  if (grads.empty()) throw std::invalid_argument("sgd_minibatch_step: empty batch");
  ParamVector mean = mean_in_order(grads);
  ParamVector out = w;
  out.add_scaled(mean, -eta);
  return out;
}

SvrgConfig SvrgConfig::validated(std::size_t anchor_batch, std::size_t minibatch,
                                 std::size_t inner_steps, double eta) {
  if (anchor_batch == 0 || minibatch == 0 || inner_steps == 0)
    throw std::invalid_argument("SvrgConfig: sizes must be positive");
  if (minibatch > anchor_batch)
    throw std::invalid_argument("SvrgConfig: minibatch must not exceed anchor batch");
  if (minibatch * inner_steps < anchor_batch)
    throw std::invalid_argument("SvrgConfig: requires b*m >= B");
  if (!(eta > 0.0)) throw std::invalid_argument("SvrgConfig: eta must be positive");
  return SvrgConfig{anchor_batch, minibatch, inner_steps, eta};
}

std::size_t SvrgSnapshot::index_of(std::size_t id) const {
  auto it = slot.find(id);
  if (it == slot.end())
    throw std::invalid_argument("SvrgSnapshot: sample not in the anchor batch");
  return it->second;
}

SvrgSnapshot svrg_anchor(const PerSampleGradFn& grad_fn, const ParamVector& anchor_w,
                         std::span<const std::size_t> batch) {
  if (batch.empty()) throw std::invalid_argument("svrg_anchor: empty batch");
  SvrgSnapshot snap;
  snap.anchor_w = anchor_w;
  snap.batch.assign(batch.begin(), batch.end());
  per_sample_gradients(grad_fn, anchor_w, batch, anchor_w, snap.grads_at_anchor);
  snap.anchor_grad = Gradient{mean_in_order(snap.grads_at_anchor), GradSource::Anchor};
  snap.slot.reserve(snap.batch.size());
  for (std::size_t k = 0; k < snap.batch.size(); ++k) snap.slot.emplace(snap.batch[k], k);
  return snap;
}

ParamVector svrg_inner_step(const ParamVector& w, const SvrgSnapshot& snapshot,
                            std::span<const std::size_t> minibatch, double eta,
                            const PerSampleGradFn& grad_fn) {
  if (minibatch.empty()) throw std::invalid_argument("svrg_inner_step: empty minibatch");

  // resolve cache slots first; ids outside the anchor batch are a contract error
  std::vector<std::size_t> cache_slot(minibatch.size());
  for (std::size_t k = 0; k < minibatch.size(); ++k)
    cache_slot[k] = snapshot.index_of(minibatch[k]);

  std::vector<ParamVector> fresh;
  per_sample_gradients(grad_fn, w, minibatch, w, fresh);

  // per-sample correction grad f_i(w) - grad f_i(anchor); exact zeros at w == anchor
  for (std::size_t k = 0; k < minibatch.size(); ++k) {
    const auto& cached = snapshot.grads_at_anchor[cache_slot[k]];
    fresh[k].add_scaled(cached, -1.0);
  }
  ParamVector direction = mean_in_order(fresh);
  direction.add_scaled(snapshot.anchor_grad.v, 1.0);

  ParamVector out = w;
  out.add_scaled(direction, -eta);
  return out;
}

OuterStepResult svr_dqn_outer_step(const ParamVector& anchor_w, const SvrgConfig& cfg,
                                   AdamState& adam, const PerSampleGradFn& grad_fn,
                                   std::size_t n_samples, Rng& rng) {
  if (cfg.anchor_batch > n_samples)
    throw std::invalid_argument("svr_dqn_outer_step: anchor batch exceeds sample count");

  const std::vector<std::size_t> batch =
      rng.sample_without_replacement(n_samples, cfg.anchor_batch);
  const SvrgSnapshot snap = svrg_anchor(grad_fn, anchor_w, batch);

  ParamVector w = anchor_w;
  std::vector<std::size_t> mb(cfg.minibatch);
  for (std::size_t step = 0; step < cfg.inner_steps; ++step) {
    for (auto& id : mb) id = batch[rng.next_below(batch.size())];
    w = svrg_inner_step(w, snap, mb, cfg.eta, grad_fn);
    if (!w.all_finite())
      throw std::runtime_error("svr_dqn_outer_step: non-finite parameters at inner step " +
                               std::to_string(step + 1));
  }

  // anchor_w - w_m, the ascent-direction surrogate; see header note on sign.
  Gradient surrogate{anchor_w, GradSource::Composite};
  surrogate.v.add_scaled(w, -1.0);

  OuterStepResult result{anchor_w, no_rescale(surrogate), snap.anchor_grad};
  adam_step(adam, result.w, surrogate.v);
  if (!result.w.all_finite())
    throw std::runtime_error("svr_dqn_outer_step: non-finite parameters after Adam update");
  return result;
}

const Gradient& no_rescale(const Gradient& g) { return g; }

}  // namespace svrdqn
