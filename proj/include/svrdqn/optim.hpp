#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "svrdqn/batch_kernels.hpp"
#include "svrdqn/param_vector.hpp"
#include "svrdqn/rng.hpp"

namespace svrdqn {

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam moment estimates plus step counter. The step consumes one gradient
// (from whatever estimator) and applies the bias-corrected update
//   m' = b1 m + (1-b1) g        v' = b2 v + (1-b2) g^2
//   w' = w - alpha * (m'/(1-b1^t)) / (sqrt(v'/(1-b2^t)) + eps).
struct AdamState {
  AdamConfig cfg;
  ParamVector m;
  ParamVector v;
  std::uint64_t t = 0;

  static AdamState zero_like(const ParamVector& w, AdamConfig cfg = {});
};

void adam_step(AdamState& state, ParamVector& w, const ParamVector& g);

// w - eta * mean(grads)
ParamVector sgd_minibatch_step(const ParamVector& w, std::span<const ParamVector> grads,
                               double eta);

// Inner-loop geometry of the variance-reduced optimizer. Construction
// enforces b <= B and b*m >= B (the minibatch count must be able to cover the
// anchor batch).
struct SvrgConfig {
  std::size_t anchor_batch = 512;  // B: samples used for the anchor gradient
  std::size_t minibatch = 32;      // b: samples per inner step
  std::size_t inner_steps = 32;    // m: inner steps per outer iteration
  double eta = 0.01;               // inner learning rate

  static SvrgConfig validated(std::size_t anchor_batch, std::size_t minibatch,
                              std::size_t inner_steps, double eta);
};

// Anchor snapshot: parameters frozen at the start of an outer iteration, the
// full-batch gradient over the anchor batch at those parameters, and the
// batch identity it was computed on. Per-sample gradients at the anchor are
// cached so inner steps reuse them instead of recomputing.
struct SvrgSnapshot {
  ParamVector anchor_w;
  Gradient anchor_grad;  // source == Anchor
  std::vector<std::size_t> batch;
  std::vector<ParamVector> grads_at_anchor;        // parallel to batch
  std::unordered_map<std::size_t, std::size_t> slot;  // sample id -> batch index

  std::size_t index_of(std::size_t id) const;
};

// mu = (1/B) sum_{i in batch} grad f_i(anchor_w); batch must be non-empty.
SvrgSnapshot svrg_anchor(const PerSampleGradFn& grad_fn, const ParamVector& anchor_w,
                         std::span<const std::size_t> batch);

// w - eta * ( mean_i [grad f_i(w) - grad f_i(anchor_w)] + mu ). The
// correction is accumulated per sample, so at w == anchor_w each term cancels
// exactly and the step direction is mu bit-for-bit, whatever the minibatch.
ParamVector svrg_inner_step(const ParamVector& w, const SvrgSnapshot& snapshot,
                            std::span<const std::size_t> minibatch, double eta,
                            const PerSampleGradFn& grad_fn);

struct OuterStepResult {
  ParamVector w;        // parameters after the Adam update
  Gradient surrogate;   // the gradient estimate fed to Adam (source == Composite)
  Gradient anchor_grad; // mu over the step's anchor batch (source == Anchor)
};

// One full outer iteration: draw the anchor batch (without replacement from
// [0, n_samples)), compute the anchor, run inner_steps variance-reduced
// minibatch steps from w0 = anchor_w (minibatches drawn uniformly with
// replacement from the anchor batch), then feed the displacement surrogate to
// Adam. The surrogate is anchor_w - w_m: the inner loop accumulates
// -eta * (corrected gradients), so negating the displacement yields an
// ascent-direction estimate that a subtracting Adam turns into descent.
// The surrogate is intentionally not rescaled before Adam (see no_rescale).
OuterStepResult svr_dqn_outer_step(const ParamVector& anchor_w, const SvrgConfig& cfg,
                                   AdamState& adam, const PerSampleGradFn& grad_fn,
                                   std::size_t n_samples, Rng& rng);

// Identity pass-through marking the contract that the composite surrogate
// enters Adam unscaled; Adam's effective step is invariant to gradient scale,
// so normalizing would only add noise at epsilon magnitude.
const Gradient& no_rescale(const Gradient& g);

}  // namespace svrdqn
