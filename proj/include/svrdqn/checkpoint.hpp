#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "svrdqn/mlp.hpp"
#include "svrdqn/optim.hpp"
#include "svrdqn/replay.hpp"

namespace svrdqn {

// Complete per-trial training state. Loading rebuilds the trial exactly where
// it stopped: resumed runs replay the same trace as unbroken ones when the
// buffer is persisted.
struct TrialCheckpoint {
  std::uint64_t trial_seed = 0;

  // network architecture + both weight sets
  std::vector<std::size_t> layer_sizes;
  std::vector<Activation> hidden_acts;
  ParamVector online_weights;
  ParamVector target_weights;

  // learner bookkeeping
  double gamma = 0.99;
  std::uint64_t sync_period = 250;
  std::uint64_t steps_since_sync = 0;

  // optimizer
  AdamConfig adam_cfg;
  std::uint64_t adam_t = 0;
  ParamVector adam_m;
  ParamVector adam_v;

  // last completed variance-reduction anchor (empty for the baseline path)
  bool has_svrg_anchor = false;
  ParamVector svrg_anchor_w;
  ParamVector svrg_anchor_grad;

  // training-loop position
  std::uint64_t frame = 0;
  std::uint64_t iterations = 0;
  double last_loss = std::numeric_limits<double>::quiet_NaN();
  double random_return = 0.0;
  std::vector<double> observation;
  std::array<std::uint64_t, 4> train_rng_state{};
  std::vector<std::uint64_t> env_words;

  // replay buffer (contents optional)
  std::uint64_t buffer_capacity = 0;
  std::uint64_t buffer_cursor = 0;
  bool has_buffer_contents = false;
  std::vector<Transition> buffer_contents;

  // bytes of the trial CSV written so far; resume truncates to this offset
  std::uint64_t csv_bytes = 0;
  std::uint64_t wall_ms_base = 0;
};

// Binary format, little-endian, doubles as raw IEEE-754 bits; round-trips
// bit-exactly. Writing goes through a temp file + rename so a crash never
// leaves a half-written checkpoint behind.
void save_checkpoint(const std::string& path, const TrialCheckpoint& ck);

// Throws std::runtime_error on bad magic, version mismatch or truncation;
// nothing is applied on failure.
TrialCheckpoint load_checkpoint(const std::string& path);

// Standalone network weight files (layout header + raw 64-bit reals).
void save_weights(const std::string& path, const MlpNetwork& net);
MlpNetwork load_weights(const std::string& path);

}  // namespace svrdqn
