#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "svrdqn/rng.hpp"

namespace svrdqn {

// Episodic environment with a bounded episode length. Deterministic
// conditioned on (seed, action sequence); stepping a finished episode without
// reset is an error.
class Environment {
 public:
  struct StepResult {
    std::vector<double> state;
    double reward = 0.0;
    bool terminal = false;
  };

  virtual ~Environment() = default;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual std::vector<double> reset() = 0;
  virtual StepResult step(std::size_t action) = 0;
  virtual void reseed(std::uint64_t seed) = 0;
  virtual std::unique_ptr<Environment> clone(std::uint64_t seed) const = 0;

  // Opaque mid-episode state (position, counters, RNG), so checkpointed runs
  // resume on the exact same trajectory.
  virtual std::vector<std::uint64_t> snapshot_words() const = 0;
  virtual void restore_words(const std::vector<std::uint64_t>& words) = 0;
};

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

// size x size grid, one-hot state over cells. Reward +1 entering the goal,
// -1 entering a pit (both terminal), 0 elsewhere; moves off the edge stay in
// place. With probability slip_prob the executed action is resampled
// uniformly from all four.
struct GridworldSpec {
  std::size_t size = 4;
  Cell start{0, 0};
  Cell goal{3, 3};
  std::vector<Cell> pits;
  double slip_prob = 0.0;
  std::size_t episode_cap = 200;
};

// 1-D chain of `length` states, one-hot state, two actions (0 = left,
// 1 = right). Starting one step from the left end: moving left terminates
// immediately with a small deterministic reward; walking right to the far end
// terminates with the larger reward plus zero-mean uniform noise of the given
// standard deviation.
struct ChainSpec {
  std::size_t length = 8;
  double noise = 0.0;
  double left_reward = 0.1;
  double right_reward = 1.0;
  std::size_t episode_cap = 200;
};

std::unique_ptr<Environment> make_gridworld(const GridworldSpec& spec, std::uint64_t seed);
std::unique_ptr<Environment> make_chain(const ChainSpec& spec, std::uint64_t seed);

// Gridworld actions, also used by the value-iteration oracle.
enum GridAction : std::size_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

}  // namespace svrdqn
