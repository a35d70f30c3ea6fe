#include "svrdqn/env.hpp"

#include <cmath>
#include <stdexcept>

namespace svrdqn {

namespace {

class Gridworld final : public Environment {
 public:
  Gridworld(const GridworldSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed), seed_(seed) {
    if (spec_.size < 2) throw std::invalid_argument("gridworld: size must be >= 2");
    check_cell(spec_.start, "start");
    check_cell(spec_.goal, "goal");
    for (const Cell& p : spec_.pits) check_cell(p, "pit");
    if (spec_.slip_prob < 0.0 || spec_.slip_prob > 1.0)
      throw std::invalid_argument("gridworld: slip_prob outside [0, 1]");
  }

  std::size_t state_dim() const override { return spec_.size * spec_.size; }
  std::size_t action_count() const override { return 4; }

  std::vector<double> reset() override {
    pos_ = spec_.start;
    steps_ = 0;
    done_ = false;
    started_ = true;
    return encode(pos_);
  }

  StepResult step(std::size_t action) override {
    if (!started_ || done_) throw std::logic_error("gridworld: step without reset");
    if (action >= 4) throw std::invalid_argument("gridworld: bad action");

    std::size_t executed = action;
    if (spec_.slip_prob > 0.0 && rng_.uniform01() < spec_.slip_prob)
      executed = static_cast<std::size_t>(rng_.next_below(4));

    Cell next = pos_;
    switch (executed) {
      case kUp: next.row -= 1; break;
      case kDown: next.row += 1; break;
      case kLeft: next.col -= 1; break;
      case kRight: next.col += 1; break;
    }
    if (!inside(next)) next = pos_;  // bump into the wall, stay
    pos_ = next;
    steps_ += 1;

    StepResult res;
    res.reward = 0.0;
    res.terminal = false;
    if (pos_ == spec_.goal) {
      res.reward = 1.0;
      res.terminal = true;
    } else {
      for (const Cell& p : spec_.pits) {
        if (pos_ == p) {
          res.reward = -1.0;
          res.terminal = true;
          break;
        }
      }
    }
    if (!res.terminal && steps_ >= spec_.episode_cap) res.terminal = true;
    done_ = res.terminal;
    res.state = encode(pos_);
    return res;
  }

  void reseed(std::uint64_t seed) override {
    rng_ = Rng(seed);
    seed_ = seed;
  }

  std::unique_ptr<Environment> clone(std::uint64_t seed) const override {
    return std::make_unique<Gridworld>(spec_, seed);
  }

  std::vector<std::uint64_t> snapshot_words() const override {
    const auto s = rng_.state();
    return {s[0], s[1], s[2], s[3], static_cast<std::uint64_t>(pos_.row),
            static_cast<std::uint64_t>(pos_.col), steps_, done_ ? 1ull : 0ull,
            started_ ? 1ull : 0ull};
  }

  void restore_words(const std::vector<std::uint64_t>& w) override {
    if (w.size() != 9) throw std::invalid_argument("gridworld: bad snapshot");
    rng_.set_state({w[0], w[1], w[2], w[3]});
    pos_ = Cell{static_cast<int>(w[4]), static_cast<int>(w[5])};
    steps_ = w[6];
    done_ = w[7] != 0;
    started_ = w[8] != 0;
  }

 private:
  bool inside(const Cell& c) const {
    return c.row >= 0 && c.col >= 0 && c.row < static_cast<int>(spec_.size) &&
           c.col < static_cast<int>(spec_.size);
  }
  void check_cell(const Cell& c, const char* what) const {
    if (!inside(c)) throw std::invalid_argument(std::string("gridworld: ") + what + " out of bounds");
  }
  std::vector<double> encode(const Cell& c) const {
    std::vector<double> s(state_dim(), 0.0);
    s[static_cast<std::size_t>(c.row) * spec_.size + static_cast<std::size_t>(c.col)] = 1.0;
    return s;
  }

  GridworldSpec spec_;
  Rng rng_;
  std::uint64_t seed_;
  Cell pos_{};
  std::size_t steps_ = 0;
  bool done_ = false;
  bool started_ = false;
};

class Chain final : public Environment {
 public:
  Chain(const ChainSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
    if (spec_.length < 3) throw std::invalid_argument("chain: length must be >= 3");
    if (spec_.noise < 0.0) throw std::invalid_argument("chain: noise must be >= 0");
  }

  std::size_t state_dim() const override { return spec_.length; }
  std::size_t action_count() const override { return 2; }

  std::vector<double> reset() override {
    pos_ = 1;
    steps_ = 0;
    done_ = false;
    started_ = true;
    return encode(pos_);
  }

  StepResult step(std::size_t action) override {
    if (!started_ || done_) throw std::logic_error("chain: step without reset");
    if (action >= 2) throw std::invalid_argument("chain: bad action");

    pos_ += (action == 1) ? 1 : -1;
    steps_ += 1;

    StepResult res;
    if (pos_ == 0) {
      res.reward = spec_.left_reward;
      res.terminal = true;
    } else if (pos_ == static_cast<int>(spec_.length) - 1) {
      // zero-mean uniform noise with the requested standard deviation
      const double half_width = spec_.noise * std::sqrt(3.0);
      const double noise = spec_.noise > 0.0 ? rng_.uniform(-half_width, half_width) : 0.0;
      res.reward = spec_.right_reward + noise;
      res.terminal = true;
    } else {
      res.reward = 0.0;
      res.terminal = steps_ >= spec_.episode_cap;
    }
    done_ = res.terminal;
    res.state = encode(pos_);
    return res;
  }

  void reseed(std::uint64_t seed) override { rng_ = Rng(seed); }

  std::unique_ptr<Environment> clone(std::uint64_t seed) const override {
    return std::make_unique<Chain>(spec_, seed);
  }

  std::vector<std::uint64_t> snapshot_words() const override {
    const auto s = rng_.state();
    return {s[0], s[1], s[2], s[3], static_cast<std::uint64_t>(pos_), steps_,
            done_ ? 1ull : 0ull, started_ ? 1ull : 0ull};
  }

  void restore_words(const std::vector<std::uint64_t>& w) override {
    if (w.size() != 8) throw std::invalid_argument("chain: bad snapshot");
    rng_.set_state({w[0], w[1], w[2], w[3]});
    pos_ = static_cast<int>(w[4]);
    steps_ = w[5];
    done_ = w[6] != 0;
    started_ = w[7] != 0;
  }

 private:
  std::vector<double> encode(int p) const {
    std::vector<double> s(state_dim(), 0.0);
    s[static_cast<std::size_t>(p)] = 1.0;
    return s;
  }

  ChainSpec spec_;
  Rng rng_;
  int pos_ = 1;
  std::size_t steps_ = 0;
  bool done_ = false;
  bool started_ = false;
};

}  // namespace

std::unique_ptr<Environment> make_gridworld(const GridworldSpec& spec, std::uint64_t seed) {
  return std::make_unique<Gridworld>(spec, seed);
}

std::unique_ptr<Environment> make_chain(const ChainSpec& spec, std::uint64_t seed) {
  return std::make_unique<Chain>(spec, seed);
}

}  // namespace svrdqn
