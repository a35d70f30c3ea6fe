#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svrdqn/env.hpp"
#include "svrdqn/mlp.hpp"
#include "svrdqn/optim.hpp"
#include "svrdqn/qlearner.hpp"

namespace svrdqn {

struct EnvironmentSpec {
  std::string name;  // "gridworld" | "chain"
  GridworldSpec grid;
  ChainSpec chain;

  std::unique_ptr<Environment> instantiate(std::uint64_t seed) const;
  std::size_t state_dim() const;
  std::size_t action_count() const;
};

struct NetworkSpec {
  std::vector<std::size_t> hidden{32};
  Activation activation = Activation::Relu;
};

struct ReplaySpec {
  std::size_t capacity = 10000;
  std::size_t sync_period = 250;
  double gamma = 0.99;
  std::size_t learn_every = 4;  // environment steps per optimization step
  bool persist_buffer = true;   // include buffer contents in checkpoints
};

struct RunSpec {
  std::size_t frames = 20000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6};
  std::size_t eval_period = 1000;
  std::size_t eval_episodes = 20;
  double eval_epsilon = 0.05;
  double eps_start = 1.0;
  double eps_end = 0.1;
  double anneal_fraction = 0.2;  // share of frames over which epsilon anneals
  std::string out_dir = "out";
  bool measure_variance = false;
  std::size_t variance_trials = 32;
  TargetRule target_rule = TargetRule::DoubleQ;
};

struct ExperimentConfig {
  EnvironmentSpec environment;
  NetworkSpec network;
  OptimizerKind optimizer = OptimizerKind::SvrDqn;
  SvrgConfig svrg{64, 8, 8, 0.05};
  AdamConfig adam;
  ReplaySpec replay;
  RunSpec run;

  void validate() const;  // throws std::invalid_argument with the offending key
};

// Parses the strict-keyed JSON config; any unknown key at any level is an
// error (silent typos corrupt experiments). See README for the schema.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);

// Config for the `variance-sweep` subcommand: a synthetic problem, the
// optimizer geometry, and the sweep protocol.
struct SweepConfig {
  std::string problem = "quadratic";  // quadratic | logistic
  std::size_t samples = 256;
  std::size_t dim = 8;
  std::uint64_t data_seed = 1;
  double spread = 1.0;     // scale of the quadratic centers / logistic features
  double lambda = 0.1;     // logistic regularizer
  SvrgConfig svrg{64, 8, 8, 0.05};
  std::size_t trials = 10000;
  std::size_t points = 5;
  std::uint64_t sweep_seed = 7;
  double start_distance = 4.0;  // distance of the first sweep point from w*
  std::string out_csv = "variance_sweep.csv";
};

SweepConfig load_sweep_config(const std::string& path);
SweepConfig parse_sweep_config(const std::string& json_text);

std::string optimizer_kind_name(OptimizerKind k);
OptimizerKind optimizer_kind_from_name(const std::string& name);

}  // namespace svrdqn
