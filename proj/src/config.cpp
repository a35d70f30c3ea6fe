#include "svrdqn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace svrdqn {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("config: " + msg); }

void expect_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(where + " must be an object");
  for (const auto& item : obj.items())
    if (!allowed.contains(item.key())) fail("unknown key '" + where + "." + item.key() + "'");
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail("bad value for '" + key + "'");
  }
}

EnvironmentSpec parse_environment(const json& j) {
  expect_keys(j, "environment",
              {"name", "size", "start", "goal", "pits", "slip_prob", "length", "noise",
               "left_reward", "right_reward", "episode_cap"});
  EnvironmentSpec env;
  env.name = get_or<std::string>(j, "name", "");
  if (env.name == "gridworld") {
    env.grid.size = get_or<std::size_t>(j, "size", 4);
    env.grid.slip_prob = get_or<double>(j, "slip_prob", 0.0);
    env.grid.episode_cap = get_or<std::size_t>(j, "episode_cap", 200);
    auto cell_of = [](const json& arr, const char* what) {
      if (!arr.is_array() || arr.size() != 2) fail(std::string("environment.") + what + " must be [row, col]");
      return Cell{arr[0].get<int>(), arr[1].get<int>()};
    };
    env.grid.start = j.contains("start") ? cell_of(j.at("start"), "start") : Cell{0, 0};
    env.grid.goal = j.contains("goal")
                        ? cell_of(j.at("goal"), "goal")
                        : Cell{static_cast<int>(env.grid.size) - 1, static_cast<int>(env.grid.size) - 1};
    if (j.contains("pits"))
      for (const auto& p : j.at("pits")) env.grid.pits.push_back(cell_of(p, "pits"));
  } else if (env.name == "chain") {
    env.chain.length = get_or<std::size_t>(j, "length", 8);
    env.chain.noise = get_or<double>(j, "noise", 0.0);
    env.chain.left_reward = get_or<double>(j, "left_reward", 0.1);
    env.chain.right_reward = get_or<double>(j, "right_reward", 1.0);
    env.chain.episode_cap = get_or<std::size_t>(j, "episode_cap", 200);
  } else {
    fail("environment.name must be 'gridworld' or 'chain'");
  }
  return env;
}

}  // namespace

std::unique_ptr<Environment> EnvironmentSpec::instantiate(std::uint64_t seed) const {
  if (name == "gridworld") return make_gridworld(grid, seed);
  if (name == "chain") return make_chain(chain, seed);
  throw std::invalid_argument("EnvironmentSpec: unknown environment " + name);
}

std::size_t EnvironmentSpec::state_dim() const {
  return name == "gridworld" ? grid.size * grid.size : chain.length;
}

std::size_t EnvironmentSpec::action_count() const { return name == "gridworld" ? 4 : 2; }

void ExperimentConfig::validate() const {
  if (run.seeds.empty()) fail("run.seeds must list at least one seed");
  if (run.frames > 0 && run.eval_period == 0) fail("run.eval_period must be positive");
  if (run.eval_episodes == 0) fail("run.eval_episodes must be positive");
  if (run.eval_epsilon < 0.0 || run.eval_epsilon > 1.0) fail("run.eval_epsilon outside [0, 1]");
  if (run.anneal_fraction <= 0.0 || run.anneal_fraction > 1.0)
    fail("run.anneal_fraction must lie in (0, 1]");
  if (replay.capacity == 0) fail("replay.capacity must be positive");
  if (replay.sync_period == 0) fail("replay.sync_period must be positive");
  if (replay.learn_every == 0) fail("replay.learn_every must be positive");
  if (replay.gamma < 0.0 || replay.gamma > 1.0) fail("replay.gamma outside [0, 1]");
  if (replay.capacity < svrg.anchor_batch) fail("replay.capacity smaller than svrg.B");
  // SvrgConfig::validated enforces its own constraints at parse time
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(e.what());
  }
  expect_keys(j, "", {"environment", "network", "optimizer", "svrg", "adam", "replay", "run"});

  ExperimentConfig cfg;
  if (!j.contains("environment")) fail("missing 'environment' section");
  cfg.environment = parse_environment(j.at("environment"));

  if (j.contains("network")) {
    const json& n = j.at("network");
    expect_keys(n, "network", {"hidden", "activation"});
    cfg.network.hidden = get_or<std::vector<std::size_t>>(n, "hidden", {32});
    cfg.network.activation =
        activation_from_name(get_or<std::string>(n, "activation", "relu"));
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    expect_keys(o, "optimizer", {"kind"});
    cfg.optimizer = optimizer_kind_from_name(get_or<std::string>(o, "kind", "svr-dqn"));
  }

  if (j.contains("svrg")) {
    const json& s = j.at("svrg");
    expect_keys(s, "svrg", {"B", "b", "m", "eta"});
    cfg.svrg = SvrgConfig::validated(
        get_or<std::size_t>(s, "B", cfg.svrg.anchor_batch),
        get_or<std::size_t>(s, "b", cfg.svrg.minibatch),
        get_or<std::size_t>(s, "m", cfg.svrg.inner_steps), get_or<double>(s, "eta", cfg.svrg.eta));
  }

  if (j.contains("adam")) {
    const json& a = j.at("adam");
    expect_keys(a, "adam", {"alpha", "beta1", "beta2", "epsilon"});
    cfg.adam.alpha = get_or<double>(a, "alpha", cfg.adam.alpha);
    cfg.adam.beta1 = get_or<double>(a, "beta1", cfg.adam.beta1);
    cfg.adam.beta2 = get_or<double>(a, "beta2", cfg.adam.beta2);
    cfg.adam.epsilon = get_or<double>(a, "epsilon", cfg.adam.epsilon);
  }

  if (j.contains("replay")) {
    const json& r = j.at("replay");
    expect_keys(r, "replay", {"capacity", "sync_period", "gamma", "learn_every", "persist_buffer"});
    cfg.replay.capacity = get_or<std::size_t>(r, "capacity", cfg.replay.capacity);
    cfg.replay.sync_period = get_or<std::size_t>(r, "sync_period", cfg.replay.sync_period);
    cfg.replay.gamma = get_or<double>(r, "gamma", cfg.replay.gamma);
    cfg.replay.learn_every = get_or<std::size_t>(r, "learn_every", cfg.replay.learn_every);
    cfg.replay.persist_buffer = get_or<bool>(r, "persist_buffer", cfg.replay.persist_buffer);
  }

  if (j.contains("run")) {
    const json& r = j.at("run");
    expect_keys(r, "run",
                {"frames", "seeds", "eval_period", "eval_episodes", "eval_epsilon", "eps_start",
                 "eps_end", "anneal_fraction", "out_dir", "measure_variance", "variance_trials",
                 "target_rule"});
    cfg.run.frames = get_or<std::size_t>(r, "frames", cfg.run.frames);
    cfg.run.seeds = get_or<std::vector<std::uint64_t>>(r, "seeds", cfg.run.seeds);
    cfg.run.eval_period = get_or<std::size_t>(r, "eval_period", cfg.run.eval_period);
    cfg.run.eval_episodes = get_or<std::size_t>(r, "eval_episodes", cfg.run.eval_episodes);
    cfg.run.eval_epsilon = get_or<double>(r, "eval_epsilon", cfg.run.eval_epsilon);
    cfg.run.eps_start = get_or<double>(r, "eps_start", cfg.run.eps_start);
    cfg.run.eps_end = get_or<double>(r, "eps_end", cfg.run.eps_end);
    cfg.run.anneal_fraction = get_or<double>(r, "anneal_fraction", cfg.run.anneal_fraction);
    cfg.run.out_dir = get_or<std::string>(r, "out_dir", cfg.run.out_dir);
    cfg.run.measure_variance = get_or<bool>(r, "measure_variance", cfg.run.measure_variance);
    cfg.run.variance_trials = get_or<std::size_t>(r, "variance_trials", cfg.run.variance_trials);
    const std::string rule = get_or<std::string>(r, "target_rule", "double");
    if (rule == "double")
      cfg.run.target_rule = TargetRule::DoubleQ;
    else if (rule == "dqn")
      cfg.run.target_rule = TargetRule::Dqn;
    else
      fail("run.target_rule must be 'double' or 'dqn'");
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

SweepConfig parse_sweep_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(e.what());
  }
  expect_keys(j, "", {"problem", "svrg", "sweep"});

  SweepConfig cfg;
  if (j.contains("problem")) {
    const json& p = j.at("problem");
    expect_keys(p, "problem", {"name", "samples", "dim", "data_seed", "spread", "lambda"});
    cfg.problem = get_or<std::string>(p, "name", cfg.problem);
    if (cfg.problem != "quadratic" && cfg.problem != "logistic")
      fail("problem.name must be 'quadratic' or 'logistic'");
    cfg.samples = get_or<std::size_t>(p, "samples", cfg.samples);
    cfg.dim = get_or<std::size_t>(p, "dim", cfg.dim);
    cfg.data_seed = get_or<std::uint64_t>(p, "data_seed", cfg.data_seed);
    cfg.spread = get_or<double>(p, "spread", cfg.spread);
    cfg.lambda = get_or<double>(p, "lambda", cfg.lambda);
  }
  if (j.contains("svrg")) {
    const json& s = j.at("svrg");
    expect_keys(s, "svrg", {"B", "b", "m", "eta"});
    cfg.svrg = SvrgConfig::validated(
        get_or<std::size_t>(s, "B", cfg.svrg.anchor_batch),
        get_or<std::size_t>(s, "b", cfg.svrg.minibatch),
        get_or<std::size_t>(s, "m", cfg.svrg.inner_steps), get_or<double>(s, "eta", cfg.svrg.eta));
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    expect_keys(s, "sweep", {"trials", "points", "seed", "start_distance", "out_csv"});
    cfg.trials = get_or<std::size_t>(s, "trials", cfg.trials);
    cfg.points = get_or<std::size_t>(s, "points", cfg.points);
    cfg.sweep_seed = get_or<std::uint64_t>(s, "seed", cfg.sweep_seed);
    cfg.start_distance = get_or<double>(s, "start_distance", cfg.start_distance);
    cfg.out_csv = get_or<std::string>(s, "out_csv", cfg.out_csv);
  }
  if (cfg.trials < 2) fail("sweep.trials must be >= 2");
  if (cfg.points == 0) fail("sweep.points must be positive");
  if (cfg.svrg.anchor_batch > cfg.samples) fail("svrg.B exceeds problem.samples");
  return cfg;
}

SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sweep_config(ss.str());
}

std::string optimizer_kind_name(OptimizerKind k) {
  return k == OptimizerKind::AdamBaseline ? "adam" : "svr-dqn";
}

OptimizerKind optimizer_kind_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::AdamBaseline;
  if (name == "svr-dqn") return OptimizerKind::SvrDqn;
  throw std::invalid_argument("optimizer.kind must be 'adam' or 'svr-dqn'");
}

}  // namespace svrdqn
