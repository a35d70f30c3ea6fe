#include "svrdqn/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "svrdqn/checkpoint.hpp"
#include "svrdqn/variance.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace svrdqn {

namespace fs = std::filesystem;
using steady_clock = std::chrono::steady_clock;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, ptr);
}

namespace {

constexpr const char* kCsvHeader =
    "trial_seed,frame,eval_return,loss,grad_var_empirical,grad_var_bound,wall_ms\n";

std::string csv_row(const EvalRecord& r) {
  std::string row = std::to_string(r.seed);
  row += ',';
  row += std::to_string(r.frame);
  row += ',';
  row += format_double(r.eval_return);
  row += ',';
  row += format_double(r.loss);
  row += ',';
  row += r.grad_var ? format_double(*r.grad_var) : std::string();
  row += ',';
  row += r.grad_var_bound ? format_double(*r.grad_var_bound) : std::string();
  row += ',';
  row += std::to_string(r.wall_ms);
  row += '\n';
  return row;
}

double parse_double_field(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::strtod(s.c_str(), nullptr);
}

// Greedy-with-exploration rollout average over eval_episodes fresh episodes.
double evaluate_policy(const QLearner& learner, const ExperimentConfig& cfg,
                       std::uint64_t trial_seed, std::uint64_t frame, double epsilon) {
  auto env = cfg.environment.instantiate(Rng::mix(trial_seed, rng_tag::kEvalEnv, frame));
  Rng rng(Rng::mix(trial_seed, rng_tag::kEval, frame));
  CompensatedSum total;
  for (std::size_t ep = 0; ep < cfg.run.eval_episodes; ++ep) {
    std::vector<double> obs = env->reset();
    double ret = 0.0;
    while (true) {
      const std::vector<double> q = learner.online.forward(obs);
      const std::size_t a = epsilon_greedy_action(q, epsilon, rng);
      Environment::StepResult step = env->step(a);
      ret += step.reward;
      obs = std::move(step.state);
      if (step.terminal) break;
    }
    total.add(ret);
  }
  return total.value() / static_cast<double>(cfg.run.eval_episodes);
}

// Variance snapshot of the configured optimizer's gradient estimator at the
// current parameters, over batches redrawn from the replay buffer. No bound
// column: the Bellman loss has no analytic Lipschitz constant.
std::optional<double> measure_gradient_variance(const QLearner& learner,
                                                const ReplayBuffer& buffer,
                                                const ExperimentConfig& cfg,
                                                std::uint64_t trial_seed, std::uint64_t frame) {
  if (buffer.size() < cfg.svrg.anchor_batch) return std::nullopt;
  const MlpNetwork& arch = learner.online;
  const ParamVector at = learner.online.weights();

  GradientEstimator estimator = [&learner, &buffer, &cfg, &arch, at](Rng& rng, ParamVector& out) {
    const std::vector<std::size_t> slots =
        rng.sample_without_replacement(buffer.size(), cfg.svrg.anchor_batch);
    std::vector<Transition> batch;
    batch.reserve(slots.size());
    for (std::size_t s : slots) batch.push_back(buffer.slot(s));
    const BellmanBatch fixed = bellman_loss_and_grads(learner, batch, cfg.run.target_rule);

    if (cfg.optimizer == OptimizerKind::AdamBaseline) {
      out = mean_in_order(fixed.per_sample);
      return;
    }
    const auto& targets = fixed.targets;
    auto grad_fn = [&arch, &batch, &targets](std::size_t k, const ParamVector& w,
                                             ParamVector& g) {
      const Transition& tr = batch[k];
      const std::vector<double> q = arch.forward_with(w, tr.state);
      const double residual = targets[k] - q[tr.action];
      std::vector<double> upstream(arch.output_dim(), 0.0);
      upstream[tr.action] = -2.0 * residual;
      g = arch.backward_with(w, tr.state, upstream).v;
    };
    std::vector<std::size_t> ids(batch.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    const SvrgSnapshot snap = svrg_anchor(grad_fn, at, ids);
    ParamVector w = at;
    std::vector<std::size_t> mb(cfg.svrg.minibatch);
    for (std::size_t step = 0; step < cfg.svrg.inner_steps; ++step) {
      for (auto& id : mb) id = ids[rng.next_below(ids.size())];
      w = svrg_inner_step(w, snap, mb, cfg.svrg.eta, grad_fn);
    }
    out = at;
    out.add_scaled(w, -1.0);
  };

  const VarianceReport rep =
      empirical_gradient_variance(estimator, at, cfg.run.variance_trials,
                                  Rng::mix(trial_seed, 0x56415253ull, frame), "run-snapshot");
  return rep.empirical_var;
}

struct TrialIo {
  fs::path csv_path;
  fs::path ckpt_path;
};

TrialResult run_trial(const ExperimentConfig& cfg, std::uint64_t trial_seed, const TrialIo& io,
                      const RunOptions& opts) {
  TrialResult result;
  result.seed = trial_seed;

  const auto t0 = steady_clock::now();
  auto wall_now = [&](std::uint64_t base) {
    return base + static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                                 steady_clock::now() - t0)
                                                 .count());
  };

  // trial state
  std::unique_ptr<Environment> env =
      cfg.environment.instantiate(Rng::mix(trial_seed, rng_tag::kEnv));
  QLearner learner;
  AdamState adam;
  ReplayBuffer buffer(cfg.replay.capacity);
  Rng train_rng(Rng::mix(trial_seed, rng_tag::kTrain));
  std::vector<double> obs;
  std::uint64_t frame = 0;
  std::uint64_t iterations = 0;
  double last_loss = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t wall_base = 0;
  std::optional<std::pair<ParamVector, ParamVector>> last_anchor;  // (w, mu)

  std::vector<std::size_t> layer_sizes;
  layer_sizes.push_back(cfg.environment.state_dim());
  for (std::size_t h : cfg.network.hidden) layer_sizes.push_back(h);
  layer_sizes.push_back(cfg.environment.action_count());

  std::ofstream csv;
  if (opts.resume) {
    TrialCheckpoint ck = load_checkpoint(io.ckpt_path.string());
    if (ck.trial_seed != trial_seed)
      throw std::runtime_error("resume: checkpoint seed mismatch for " + io.ckpt_path.string());
    MlpNetwork net(ck.layer_sizes, ck.hidden_acts);
    net.set_weights(ck.online_weights);
    learner = QLearner(net, ck.gamma, ck.sync_period);
    learner.target.set_weights(ck.target_weights);
    learner.steps_since_sync = ck.steps_since_sync;
    adam = AdamState::zero_like(ck.online_weights, ck.adam_cfg);
    adam.m = ck.adam_m;
    adam.v = ck.adam_v;
    adam.t = ck.adam_t;
    if (ck.has_buffer_contents) buffer.restore(ck.buffer_contents, ck.buffer_cursor);
    if (ck.has_svrg_anchor) last_anchor = {ck.svrg_anchor_w, ck.svrg_anchor_grad};
    train_rng.set_state(ck.train_rng_state);
    env->restore_words(ck.env_words);
    obs = ck.observation;
    frame = ck.frame;
    iterations = ck.iterations;
    last_loss = ck.last_loss;
    result.random_return = ck.random_return;
    wall_base = ck.wall_ms_base;

    // rewind the CSV to the checkpointed offset, then parse rows back
    fs::resize_file(io.csv_path, ck.csv_bytes);
    result.records = read_trial_csv(io.csv_path.string());
    csv.open(io.csv_path, std::ios::app);
  } else {
    Rng init_rng(Rng::mix(trial_seed, rng_tag::kWeightInit));
    MlpNetwork net = MlpNetwork::glorot_init(layer_sizes, cfg.network.activation, init_rng);
    learner = QLearner(std::move(net), cfg.replay.gamma, cfg.replay.sync_period);
    adam = AdamState::zero_like(learner.online.weights(), cfg.adam);
    obs = env->reset();
    // uniform-policy score used later for normalization
    result.random_return = evaluate_policy(learner, cfg, trial_seed, 0, 1.0);
    csv.open(io.csv_path, std::ios::trunc);
    csv << kCsvHeader;
    csv.flush();
  }
  if (!csv) throw std::runtime_error("cannot open " + io.csv_path.string());

  const std::size_t anneal_frames = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.run.anneal_fraction * static_cast<double>(cfg.run.frames)));
  const EpsilonSchedule schedule(cfg.run.eps_start, cfg.run.eps_end, anneal_frames);

  auto make_checkpoint = [&]() {
    TrialCheckpoint ck;
    ck.trial_seed = trial_seed;
    ck.layer_sizes = learner.online.layer_sizes();
    ck.hidden_acts = learner.online.hidden_activations();
    ck.online_weights = learner.online.weights();
    ck.target_weights = learner.target.weights();
    ck.gamma = learner.gamma;
    ck.sync_period = learner.sync_period;
    ck.steps_since_sync = learner.steps_since_sync;
    ck.adam_cfg = adam.cfg;
    ck.adam_t = adam.t;
    ck.adam_m = adam.m;
    ck.adam_v = adam.v;
    if (last_anchor) {
      ck.has_svrg_anchor = true;
      ck.svrg_anchor_w = last_anchor->first;
      ck.svrg_anchor_grad = last_anchor->second;
    }
    ck.frame = frame;
    ck.iterations = iterations;
    ck.last_loss = last_loss;
    ck.random_return = result.random_return;
    ck.observation = obs;
    ck.train_rng_state = train_rng.state();
    ck.env_words = env->snapshot_words();
    ck.buffer_capacity = buffer.capacity();
    ck.buffer_cursor = buffer.cursor();
    ck.has_buffer_contents = cfg.replay.persist_buffer;
    if (cfg.replay.persist_buffer) ck.buffer_contents = buffer.raw();
    ck.csv_bytes = static_cast<std::uint64_t>(csv.tellp());
    ck.wall_ms_base = wall_now(wall_base);
    save_checkpoint(io.ckpt_path.string(), ck);
  };

  while (frame < cfg.run.frames) {
    frame += 1;
    const double eps = schedule.at(frame - 1);
    const std::vector<double> q = learner.online.forward(obs);
    const std::size_t action = epsilon_greedy_action(q, eps, train_rng);
    Environment::StepResult step = env->step(action);
    buffer.push(Transition{obs, action, step.reward, step.state, step.terminal});
    obs = step.terminal ? env->reset() : std::move(step.state);

    if (frame % cfg.replay.learn_every == 0) {
      const std::optional<TrainStepResult> step_result = train_iteration(
          learner, buffer, cfg.optimizer, cfg.svrg, adam, cfg.run.target_rule, train_rng);
      if (step_result) {
        iterations += 1;
        last_loss = step_result->loss;
        if (step_result->anchor_w && step_result->anchor_grad)
          last_anchor = {*step_result->anchor_w, step_result->anchor_grad->v};
      }
    }

    if (frame % cfg.run.eval_period == 0) {
      EvalRecord rec;
      rec.seed = trial_seed;
      rec.frame = frame;
      rec.eval_return = evaluate_policy(learner, cfg, trial_seed, frame, cfg.run.eval_epsilon);
      rec.loss = last_loss;
      if (cfg.run.measure_variance)
        rec.grad_var = measure_gradient_variance(learner, buffer, cfg, trial_seed, frame);
      rec.wall_ms = wall_now(wall_base);
      csv << csv_row(rec);
      csv.flush();
      result.records.push_back(std::move(rec));
    }

    if (opts.stop_frame && frame >= *opts.stop_frame && frame < cfg.run.frames) {
      make_checkpoint();
      result.stopped_early = true;
      break;
    }
  }

  if (!result.stopped_early) make_checkpoint();
  if (!result.records.empty()) result.final_return = result.records.back().eval_return;
  return result;
}

void write_summary_json(const fs::path& path, const ExperimentConfig& cfg,
                        const ExperimentResult& result) {
  nlohmann::json j;
  j["environment"] = cfg.environment.name;
  j["optimizer"] = optimizer_kind_name(cfg.optimizer);
  j["frames"] = cfg.run.frames;
  nlohmann::json trials = nlohmann::json::array();
  std::vector<double> finals;
  CompensatedSum random_sum;
  std::size_t completed = 0;
  for (const auto& t : result.trials) {
    nlohmann::json tj;
    tj["seed"] = t.seed;
    tj["final_return"] = t.final_return;
    tj["random_return"] = t.random_return;
    tj["aborted"] = t.aborted;
    if (t.aborted) tj["abort_reason"] = t.abort_reason;
    if (t.stopped_early) tj["stopped_early"] = true;
    trials.push_back(tj);
    if (!t.aborted) {
      finals.push_back(t.final_return);
      random_sum.add(t.random_return);
      completed += 1;
    }
  }
  j["trials"] = trials;
  if (completed > 0) {
    const ScoreSummary s = summarize_scores(finals);
    j["final_mean_return"] = s.mean;
    j["final_median_return"] = s.median;
    j["random_mean_return"] = random_sum.value() / static_cast<double>(completed);
  }
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  ExperimentResult result;
  result.out_dir = opts.out_dir_override.empty() ? cfg.run.out_dir : opts.out_dir_override;
  fs::create_directories(result.out_dir);

  const std::size_t n_trials = cfg.run.seeds.size();
  result.trials.assign(n_trials, TrialResult{});

#ifdef _OPENMP
  const int prev_dynamic = omp_get_dynamic();
  if (opts.workers > 0) omp_set_dynamic(0);
#endif

  const auto count = static_cast<std::ptrdiff_t>(n_trials);
#pragma omp parallel for schedule(dynamic) num_threads( \
        opts.workers > 0 ? opts.workers : omp_get_max_threads()) if (count > 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const std::uint64_t seed = cfg.run.seeds[static_cast<std::size_t>(i)];
    TrialIo io;
    io.csv_path = fs::path(result.out_dir) / ("trial_" + std::to_string(seed) + ".csv");
    io.ckpt_path = fs::path(result.out_dir) / ("trial_" + std::to_string(seed) + ".ckpt");
    TrialResult trial;
    try {
      trial = run_trial(cfg, seed, io, opts);
    } catch (const std::exception& e) {
      trial.seed = seed;
      trial.aborted = true;
      trial.abort_reason = e.what();
    }
    if (!opts.quiet) {
#pragma omp critical(svrdqn_trial_log)
      {
        std::printf("trial seed %llu: %s\n", static_cast<unsigned long long>(seed),
                    trial.aborted ? ("aborted: " + trial.abort_reason).c_str()
                    : trial.stopped_early ? "stopped at checkpoint"
                                          : "done");
        std::fflush(stdout);
      }
    }
    result.trials[static_cast<std::size_t>(i)] = std::move(trial);
  }

#ifdef _OPENMP
  if (opts.workers > 0) omp_set_dynamic(prev_dynamic);
#endif

  write_aggregate_csv((fs::path(result.out_dir) / "aggregate.csv").string(), result.trials);
  write_summary_json(fs::path(result.out_dir) / "summary.json", cfg, result);
  return result;
}

double normalized_score(double agent, double random_score, double baseline) {
  const double denom = std::abs(baseline - random_score);
  if (denom == 0.0)
    throw std::invalid_argument("normalized_score: baseline equals random score");
  return 100.0 * (agent - random_score) / denom;
}

ScoreSummary summarize_scores(std::vector<double> scores) {
  if (scores.empty()) throw std::invalid_argument("summarize_scores: no scores");
  ScoreSummary s;
  CompensatedSum acc;
  for (double x : scores) acc.add(x);
  s.mean = acc.value() / static_cast<double>(scores.size());
  std::sort(scores.begin(), scores.end());
  const std::size_t n = scores.size();
  s.median = (n % 2 == 1) ? scores[n / 2] : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
  return s;
}

void write_aggregate_csv(const std::string& path, const std::vector<TrialResult>& trials) {
  // collect eval frames from the first completed trial; all trials share them
  std::vector<std::uint64_t> frames;
  for (const auto& t : trials) {
    if (!t.aborted && !t.records.empty()) {
      for (const auto& r : t.records) frames.push_back(r.frame);
      break;
    }
  }

  std::ofstream out(path, std::ios::trunc);
  out << "frame,mean_return,std_return,ma4_mean_return\n";

  std::vector<double> means;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    std::vector<double> vals;
    for (const auto& t : trials) {
      if (t.aborted) continue;
      if (k < t.records.size() && t.records[k].frame == frames[k])
        vals.push_back(t.records[k].eval_return);
    }
    if (vals.empty()) continue;
    CompensatedSum acc;
    for (double v : vals) acc.add(v);
    const double mean = acc.value() / static_cast<double>(vals.size());
    double sd = 0.0;
    if (vals.size() > 1) {
      CompensatedSum var;
      for (double v : vals) var.add((v - mean) * (v - mean));
      sd = std::sqrt(var.value() / static_cast<double>(vals.size() - 1));
    }
    means.push_back(mean);
    // moving average over the last up-to-4 eval points
    const std::size_t w = std::min<std::size_t>(4, means.size());
    CompensatedSum ma;
    for (std::size_t j = means.size() - w; j < means.size(); ++j) ma.add(means[j]);
    out << frames[k] << ',' << format_double(mean) << ',' << format_double(sd) << ','
        << format_double(ma.value() / static_cast<double>(w)) << '\n';
  }
}

std::vector<EvalRecord> read_trial_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_trial_csv: cannot open " + path);
  std::vector<EvalRecord> records;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;  // header
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    while (fields.size() < 7) fields.emplace_back();
    EvalRecord r;
    r.seed = std::strtoull(fields[0].c_str(), nullptr, 10);
    r.frame = std::strtoull(fields[1].c_str(), nullptr, 10);
    r.eval_return = parse_double_field(fields[2]);
    r.loss = parse_double_field(fields[3]);
    if (!fields[4].empty()) r.grad_var = parse_double_field(fields[4]);
    if (!fields[5].empty()) r.grad_var_bound = parse_double_field(fields[5]);
    r.wall_ms = std::strtoull(fields[6].c_str(), nullptr, 10);
    records.push_back(r);
  }
  return records;
}

namespace {

// strips the trailing wall_ms column from a CSV line
std::string without_wall_column(const std::string& line) {
  const std::size_t pos = line.rfind(',');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

bool csv_files_equal_ignoring_wall(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a), fb(b);
  if (!fa || !fb) return false;
  std::string la, lb;
  while (true) {
    const bool ga = static_cast<bool>(std::getline(fa, la));
    const bool gb = static_cast<bool>(std::getline(fb, lb));
    if (ga != gb) return false;
    if (!ga) return true;
    if (without_wall_column(la) != without_wall_column(lb)) return false;
  }
}

}  // namespace

bool run_csvs_equal_ignoring_wall(const std::string& dir_a, const std::string& dir_b) {
  std::vector<fs::path> names;
  for (const auto& entry : fs::directory_iterator(dir_a))
    if (entry.path().extension() == ".csv") names.push_back(entry.path().filename());
  std::sort(names.begin(), names.end());
  if (names.empty()) return false;
  for (const auto& name : names) {
    const fs::path pa = fs::path(dir_a) / name;
    const fs::path pb = fs::path(dir_b) / name;
    if (!fs::exists(pb)) return false;
    if (name == "aggregate.csv") {
      // no volatile columns: require bit equality
      std::ifstream fa(pa), fb(pb);
      std::stringstream sa, sb;
      sa << fa.rdbuf();
      sb << fb.rdbuf();
      if (sa.str() != sb.str()) return false;
    } else if (!csv_files_equal_ignoring_wall(pa, pb)) {
      return false;
    }
  }
  return true;
}

}  // namespace svrdqn
