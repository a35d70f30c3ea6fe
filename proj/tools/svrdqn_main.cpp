#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "svrdqn/experiment.hpp"
#include "svrdqn/variance.hpp"

namespace fs = std::filesystem;
using namespace svrdqn;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_override, int workers,
            std::uint64_t stop_frame, const std::string& resume_dir) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  RunOptions opts;
  opts.workers = workers;
  if (stop_frame > 0) opts.stop_frame = stop_frame;
  if (!resume_dir.empty()) {
    opts.resume = true;
    opts.out_dir_override = resume_dir;
  } else if (!out_override.empty()) {
    opts.out_dir_override = out_override;
  }

  const ExperimentResult result = run_experiment(cfg, opts);
  std::printf("wrote %s (%zu trials)\n", result.out_dir.c_str(), result.trials.size());
  return result.any_aborted() ? 1 : 0;
}

FiniteSumProblem build_sweep_problem(const SweepConfig& cfg) {
  Rng rng(cfg.data_seed);
  if (cfg.problem == "quadratic") {
    std::vector<std::vector<double>> centers(cfg.samples, std::vector<double>(cfg.dim));
    for (auto& c : centers)
      for (auto& x : c) x = rng.uniform(-cfg.spread, cfg.spread);
    return quadratic_finite_sum(std::move(centers));
  }
  std::vector<std::vector<double>> xs(cfg.samples, std::vector<double>(cfg.dim));
  std::vector<int> ys(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    for (auto& x : xs[i]) x = rng.uniform(-cfg.spread, cfg.spread);
    ys[i] = rng.uniform01() < 0.5 ? -1 : 1;
  }
  return logistic_finite_sum(std::move(xs), std::move(ys), cfg.lambda);
}

// Points spaced along a plain full-batch descent path from a seeded offset.
std::vector<ParamVector> descent_points(const FiniteSumProblem& problem, const SweepConfig& cfg) {
  Rng rng(Rng::mix(cfg.sweep_seed, 0xDE5CE57ull));
  ParamVector w = *problem.optimum;
  {
    ParamVector dir = problem.zero_like();
    double norm2 = 0.0;
    for (std::size_t j = 0; j < dir.size(); ++j) {
      dir[j] = rng.uniform(-1.0, 1.0);
      norm2 += dir[j] * dir[j];
    }
    const double scale = cfg.start_distance / std::sqrt(norm2);
    w.add_scaled(dir, scale);
  }
  const double step = 0.25 / *problem.grad_lipschitz;
  std::vector<ParamVector> points;
  points.push_back(w);
  while (points.size() < cfg.points) {
    for (int it = 0; it < 2; ++it) {
      ParamVector g = problem.gradient(w);
      w.add_scaled(g, -step);
    }
    points.push_back(w);
  }
  return points;
}

int cmd_variance_sweep(const std::string& config_path) {
  const SweepConfig cfg = load_sweep_config(config_path);
  const FiniteSumProblem problem = build_sweep_problem(cfg);
  if (!problem.optimum) {
    std::fprintf(stderr, "variance-sweep: problem has no reference optimum\n");
    return 2;
  }
  const std::vector<ParamVector> points = descent_points(problem, cfg);
  const std::vector<VarianceReport> reports =
      bound_verification_sweep(problem, cfg.svrg, cfg.trials, points, cfg.sweep_seed);

  std::ofstream csv(cfg.out_csv, std::ios::trunc);
  csv << "iteration,estimator,empirical_var,bound,subopt,trials,pass\n";
  bool all_pass = true;
  for (const auto& r : reports) {
    csv << r.iteration << ',' << r.estimator << ',' << format_double(r.empirical_var) << ','
        << format_double(r.bound) << ',' << format_double(r.suboptimality) << ',' << r.trials
        << ',' << (r.pass ? 1 : 0) << '\n';
    std::printf("point %zu %-22s empirical=%.6g bound=%.6g subopt=%.6g %s\n", r.iteration,
                r.estimator.c_str(), r.empirical_var, r.bound, r.suboptimality,
                r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  std::printf("wrote %s\n", cfg.out_csv.c_str());
  return all_pass ? 0 : 1;
}

int cmd_summarize(const std::string& inputs_dir) {
  // environment -> optimizer -> (final mean return, random mean return)
  std::map<std::string, std::map<std::string, std::pair<double, double>>> by_env;
  for (const auto& entry : fs::recursive_directory_iterator(inputs_dir)) {
    if (entry.path().filename() != "summary.json") continue;
    std::ifstream in(entry.path());
    nlohmann::json j;
    in >> j;
    if (!j.contains("final_mean_return")) continue;
    by_env[j["environment"]][j["optimizer"]] = {j["final_mean_return"].get<double>(),
                                                j["random_mean_return"].get<double>()};
  }
  if (by_env.empty()) {
    std::fprintf(stderr, "summarize: no run summaries under %s\n", inputs_dir.c_str());
    return 2;
  }

  std::map<std::string, std::vector<double>> scores_by_optimizer;
  for (const auto& [env, runs] : by_env) {
    auto baseline = runs.find("adam");
    if (baseline == runs.end()) {
      std::fprintf(stderr, "summarize: environment %s lacks the adam baseline run\n", env.c_str());
      continue;
    }
    const double base_final = baseline->second.first;
    const double random_score = baseline->second.second;
    for (const auto& [opt, vals] : runs) {
      const double score = normalized_score(vals.first, random_score, base_final);
      scores_by_optimizer[opt].push_back(score);
      std::printf("%-12s %-10s final=%.4f random=%.4f normalized=%.2f%%\n", env.c_str(),
                  opt.c_str(), vals.first, random_score, score);
    }
  }
  for (const auto& [opt, scores] : scores_by_optimizer) {
    const ScoreSummary s = summarize_scores(scores);
    std::printf("%-10s mean=%.2f%% median=%.2f%% over %zu environment(s)\n", opt.c_str(), s.mean,
                s.median, scores.size());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variance-reduced deep Q-learning experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume_dir, inputs_dir;
  int workers = 0;
  std::uint64_t stop_frame = 0;

  CLI::App* run = app.add_subcommand("run", "train on the configured environment");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory (default: run.out_dir)");
  run->add_option("--workers", workers, "parallel trials (default: OpenMP)");
  run->add_option("--stop-frame", stop_frame, "halt after this frame, leaving checkpoints");
  run->add_option("--resume", resume_dir, "resume from checkpoints in this run directory");

  CLI::App* sweep = app.add_subcommand("variance-sweep", "estimator variance vs bounds");
  sweep->add_option("--config", config_path, "sweep config (JSON)")->required();

  CLI::App* summ = app.add_subcommand("summarize", "normalized scores across environments");
  summ->add_option("--inputs", inputs_dir, "directory containing run outputs")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, workers, stop_frame, resume_dir);
    if (sweep->parsed()) return cmd_variance_sweep(config_path);
    if (summ->parsed()) return cmd_summarize(inputs_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
