#pragma once

#include <optional>
#include <string>
#include <vector>

#include "svrdqn/config.hpp"

namespace svrdqn {

struct EvalRecord {
  std::uint64_t seed = 0;
  std::uint64_t frame = 0;
  double eval_return = 0.0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> grad_var;        // empirical estimator variance, when measured
  std::optional<double> grad_var_bound;  // only for losses with a known Lipschitz constant
  std::uint64_t wall_ms = 0;
};

struct TrialResult {
  std::uint64_t seed = 0;
  std::vector<EvalRecord> records;
  double random_return = 0.0;  // uniform-policy evaluation, normalization baseline
  double final_return = 0.0;
  bool aborted = false;
  std::string abort_reason;
  bool stopped_early = false;  // halted at --stop-frame with a checkpoint
};

struct ExperimentResult {
  std::string out_dir;
  std::vector<TrialResult> trials;
  bool any_aborted() const {
    for (const auto& t : trials)
      if (t.aborted) return true;
    return false;
  }
};

struct RunOptions {
  std::string out_dir_override;             // empty: use config run.out_dir
  int workers = 0;                          // 0: OpenMP default
  std::optional<std::uint64_t> stop_frame;  // halt after this frame, checkpointing
  bool resume = false;                      // continue from checkpoints in the out dir
  bool quiet = false;
};

// Runs every seed of the config (in parallel up to `workers`), writing
// trial_<seed>.csv incrementally plus trial_<seed>.ckpt, aggregate.csv and
// summary.json into the output directory. All outputs are bit-reproducible
// functions of (config, seed) except the wall_ms CSV column.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

// (agent - random) / |baseline - random| in percent, sign preserving.
double normalized_score(double agent, double random_score, double baseline);

struct ScoreSummary {
  double mean = 0.0;
  double median = 0.0;
};
// Mean and median over per-environment scores; order-independent.
ScoreSummary summarize_scores(std::vector<double> scores);

// Aggregate curve across trials: per eval frame the cross-seed mean, sample
// standard deviation, and a window-4 moving average of the mean.
void write_aggregate_csv(const std::string& path, const std::vector<TrialResult>& trials);

std::vector<EvalRecord> read_trial_csv(const std::string& path);

// Compares two run directories treating every column except wall_ms as
// significant (wall-clock is the one non-reproducible output).
bool run_csvs_equal_ignoring_wall(const std::string& dir_a, const std::string& dir_b);

// Shortest round-trip decimal form; the fixed CSV number format.
std::string format_double(double x);

// Published full-scale reference scores for this optimizer family (mean and
// median normalized score over the original 20-game benchmark). Desk-scale
// runs are not expected to reproduce them; they are kept for context when
// reading summarize output.
inline constexpr double kReferenceSvrDqnMeanScore = 139.75;
inline constexpr double kReferenceSvrDqnMedianScore = 118.02;
inline constexpr double kReferenceBaselineMeanScore = 92.48;
inline constexpr double kReferenceBaselineMedianScore = 63.13;

}  // namespace svrdqn
