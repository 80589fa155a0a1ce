#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edtd7/datasets.hpp"
#include "edtd7/hyperparameters.hpp"

namespace CLI {
class App;
}

namespace edtd7 {

struct ExperimentConfig {
  std::optional<std::filesystem::path> dataset_path;
  std::optional<ChainMdpSpec> chain;
  std::string env_name;
  std::vector<std::uint64_t> seeds{0};
  Hyperparameters hp;
  std::filesystem::path output_dir = "runs/edtd7";

  std::vector<std::string> env_command;
  std::filesystem::path reference_scores;
  int eval_episodes = 10;
  std::int64_t log_freq = 1000;
  std::int64_t checkpoint_freq = 0;
  int keep_checkpoints = 1;
  bool resume = false;
  bool clamp_actions = false;

  /// Exactly one data source; hyperparameter invariants.
  void validate() const;
};

/// Ensemble size, eta and lambda for a named D4RL task.
struct TaskDefaults {
  std::int64_t ensemble_size = 10;
  double eta = 1.0;
  double lambda_bc = 0.01;
};
TaskDefaults task_defaults(const std::string& env_name);

/// Binds the train flags to an App. After parsing, finalize() applies task
/// defaults and mode rules and returns the validated configuration.
class TrainCommand {
 public:
  explicit TrainCommand(CLI::App& app);
  TrainCommand(const TrainCommand&) = delete;
  TrainCommand& operator=(const TrainCommand&) = delete;

  [[nodiscard]] ExperimentConfig finalize() const;

 private:
  CLI::App& app_;
  ExperimentConfig config_;
  std::string dataset_;
  int chain_states_ = 0;
  int chain_transitions_ = 5000;
  double chain_epsilon_ = 0.2;
  std::uint64_t chain_seed_ = 0;
  double goal_reward_ = 1.0;
  std::string target_mode_ = "minq";
  std::string bc_weight_ = "per-sample";
  std::vector<std::string> ablate_;
  std::int64_t hidden_dim_ = 256;
  std::string env_cmd_;
  std::string ref_scores_;
};

/// Parses a full train command line (without the program/subcommand name).
ExperimentConfig parse_train_args(const std::vector<std::string>& args);

/// Flat key = value rendering of every effective setting; feeding it back
/// through --config reproduces the run.
std::string config_snapshot(const ExperimentConfig& config);

struct SeedSummary {
  std::uint64_t seed = 0;
  std::size_t evaluations = 0;
  double final_mean = 0.0;
  double final_std = 0.0;
};

struct ExperimentSummary {
  std::vector<SeedSummary> seeds;
  double mean = 0.0;
  double std = 0.0;
  std::string metric;  // "normalized_score" or "eval_mean_return"
};

/// Mean and population standard deviation over the final `window` entries.
std::pair<double, double> final_window_stats(const std::vector<double>& scores, std::size_t window = 10);

/// Trains every seed, writing {out}/config.ini, {out}/seed_{k}/metrics.jsonl,
/// timing.jsonl, checkpoints/{step}/ and {out}/summary.json. Returns 0 on success.
int run_experiment(const ExperimentConfig& config);

struct CurvePoint {
  std::int64_t step = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t seeds = 0;
};

struct Curve {
  std::string label;
  std::vector<CurvePoint> points;
};

/// Mean across seeds at each evaluation step of one configuration directory.
Curve load_curve(const std::filesystem::path& run_dir);

/// Writes a PNG with one mean line and a shaded std band per configuration,
/// plus a CSV (label,step,mean,std,seeds) next to it. Returns the curves drawn.
std::vector<Curve> plot_learning_curves(const std::vector<std::filesystem::path>& run_dirs,
                                        const std::filesystem::path& output);

}  // namespace edtd7
