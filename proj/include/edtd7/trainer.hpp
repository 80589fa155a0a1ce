#pragma once

#include <torch/torch.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "edtd7/actor.hpp"
#include "edtd7/critic.hpp"
#include "edtd7/datasets.hpp"
#include "edtd7/eval.hpp"
#include "edtd7/hyperparameters.hpp"
#include "edtd7/metrics.hpp"
#include "edtd7/replay_lap.hpp"
#include "edtd7/sale.hpp"

namespace edtd7 {

struct StepMetrics {
  std::int64_t step = 0;
  double critic_loss = 0.0;
  double huber_term = 0.0;
  double es_penalty_value = 0.0;
  std::optional<double> encoder_loss;
  std::optional<double> actor_loss;
  double mean_q_min = 0.0;
  bool actor_updated = false;
  bool targets_updated = false;
};

/// Inputs of the most recent step, kept for inspection and testing.
struct StepDiagnostics {
  std::vector<std::int64_t> indices;
  torch::Tensor target_noise;
  torch::Tensor targets;
  torch::Tensor td_errors;
};

/// Owns every network generation, the prioritized buffer, the value range
/// and the optimizers, and advances them one gradient iteration at a time.
///
/// Three seeded streams are derived from the run seed: parameter
/// initialization, batch sampling and target-policy noise.
class Trainer {
 public:
  Trainer(const TransitionDataset& dataset, const Hyperparameters& hp, std::uint64_t seed,
          torch::Dtype dtype = torch::kFloat32);

  /// One iteration: sample, encoder step, target, critic step, priority
  /// refresh, delayed actor step, and the hard target update every M steps.
  StepMetrics train_step();

  /// Hard copies in order: critics, actor, fixed <- target encoders,
  /// target <- current encoders; then commits the value range.
  void update_targets();

  /// Deterministic policy over frozen copies of the actor and the
  /// one-behind encoders.
  [[nodiscard]] Policy snapshot_policy() const;

  void save_checkpoint(const std::filesystem::path& dir) const;
  void load_checkpoint(const std::filesystem::path& dir);

  [[nodiscard]] std::int64_t step() const { return step_; }
  [[nodiscard]] const Hyperparameters& hp() const { return hp_; }
  [[nodiscard]] const StepDiagnostics& last_diagnostics() const { return diagnostics_; }

  EncoderVersionSet& encoders() { return encoders_; }
  EnsembleCritic& critic() { return critic_; }
  EnsembleCritic& critic_target() { return critic_target_; }
  Actor& actor() { return actor_; }
  Actor& actor_target() { return actor_target_; }
  LapBuffer& buffer() { return buffer_; }
  ValueRange& value_range() { return range_; }
  [[nodiscard]] const ValueRange& value_range() const { return range_; }

 private:
  [[nodiscard]] Embeddings embeddings(Encoder& encoder) const;

  const TransitionDataset* dataset_;
  Hyperparameters hp_;
  torch::Dtype dtype_;
  std::int64_t step_ = 0;

  EncoderVersionSet encoders_;
  EnsembleCritic critic_{nullptr};
  EnsembleCritic critic_target_{nullptr};
  Actor actor_{nullptr};
  Actor actor_target_{nullptr};
  LapBuffer buffer_;
  ValueRange range_;
  torch::Generator noise_generator_;

  std::unique_ptr<torch::optim::Adam> encoder_optim_;
  std::unique_ptr<torch::optim::Adam> critic_optim_;
  std::unique_ptr<torch::optim::Adam> actor_optim_;

  torch::Tensor states_, actions_, rewards_, next_states_, terminals_;
  StepDiagnostics diagnostics_;
};

struct TrainingOptions {
  /// Evaluation environment; without one the evaluation hook records no return.
  EnvAdapter* env = nullptr;
  int eval_episodes = 10;
  std::uint64_t eval_seed = 0;
  /// (random, expert) reference returns for normalization.
  std::optional<std::pair<double, double>> reference_scores;
  /// Emit a metrics record every log_freq steps (evaluation steps always emit).
  std::int64_t log_freq = 1000;
  /// Save a checkpoint under checkpoint_dir/{step} every checkpoint_freq
  /// steps (0 disables) and after the final step.
  std::filesystem::path checkpoint_dir;
  std::int64_t checkpoint_freq = 0;
  std::function<void(const MetricsRecord&)> on_record;
  std::function<void(const EvalReport&)> on_eval;
  std::function<void(const std::filesystem::path&)> on_checkpoint;
};

struct TrainingSummary {
  std::vector<EvalReport> evaluations;
  std::vector<MetricsRecord> records;
  std::optional<std::filesystem::path> final_checkpoint;
};

/// Runs from the trainer's current step up to hp.max_steps.
TrainingSummary run_training(Trainer& trainer, const TrainingOptions& options);

}  // namespace edtd7
