#pragma once

#include <cstdint>
#include <string>

namespace edtd7 {

enum class TargetMode { kMinQ, kPessQ };
enum class BcWeighting { kPerSample, kBatchMean };

std::string to_string(TargetMode mode);
std::string to_string(BcWeighting mode);
TargetMode parse_target_mode(const std::string& text);
BcWeighting parse_bc_weighting(const std::string& text);

struct Ablations {
  bool sale = false;      // remove state-action embeddings
  bool lap = false;       // uniform sampling
  bool ensemble = false;  // two critics, no gradient-diversity term
};

/// Scalar training knobs. Defaults are the generic settings plus the
/// per-environment N / eta / lambda used for most MuJoCo datasets.
struct Hyperparameters {
  double gamma = 0.99;
  std::int64_t batch_size = 256;
  std::int64_t target_update_freq = 250;
  std::int64_t policy_update_freq = 2;
  double alpha = 0.4;
  double min_priority = 1.0;
  std::int64_t ensemble_size = 10;
  double eta = 1.0;
  double lambda_bc = 0.01;
  double noise_sigma = 0.2;
  double noise_clip = 0.5;
  double learning_rate = 3e-4;
  std::int64_t eval_freq = 5000;
  std::int64_t max_steps = 1'000'000;

  // Network widths.
  std::int64_t encoder_hidden = 256;
  std::int64_t embedding_dim = 256;
  std::int64_t critic_hidden = 256;
  std::int64_t actor_hidden = 256;

  TargetMode target_mode = TargetMode::kMinQ;
  BcWeighting bc_weighting = BcWeighting::kPerSample;
  Ablations ablations;

  /// Throws ParameterError on any violated invariant.
  void validate() const;

  /// Ensemble size and eta after applying the ablation / target-mode rules.
  [[nodiscard]] std::int64_t effective_ensemble_size() const { return ablations.ensemble ? 2 : ensemble_size; }
  [[nodiscard]] double effective_eta() const {
    return (ablations.ensemble || target_mode == TargetMode::kPessQ) ? 0.0 : eta;
  }
};

}  // namespace edtd7
