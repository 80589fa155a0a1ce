#include "edtd7/hyperparameters.hpp"

#include <cmath>

#include "edtd7/errors.hpp"

namespace edtd7 {

std::string to_string(TargetMode mode) { return mode == TargetMode::kMinQ ? "minq" : "pessq"; }

std::string to_string(BcWeighting mode) { return mode == BcWeighting::kPerSample ? "per-sample" : "batch-mean"; }

TargetMode parse_target_mode(const std::string& text) {
  if (text == "minq") return TargetMode::kMinQ;
  if (text == "pessq") return TargetMode::kPessQ;
  throw ParameterError("unknown target mode '" + text + "' (expected minq or pessq)");
}

BcWeighting parse_bc_weighting(const std::string& text) {
  if (text == "per-sample") return BcWeighting::kPerSample;
  if (text == "batch-mean") return BcWeighting::kBatchMean;
  throw ParameterError("unknown bc weighting '" + text + "' (expected per-sample or batch-mean)");
}

void Hyperparameters::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ParameterError(what);
  };
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
  require(batch_size > 0, "batch_size must be positive");
  require(target_update_freq > 0, "target_update_freq must be positive");
  require(policy_update_freq > 0, "policy_update_freq must be positive");
  require(alpha > 0.0, "alpha must be positive");
  require(min_priority > 0.0, "min_priority must be positive");
  require(ensemble_size >= 2, "ensemble_size must be at least 2");
  require(eta >= 0.0 && std::isfinite(eta), "eta must be non-negative");
  require(lambda_bc >= 0.0 && std::isfinite(lambda_bc), "lambda must be non-negative");
  require(noise_sigma >= 0.0, "noise_sigma must be non-negative");
  require(noise_clip >= 0.0, "noise_clip must be non-negative");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(eval_freq > 0, "eval_freq must be positive");
  require(max_steps > 0, "max_steps must be positive");
  require(encoder_hidden > 0 && embedding_dim > 0 && critic_hidden > 0 && actor_hidden > 0,
          "network widths must be positive");
  require(!(target_mode == TargetMode::kPessQ && eta != 0.0), "pessq target mode requires eta = 0");
}

}  // namespace edtd7
