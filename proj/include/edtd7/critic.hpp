#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <limits>

#include "edtd7/hyperparameters.hpp"
#include "edtd7/sale.hpp"

namespace edtd7 {

class ActorImpl;

/// Huber variant thresholded at min_priority, piecewise exactly as
///   0.5 x^2         if |x| <  min_priority
///   min_priority|x| if |x| >= min_priority
double huber(double x, double min_priority);
torch::Tensor huber(const torch::Tensor& x, double min_priority);

/// N independent affine maps stored as one [N, in, out] weight tensor.
class EnsembleLinearImpl : public torch::nn::Module {
 public:
  EnsembleLinearImpl(std::int64_t members, std::int64_t in_features, std::int64_t out_features);

  /// x: [N, B, in] -> [N, B, out]
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight;
  torch::Tensor bias;
};
TORCH_MODULE(EnsembleLinear);

struct CriticDims {
  std::int64_t state_dim = 0;
  std::int64_t action_dim = 0;
  std::int64_t embedding_dim = 256;
  std::int64_t hidden_dim = 256;
  std::int64_t members = 10;
};

/// Ensemble of value networks over (s, a, z^s, z^sa):
///   h = AvgL1Norm(L1[s, a]);  h = elu(L2[h, z^sa, z^s]);  h = elu(L3 h);  Q = L4 h
class EnsembleCriticImpl : public torch::nn::Module {
 public:
  explicit EnsembleCriticImpl(const CriticDims& dims);

  /// Inputs are either [B, d] (shared by all members) or [N, B, d] (per
  /// member). Returns Q values of shape [N, B].
  torch::Tensor forward(const torch::Tensor& state, const torch::Tensor& action, const torch::Tensor& zs,
                        const torch::Tensor& zsa);

  [[nodiscard]] std::int64_t members() const { return dims_.members; }
  [[nodiscard]] const CriticDims& dims() const { return dims_; }

  /// Copies member 0's parameters into every other member.
  void tie_members();

  EnsembleLinear l1{nullptr}, l2{nullptr}, l3{nullptr}, l4{nullptr};

 private:
  CriticDims dims_;
};
TORCH_MODULE(EnsembleCritic);

/// Per-member gradients dQ_i/da of shape [N, B, d_a]. The embedding z^sa is
/// recomputed from a (through the frozen encoder), so the gradient includes
/// that path. With create_graph the result is differentiable with respect to
/// the critic parameters.
struct ActionGradients {
  torch::Tensor q;          // [N, B]
  torch::Tensor gradients;  // [N, B, d_a]
};
ActionGradients action_gradients(EnsembleCritic& critic, const Embeddings& embeddings, const torch::Tensor& state,
                                 const torch::Tensor& action, const torch::Tensor& zs, bool create_graph);

/// Sum over ordered pairs i != j of cos(g_i, g_j), averaged over the batch.
/// The cosine with a zero vector is 0.
torch::Tensor es_penalty_from_gradients(const torch::Tensor& gradients);

torch::Tensor es_penalty(EnsembleCritic& critic, const Embeddings& embeddings, const torch::Tensor& state,
                         const torch::Tensor& action, const torch::Tensor& zs);

/// Committed (min, max) window for target clipping plus the running bounds
/// accumulated since construction.
struct ValueRange {
  double committed_min = -std::numeric_limits<double>::infinity();
  double committed_max = std::numeric_limits<double>::infinity();
  double running_min = std::numeric_limits<double>::infinity();
  double running_max = -std::numeric_limits<double>::infinity();

  void observe(const torch::Tensor& values);
  /// Running bounds become the committed window; running keeps accumulating.
  void commit();
  [[nodiscard]] torch::Tensor clamp(const torch::Tensor& values) const;
  [[nodiscard]] bool committed() const { return std::isfinite(committed_min) && std::isfinite(committed_max); }

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);
};

/// Aggregates ensemble values [N, B] into one pessimistic value per sample.
torch::Tensor min_over_ensemble(const torch::Tensor& values);
/// mean - unbiased std over the ensemble dimension (the pessq target). Requires N >= 2.
torch::Tensor pessimistic_value(const torch::Tensor& values);
/// Dispatches on the target mode.
torch::Tensor aggregate_ensemble(const torch::Tensor& values, TargetMode mode);

struct TargetBatch {
  torch::Tensor reward;      // [B]
  torch::Tensor next_state;  // [B, d_s]
  torch::Tensor terminal;    // [B], 1 for terminal
};

struct TargetResult {
  torch::Tensor y;      // [B]
  torch::Tensor q_hat;  // [B], aggregated target value before clipping
  torch::Tensor noise;  // [B, d_a], clipped smoothing noise
};

/// Clipped bootstrap target
///   a' = clamp(pi_target(s', z^s') + clamp(xi, -c, c), -1, 1)
///   y  = r + gamma (1 - terminal) clamp(agg_j Q_target_j(s', a', z^s', z^s'a'), committed range)
/// with embeddings from the two-behind encoders. Updates range's running bounds.
/// When noise is defined it is used in place of a fresh draw.
TargetResult compute_td_target(EnsembleCritic& target_critic, ActorImpl& target_actor, const Embeddings& fixed,
                               ValueRange& range, const TargetBatch& batch, const Hyperparameters& hp,
                               torch::Generator* generator, const torch::Tensor& noise = {});

struct CriticBatch {
  torch::Tensor state;   // [B, d_s]
  torch::Tensor action;  // [B, d_a]
};

struct CriticLossResult {
  torch::Tensor loss;       // scalar, differentiable
  torch::Tensor td_errors;  // [B, N], detached Q_i - y
  double huber_term = 0.0;
  double es_value = 0.0;    // batch-mean penalty, 0 when the term is disabled
  double mean_q_min = 0.0;  // batch mean of min_i Q_i at the dataset actions
};

/// mean_b [ sum_i huber(Q_i - y) ] + eta / (N - 1) * es_penalty, with
/// z^s, z^sa from the one-behind encoders.
CriticLossResult critic_loss(EnsembleCritic& critic, const Embeddings& embeddings, const CriticBatch& batch,
                             const torch::Tensor& y, double eta, double min_priority);

}  // namespace edtd7
