#pragma once

#include <torch/torch.h>

#include "edtd7/critic.hpp"
#include "edtd7/hyperparameters.hpp"
#include "edtd7/sale.hpp"

namespace edtd7 {

struct ActorDims {
  std::int64_t state_dim = 0;
  std::int64_t action_dim = 0;
  std::int64_t embedding_dim = 256;
  std::int64_t hidden_dim = 256;
};

/// Deterministic policy pi(s, z^s):
///   h = AvgL1Norm(L0 s);  h = relu(L1[h, z^s]);  h = relu(L2 h);  a = tanh(L3 h)
class ActorImpl : public torch::nn::Module {
 public:
  explicit ActorImpl(const ActorDims& dims);

  torch::Tensor forward(const torch::Tensor& state, const torch::Tensor& zs);

  [[nodiscard]] const ActorDims& dims() const { return dims_; }

  torch::nn::Linear l0{nullptr}, l1{nullptr}, l2{nullptr}, l3{nullptr};

 private:
  ActorDims dims_;
};
TORCH_MODULE(Actor);

struct ActorLossResult {
  torch::Tensor loss;  // scalar, differentiable w.r.t. the actor
  double mean_q_min = 0.0;
  double bc_term = 0.0;
};

/// mean_b[ -q_min ] + lambda * mean_b[ w * mean_k (pi(s)_k - a_k)^2 ]
/// where q_min = min_i Q_i(s, pi(s), z^s, g(z^s, pi(s))) and w = |q_min| with
/// no gradient (per sample, or its batch mean). Embeddings come from the
/// one-behind encoders. Critic parameters receive gradients as a side
/// effect; only the actor's optimizer should consume them.
ActorLossResult actor_loss(Actor& actor, EnsembleCritic& critic, const Embeddings& embeddings,
                           const torch::Tensor& state, const torch::Tensor& action, double lambda_bc,
                           BcWeighting weighting = BcWeighting::kPerSample);

}  // namespace edtd7
