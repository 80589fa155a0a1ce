#include "edtd7/actor.hpp"

#include "edtd7/errors.hpp"

namespace edtd7 {

ActorImpl::ActorImpl(const ActorDims& dims) : dims_(dims) {
  if (dims.state_dim <= 0 || dims.action_dim <= 0 || dims.embedding_dim <= 0 || dims.hidden_dim <= 0) {
    throw ParameterError("actor dimensions must be positive");
  }
  l0 = register_module("l0", torch::nn::Linear(dims.state_dim, dims.hidden_dim));
  l1 = register_module("l1", torch::nn::Linear(dims.hidden_dim + dims.embedding_dim, dims.hidden_dim));
  l2 = register_module("l2", torch::nn::Linear(dims.hidden_dim, dims.hidden_dim));
  l3 = register_module("l3", torch::nn::Linear(dims.hidden_dim, dims.action_dim));
}

torch::Tensor ActorImpl::forward(const torch::Tensor& state, const torch::Tensor& zs) {
  if (state.size(-1) != dims_.state_dim) throw ParameterError("actor: state dimension mismatch");
  if (zs.size(-1) != dims_.embedding_dim) throw ParameterError("actor: embedding dimension mismatch");
  auto h = avg_l1_norm(l0(state));
  h = torch::relu(l1(torch::cat({h, zs}, -1)));
  h = torch::relu(l2(h));
  return torch::tanh(l3(h));
}

ActorLossResult actor_loss(Actor& actor, EnsembleCritic& critic, const Embeddings& embeddings,
                           const torch::Tensor& state, const torch::Tensor& action, double lambda_bc,
                           BcWeighting weighting) {
  auto zs = embeddings.state(state).detach();
  auto pi = actor->forward(state, zs);
  auto zsa = embeddings.state_action(zs, pi);
  auto q_min = min_over_ensemble(critic->forward(state, pi, zs, zsa));

  auto weight = q_min.abs().detach();
  if (weighting == BcWeighting::kBatchMean) weight = weight.mean().expand_as(q_min);
  auto bc = (weight * (pi - action).pow(2).mean(-1)).mean();
  auto loss = -q_min.mean() + lambda_bc * bc;
  return {loss, q_min.mean().item<double>(), bc.item<double>()};
}

}  // namespace edtd7
