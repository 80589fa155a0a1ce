#include "edtd7/critic.hpp"

#include <cmath>
#include <fstream>

#include "edtd7/actor.hpp"
#include "edtd7/errors.hpp"

namespace edtd7 {

double huber(double x, double min_priority) {
  const double ax = std::abs(x);
  return ax < min_priority ? 0.5 * x * x : min_priority * ax;
}

torch::Tensor huber(const torch::Tensor& x, double min_priority) {
  auto ax = x.abs();
  return torch::where(ax < min_priority, 0.5 * x.pow(2), min_priority * ax);
}

EnsembleLinearImpl::EnsembleLinearImpl(std::int64_t members, std::int64_t in_features, std::int64_t out_features) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  weight = register_parameter("weight", torch::empty({members, in_features, out_features}).uniform_(-bound, bound));
  bias = register_parameter("bias", torch::empty({members, 1, out_features}).uniform_(-bound, bound));
}

torch::Tensor EnsembleLinearImpl::forward(const torch::Tensor& x) { return torch::baddbmm(bias, x, weight); }

EnsembleCriticImpl::EnsembleCriticImpl(const CriticDims& dims) : dims_(dims) {
  if (dims.members < 1 || dims.state_dim <= 0 || dims.action_dim <= 0 || dims.hidden_dim <= 0 ||
      dims.embedding_dim <= 0) {
    throw ParameterError("critic dimensions must be positive");
  }
  const auto n = dims.members;
  const auto h = dims.hidden_dim;
  l1 = register_module("l1", EnsembleLinear(n, dims.state_dim + dims.action_dim, h));
  l2 = register_module("l2", EnsembleLinear(n, h + 2 * dims.embedding_dim, h));
  l3 = register_module("l3", EnsembleLinear(n, h, h));
  l4 = register_module("l4", EnsembleLinear(n, h, 1));
}

namespace {

torch::Tensor per_member(const torch::Tensor& x, std::int64_t members, std::int64_t batch) {
  if (x.dim() == 2) return x.unsqueeze(0).expand({members, batch, x.size(1)});
  return x.expand({members, batch, x.size(2)});
}

}  // namespace

torch::Tensor EnsembleCriticImpl::forward(const torch::Tensor& state, const torch::Tensor& action,
                                          const torch::Tensor& zs, const torch::Tensor& zsa) {
  if (state.size(-1) != dims_.state_dim || action.size(-1) != dims_.action_dim ||
      zs.size(-1) != dims_.embedding_dim || zsa.size(-1) != dims_.embedding_dim) {
    throw ParameterError("critic input dimension mismatch");
  }
  const auto n = dims_.members;
  const auto b = state.size(-2);
  auto sa = torch::cat({per_member(state, n, b), per_member(action, n, b)}, -1);
  auto h = avg_l1_norm(l1(sa));
  h = torch::cat({h, per_member(zsa, n, b), per_member(zs, n, b)}, -1);
  h = torch::elu(l2(h));
  h = torch::elu(l3(h));
  return l4(h).squeeze(-1);
}

void EnsembleCriticImpl::tie_members() {
  torch::NoGradGuard no_grad;
  for (auto& p : parameters(true)) p.copy_(p.narrow(0, 0, 1).expand_as(p).clone());
}

ActionGradients action_gradients(EnsembleCritic& critic, const Embeddings& embeddings, const torch::Tensor& state,
                                 const torch::Tensor& action, const torch::Tensor& zs, bool create_graph) {
  const auto n = critic->members();
  auto a = action.detach().unsqueeze(0).expand({n, action.size(0), action.size(1)}).clone().requires_grad_(true);
  auto zsa = embeddings.state_action(zs.detach(), a);
  auto q = critic->forward(state, a, zs.detach(), zsa);
  auto grads = torch::autograd::grad({q.sum()}, {a}, /*grad_outputs=*/{}, /*retain_graph=*/true, create_graph);
  return {q, grads[0]};
}

torch::Tensor es_penalty_from_gradients(const torch::Tensor& gradients) {
  // Clamping the squared norm keeps the zero-gradient case finite in both
  // passes: a zero row normalizes to a zero vector.
  constexpr double kTiny = 1e-30;
  auto norm = gradients.pow(2).sum(-1, /*keepdim=*/true).clamp_min(kTiny).sqrt();
  auto unit = gradients / norm;                        // [N, B, d_a]
  auto total = unit.sum(0).pow(2).sum(-1);             // |sum_i u_i|^2, [B]
  auto self = unit.pow(2).sum(-1).sum(0);              // sum_i |u_i|^2, [B]
  return (total - self).mean();
}

torch::Tensor es_penalty(EnsembleCritic& critic, const Embeddings& embeddings, const torch::Tensor& state,
                         const torch::Tensor& action, const torch::Tensor& zs) {
  return es_penalty_from_gradients(action_gradients(critic, embeddings, state, action, zs, true).gradients);
}

void ValueRange::observe(const torch::Tensor& values) {
  running_min = std::min(running_min, values.min().item<double>());
  running_max = std::max(running_max, values.max().item<double>());
}

void ValueRange::commit() {
  if (running_min > running_max) return;  // nothing observed yet
  committed_min = running_min;
  committed_max = running_max;
}

torch::Tensor ValueRange::clamp(const torch::Tensor& values) const {
  if (!committed()) return values;
  return values.clamp(committed_min, committed_max);
}

void ValueRange::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  const double fields[4] = {committed_min, committed_max, running_min, running_max};
  out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
  if (!out) throw std::runtime_error("cannot write value range: " + path.string());
}

void ValueRange::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  double fields[4];
  in.read(reinterpret_cast<char*>(fields), sizeof(fields));
  if (!in) throw std::runtime_error("cannot read value range: " + path.string());
  committed_min = fields[0];
  committed_max = fields[1];
  running_min = fields[2];
  running_max = fields[3];
}

torch::Tensor min_over_ensemble(const torch::Tensor& values) { return std::get<0>(values.min(0)); }

torch::Tensor pessimistic_value(const torch::Tensor& values) {
  if (values.size(0) < 2) throw ParameterError("pessimistic value needs at least two ensemble members");
  return values.mean(0) - values.std(0, /*unbiased=*/true);
}

torch::Tensor aggregate_ensemble(const torch::Tensor& values, TargetMode mode) {
  return mode == TargetMode::kMinQ ? min_over_ensemble(values) : pessimistic_value(values);
}

TargetResult compute_td_target(EnsembleCritic& target_critic, ActorImpl& target_actor, const Embeddings& fixed,
                               ValueRange& range, const TargetBatch& batch, const Hyperparameters& hp,
                               torch::Generator* generator, const torch::Tensor& noise) {
  torch::NoGradGuard no_grad;
  auto zs_next = fixed.state(batch.next_state);
  auto policy_action = target_actor.forward(batch.next_state, zs_next);
  torch::Tensor xi = noise;
  if (!xi.defined()) {
    xi = generator != nullptr
             ? torch::randn(policy_action.sizes(), *generator, policy_action.options())
             : torch::randn(policy_action.sizes(), policy_action.options());
    xi = (xi * hp.noise_sigma).clamp(-hp.noise_clip, hp.noise_clip);
  }
  auto next_action = (policy_action + xi).clamp(-1.0, 1.0);
  auto zsa_next = fixed.state_action(zs_next, next_action);
  auto values = target_critic->forward(batch.next_state, next_action, zs_next, zsa_next);
  auto q_hat = aggregate_ensemble(values, hp.target_mode);
  auto q_clipped = range.clamp(q_hat);
  range.observe(q_hat);
  auto y = batch.reward + hp.gamma * (1.0 - batch.terminal) * q_clipped;
  return {y, q_hat, xi};
}

CriticLossResult critic_loss(EnsembleCritic& critic, const Embeddings& embeddings, const CriticBatch& batch,
                             const torch::Tensor& y, double eta, double min_priority) {
  const auto n = critic->members();
  auto zs = embeddings.state(batch.state).detach();
  torch::Tensor q;
  torch::Tensor es;
  if (eta > 0.0) {
    auto ag = action_gradients(critic, embeddings, batch.state, batch.action, zs, /*create_graph=*/true);
    q = ag.q;
    es = es_penalty_from_gradients(ag.gradients);
  } else {
    q = critic->forward(batch.state, batch.action, zs, embeddings.state_action(zs, batch.action).detach());
  }
  auto td = q - y.detach().unsqueeze(0);
  auto huber_term = huber(td, min_priority).sum(0).mean();

  CriticLossResult result;
  result.loss = huber_term;
  if (es.defined()) {
    result.loss = result.loss + (eta / static_cast<double>(n - 1)) * es;
    result.es_value = es.item<double>();
  }
  result.huber_term = huber_term.item<double>();
  result.mean_q_min = min_over_ensemble(q.detach()).mean().item<double>();
  result.td_errors = td.detach().transpose(0, 1).contiguous();
  return result;
}

}  // namespace edtd7
