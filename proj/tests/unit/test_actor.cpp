#include <gtest/gtest.h>
#include <torch/torch.h>

#include "edtd7/actor.hpp"
#include "edtd7/critic.hpp"
#include "edtd7/errors.hpp"
#include "edtd7/sale.hpp"
#include "finite_difference.hpp"

using namespace edtd7;
using edtd7::testing::finite_difference;
using edtd7::testing::relative_error;

namespace {

constexpr auto kF64 = torch::kFloat64;

struct Setup {
  Encoder encoder{nullptr};
  EnsembleCritic critic{nullptr};
  Actor actor{nullptr};
  torch::Tensor state, action;
};

Setup make_setup(std::uint64_t seed, std::int64_t batch = 6, std::int64_t da = 2) {
  torch::manual_seed(seed);
  Setup s;
  s.encoder = Encoder(EncoderDims{3, da, 4, 3});
  s.critic = EnsembleCritic(CriticDims{3, da, 3, 5, 3});
  s.actor = Actor(ActorDims{3, da, 3, 5});
  s.encoder->to(kF64);
  s.critic->to(kF64);
  s.actor->to(kF64);
  for (auto& p : s.encoder->parameters()) p.set_requires_grad(false);
  for (auto& p : s.critic->parameters()) p.set_requires_grad(false);
  s.state = torch::randn({batch, 3}, kF64);
  s.action = torch::rand({batch, da}, kF64) * 2 - 1;
  return s;
}

torch::Tensor q_min_at_policy(Setup& s, const Embeddings& emb) {
  auto zs = emb.state(s.state);
  auto pi = s.actor->forward(s.state, zs);
  return min_over_ensemble(s.critic->forward(s.state, pi, zs, emb.state_action(zs, pi)));
}

std::vector<torch::Tensor> actor_gradients(Setup& s, const Embeddings& emb, double lambda) {
  s.actor->zero_grad();
  actor_loss(s.actor, s.critic, emb, s.state, s.action, lambda).loss.backward();
  std::vector<torch::Tensor> grads;
  for (auto& p : s.actor->parameters()) grads.push_back(p.grad().clone());
  return grads;
}

}  // namespace

TEST(ActorForward, ZeroFinalLayerOutputsZero) {
  auto s = make_setup(1);
  {
    torch::NoGradGuard no_grad;
    s.actor->l3->weight.zero_();
    s.actor->l3->bias.zero_();
  }
  auto out = s.actor->forward(s.state, torch::randn({6, 3}, kF64));
  EXPECT_TRUE(torch::equal(out, torch::zeros({6, 2}, kF64)));
}

TEST(ActorForward, OutputsStrictlyInsideUnitBoxAndDeterministic) {
  torch::manual_seed(2);
  Actor actor(ActorDims{4, 3, 6, 16});
  auto s = torch::randn({10000, 4}) * 5;
  auto z = torch::randn({10000, 6}) * 5;
  auto a = actor->forward(s, z);
  EXPECT_TRUE((a.abs() < 1.0).all().item<bool>());
  EXPECT_TRUE(torch::equal(a, actor->forward(s, z)));
}

TEST(ActorForward, DimensionMismatchRejected) {
  auto s = make_setup(3);
  EXPECT_THROW(s.actor->forward(torch::randn({2, 4}, kF64), torch::randn({2, 3}, kF64)), ParameterError);
  EXPECT_THROW(s.actor->forward(torch::randn({2, 3}, kF64), torch::randn({2, 2}, kF64)), ParameterError);
}

TEST(ActorLoss, ZeroLambdaIsNegativeMeanMinQ) {
  auto s = make_setup(4);
  Embeddings emb(s.encoder, 3);
  auto result = actor_loss(s.actor, s.critic, emb, s.state, s.action, 0.0);
  EXPECT_EQ(result.loss.item<double>(), -q_min_at_policy(s, emb).mean().item<double>());
}

TEST(ActorLoss, PolicyMatchingDataHasNoCloningTerm) {
  auto s = make_setup(5);
  Embeddings emb(s.encoder, 3);
  s.action = s.actor->forward(s.state, emb.state(s.state)).detach();
  auto result = actor_loss(s.actor, s.critic, emb, s.state, s.action, 0.7);
  EXPECT_EQ(result.bc_term, 0.0);
  EXPECT_EQ(result.loss.item<double>(), -q_min_at_policy(s, emb).mean().item<double>());
}

TEST(ActorLoss, BatchMeanWeighting) {
  auto s = make_setup(6);
  Embeddings emb(s.encoder, 3);
  auto q = q_min_at_policy(s, emb).detach();
  auto pi = s.actor->forward(s.state, emb.state(s.state)).detach();
  auto mse = (pi - s.action).pow(2).mean(-1);
  auto per_sample = actor_loss(s.actor, s.critic, emb, s.state, s.action, 1.0, BcWeighting::kPerSample);
  auto batch_mean = actor_loss(s.actor, s.critic, emb, s.state, s.action, 1.0, BcWeighting::kBatchMean);
  EXPECT_NEAR(per_sample.bc_term, (q.abs() * mse).mean().item<double>(), 1e-12);
  EXPECT_NEAR(batch_mean.bc_term, (q.abs().mean() * mse).mean().item<double>(), 1e-12);
}

// The weight |q_min| is a constant of the loss: finite differences taken with
// it frozen at its current value must match the analytic gradient.
TEST(ActorLoss, GradientMatchesFrozenWeightOracle) {
  for (std::uint64_t seed : {7u, 8u}) {
    auto s = make_setup(seed);
    Embeddings emb(s.encoder, 3);
    const double lambda = 2.0;
    auto weight = q_min_at_policy(s, emb).abs().detach();
    auto frozen_loss = [&] {
      auto zs = emb.state(s.state);
      auto pi = s.actor->forward(s.state, zs);
      auto q = min_over_ensemble(s.critic->forward(s.state, pi, zs, emb.state_action(zs, pi)));
      return (-q + lambda * weight * (pi - s.action).pow(2).mean(-1)).mean().item<double>();
    };
    auto coupled_loss = [&] {
      auto zs = emb.state(s.state);
      auto pi = s.actor->forward(s.state, zs);
      auto q = min_over_ensemble(s.critic->forward(s.state, pi, zs, emb.state_action(zs, pi)));
      return (-q + lambda * q.abs() * (pi - s.action).pow(2).mean(-1)).mean().item<double>();
    };
    auto analytic = actor_gradients(s, emb, lambda);
    auto params = s.actor->parameters();
    double coupled_gap = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto numeric = finite_difference(frozen_loss, params[k], 1e-6);
      EXPECT_LE(relative_error(analytic[k], numeric), 1e-3) << "seed " << seed << " parameter " << k;
      coupled_gap = std::max(coupled_gap, (analytic[k] - finite_difference(coupled_loss, params[k], 1e-6)).abs().max().item<double>());
    }
    EXPECT_GT(coupled_gap, 1e-5);
  }
}

// At lambda = 0 the update is the deterministic policy gradient of the
// minimum critic: dQ_min/da at a = pi(s), chained through dpi/dtheta.
TEST(ActorLoss, ZeroLambdaFollowsDeterministicPolicyGradient) {
  auto s = make_setup(9);
  Embeddings emb(s.encoder, 3);
  auto expected_grads = [&] {
    auto zs = emb.state(s.state);
    auto pi = s.actor->forward(s.state, zs);
    auto a = pi.detach().requires_grad_(true);
    auto q = min_over_ensemble(s.critic->forward(s.state, a, zs, emb.state_action(zs, a)));
    auto dq_da = torch::autograd::grad({q.sum()}, {a})[0];
    const auto b = static_cast<double>(s.state.size(0));
    return torch::autograd::grad({pi}, s.actor->parameters(), {-dq_da / b});
  }();
  auto grads = actor_gradients(s, emb, 0.0);
  for (std::size_t k = 0; k < grads.size(); ++k)
    EXPECT_TRUE(torch::allclose(grads[k], expected_grads[k], 1e-10, 1e-12)) << "parameter " << k;
}

TEST(ActorLoss, GradientIsHomogeneousInCriticScale) {
  auto s = make_setup(10);
  Embeddings emb(s.encoder, 3);
  auto base = actor_gradients(s, emb, 0.5);
  const double k = 3.0;
  {
    torch::NoGradGuard no_grad;
    s.critic->l4->weight.mul_(k);
    s.critic->l4->bias.mul_(k);
  }
  auto scaled = actor_gradients(s, emb, 0.5);
  for (std::size_t i = 0; i < base.size(); ++i)
    EXPECT_TRUE(torch::allclose(scaled[i], k * base[i], 1e-10, 1e-12)) << "parameter " << i;
}

TEST(ActorLoss, EncoderAndCriticParametersStayUntouched) {
  auto s = make_setup(11);
  Embeddings emb(s.encoder, 3);
  actor_loss(s.actor, s.critic, emb, s.state, s.action, 0.5).loss.backward();
  for (auto& p : s.encoder->parameters()) EXPECT_FALSE(p.grad().defined());
  for (auto& p : s.critic->parameters()) EXPECT_FALSE(p.grad().defined());
  for (auto& p : s.actor->parameters()) EXPECT_TRUE(p.grad().defined());
}
