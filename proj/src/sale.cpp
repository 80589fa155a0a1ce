#include "edtd7/sale.hpp"

#include "edtd7/errors.hpp"
#include "edtd7/nn_util.hpp"

namespace edtd7 {

torch::Tensor avg_l1_norm(const torch::Tensor& x) {
  auto scale = x.abs().mean(-1, /*keepdim=*/true);
  auto guarded = torch::where(scale < kAvgL1Epsilon, torch::ones_like(scale), scale);
  return x / guarded;
}

EncoderImpl::EncoderImpl(const EncoderDims& dims) : dims_(dims) {
  if (dims.state_dim <= 0 || dims.action_dim <= 0 || dims.hidden_dim <= 0 || dims.embedding_dim <= 0) {
    throw ParameterError("encoder dimensions must be positive");
  }
  zs1 = register_module("zs1", torch::nn::Linear(dims.state_dim, dims.hidden_dim));
  zs2 = register_module("zs2", torch::nn::Linear(dims.hidden_dim, dims.embedding_dim));
  zsa1 = register_module("zsa1", torch::nn::Linear(dims.embedding_dim + dims.action_dim, dims.hidden_dim));
  zsa2 = register_module("zsa2", torch::nn::Linear(dims.hidden_dim, dims.embedding_dim));
}

torch::Tensor EncoderImpl::encode_state(const torch::Tensor& state) {
  if (state.size(-1) != dims_.state_dim) throw ParameterError("encode_state: state dimension mismatch");
  return avg_l1_norm(zs2(torch::elu(zs1(state))));
}

torch::Tensor EncoderImpl::encode_state_action(const torch::Tensor& zs, const torch::Tensor& action) {
  if (zs.size(-1) != dims_.embedding_dim) throw ParameterError("encode_state_action: embedding dimension mismatch");
  if (action.size(-1) != dims_.action_dim) throw ParameterError("encode_state_action: action dimension mismatch");
  auto lead = action.sizes().vec();
  lead.back() = zs.size(-1);
  auto input = torch::cat({zs.expand(lead), action}, -1);
  return zsa2(torch::elu(zsa1(input)));
}

torch::Tensor encoder_loss(Encoder& encoder, const torch::Tensor& state, const torch::Tensor& action,
                           const torch::Tensor& next_state) {
  torch::Tensor next_zs;
  {
    torch::NoGradGuard no_grad;
    next_zs = encoder->encode_state(next_state);
  }
  auto pred = encoder->encode_state_action(encoder->encode_state(state), action);
  return (pred - next_zs).pow(2).mean();
}

torch::Tensor Embeddings::state(const torch::Tensor& s) const {
  if (!enabled()) {
    auto shape = s.sizes().vec();
    shape.back() = dim_;
    return torch::zeros(shape, s.options());
  }
  return encoder_->encode_state(s);
}

torch::Tensor Embeddings::state_action(const torch::Tensor& zs, const torch::Tensor& a) const {
  if (!enabled()) {
    auto shape = a.sizes().vec();
    shape.back() = dim_;
    return torch::zeros(shape, a.options());
  }
  return encoder_->encode_state_action(zs, a);
}

EncoderVersionSet::EncoderVersionSet(const EncoderDims& dims)
    : current_(Encoder(dims)), target_(Encoder(dims)), fixed_(Encoder(dims)) {
  hard_copy(*current_, *target_);
  hard_copy(*current_, *fixed_);
  set_trainable(*target_, false);
  set_trainable(*fixed_, false);
}

void EncoderVersionSet::rotate() {
  hard_copy(*target_, *fixed_);
  hard_copy(*current_, *target_);
  ++version_;
}

void EncoderVersionSet::to(torch::Dtype dtype) {
  current_->to(dtype);
  target_->to(dtype);
  fixed_->to(dtype);
}

void EncoderVersionSet::save(const std::filesystem::path& dir) const {
  save_module(*current_, dir / "encoders.current.bin", version_);
  save_module(*target_, dir / "encoders.target.bin", version_ - 1);
  save_module(*fixed_, dir / "encoders.fixed.bin", version_ - 2);
}

void EncoderVersionSet::load(const std::filesystem::path& dir) {
  version_ = load_module(*current_, dir / "encoders.current.bin");
  load_module(*target_, dir / "encoders.target.bin");
  load_module(*fixed_, dir / "encoders.fixed.bin");
}

}  // namespace edtd7
