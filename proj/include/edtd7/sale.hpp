#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <memory>

namespace edtd7 {

inline constexpr double kAvgL1Epsilon = 1e-8;

/// Divides x by the mean absolute value of its last dimension. Rows whose
/// mean absolute value is below kAvgL1Epsilon are returned unchanged.
torch::Tensor avg_l1_norm(const torch::Tensor& x);

struct EncoderDims {
  std::int64_t state_dim = 0;
  std::int64_t action_dim = 0;
  std::int64_t hidden_dim = 256;
  std::int64_t embedding_dim = 256;
};

/// State encoder f and state-action encoder g.
///
///   z^s  = AvgL1Norm(W2 elu(W1 s + b1) + b2)
///   z^sa = V2 elu(V1 [z^s, a] + c1) + c2
///
/// Both accept any number of leading batch dimensions.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const EncoderDims& dims);

  torch::Tensor encode_state(const torch::Tensor& state);
  torch::Tensor encode_state_action(const torch::Tensor& zs, const torch::Tensor& action);

  [[nodiscard]] const EncoderDims& dims() const { return dims_; }

  torch::nn::Linear zs1{nullptr}, zs2{nullptr};
  torch::nn::Linear zsa1{nullptr}, zsa2{nullptr};

 private:
  EncoderDims dims_;
};
TORCH_MODULE(Encoder);

/// Mean over batch and embedding dimensions of (g(f(s), a) - f(s'))^2, with
/// f(s') treated as a constant.
torch::Tensor encoder_loss(Encoder& encoder, const torch::Tensor& state, const torch::Tensor& action,
                           const torch::Tensor& next_state);

/// Source of z^s / z^sa for the value and policy networks. A null encoder
/// yields zero embeddings (the no-SALE ablation).
class Embeddings {
 public:
  Embeddings(Encoder encoder, std::int64_t embedding_dim) : encoder_(std::move(encoder)), dim_(embedding_dim) {}

  torch::Tensor state(const torch::Tensor& s) const;
  torch::Tensor state_action(const torch::Tensor& zs, const torch::Tensor& a) const;
  [[nodiscard]] bool enabled() const { return !encoder_.is_empty(); }

 private:
  mutable Encoder encoder_;
  std::int64_t dim_;
};

/// Three encoder generations: the trained one, one update behind, and two
/// updates behind. The older two never require gradients.
class EncoderVersionSet {
 public:
  explicit EncoderVersionSet(const EncoderDims& dims);

  /// fixed <- target, then target <- current.
  void rotate();

  Encoder& current() { return current_; }
  Encoder& target() { return target_; }
  Encoder& fixed() { return fixed_; }
  [[nodiscard]] const Encoder& current() const { return current_; }
  [[nodiscard]] const Encoder& target() const { return target_; }
  [[nodiscard]] const Encoder& fixed() const { return fixed_; }
  /// Number of rotations applied so far.
  [[nodiscard]] std::int64_t version() const { return version_; }

  void to(torch::Dtype dtype);
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  Encoder current_;
  Encoder target_;
  Encoder fixed_;
  std::int64_t version_ = 0;
};

}  // namespace edtd7
