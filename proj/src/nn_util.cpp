#include "edtd7/nn_util.hpp"

#include <stdexcept>

namespace edtd7 {

void hard_copy(const torch::nn::Module& src, torch::nn::Module& dst) {
  torch::NoGradGuard no_grad;
  auto src_params = src.named_parameters(true);
  auto dst_params = dst.named_parameters(true);
  if (src_params.size() != dst_params.size()) throw std::logic_error("hard_copy: architecture mismatch");
  for (const auto& p : src_params) dst_params[p.key()].copy_(p.value());
  auto src_buffers = src.named_buffers(true);
  auto dst_buffers = dst.named_buffers(true);
  for (const auto& b : src_buffers) dst_buffers[b.key()].copy_(b.value());
}

void set_trainable(torch::nn::Module& module, bool trainable) {
  for (auto& p : module.parameters(true)) p.set_requires_grad(trainable);
}

bool parameters_equal(const torch::nn::Module& a, const torch::nn::Module& b) {
  auto pa = a.named_parameters(true);
  auto pb = b.named_parameters(true);
  if (pa.size() != pb.size()) return false;
  for (const auto& p : pa) {
    const auto* other = pb.find(p.key());
    if (other == nullptr || !torch::equal(p.value(), *other)) return false;
  }
  return true;
}

torch::Tensor flatten_parameters(const torch::nn::Module& module) {
  std::vector<torch::Tensor> parts;
  for (const auto& p : module.parameters(true)) parts.push_back(p.detach().reshape({-1}));
  return torch::cat(parts);
}

void save_module(const torch::nn::Module& module, const std::filesystem::path& path, std::int64_t version) {
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.write("version_counter", torch::tensor(version, torch::kInt64), /*is_buffer=*/true);
  archive.save_to(path.string());
}

std::int64_t load_module(torch::nn::Module& module, const std::filesystem::path& path) {
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  module.load(archive);
  torch::Tensor version;
  archive.read("version_counter", version, /*is_buffer=*/true);
  return version.item<std::int64_t>();
}

}  // namespace edtd7
