#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>

namespace edtd7 {

/// Copies every parameter and buffer of src into dst (same architecture).
void hard_copy(const torch::nn::Module& src, torch::nn::Module& dst);

/// Marks all parameters of a module as (non-)trainable.
void set_trainable(torch::nn::Module& module, bool trainable);

/// True when both modules hold bitwise-identical parameters.
bool parameters_equal(const torch::nn::Module& a, const torch::nn::Module& b);

/// Flattens all parameters into one detached 1-D tensor (stable order).
torch::Tensor flatten_parameters(const torch::nn::Module& module);

/// Writes the module parameters plus an integer version counter to a torch archive.
void save_module(const torch::nn::Module& module, const std::filesystem::path& path, std::int64_t version = 0);

/// Loads parameters written by save_module and returns the stored version counter.
std::int64_t load_module(torch::nn::Module& module, const std::filesystem::path& path);

}  // namespace edtd7
