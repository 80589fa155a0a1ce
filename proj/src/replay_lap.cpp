#include "edtd7/replay_lap.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "edtd7/errors.hpp"

namespace edtd7 {

SumTree::SumTree(std::size_t size, double initial) : size_(size) {
  if (size == 0) throw ParameterError("sum tree needs at least one leaf");
  leaf_offset_ = 1;
  while (leaf_offset_ < size) leaf_offset_ <<= 1;
  nodes_.assign(2 * leaf_offset_, 0.0);
  for (std::size_t i = 0; i < size; ++i) nodes_[leaf_offset_ + i] = initial;
  for (std::size_t n = leaf_offset_ - 1; n >= 1; --n) nodes_[n] = nodes_[2 * n] + nodes_[2 * n + 1];
}

void SumTree::set(std::size_t index, double value) {
  if (index >= size_) throw ParameterError("sum tree index out of range");
  std::size_t n = leaf_offset_ + index;
  nodes_[n] = value;
  for (n >>= 1; n >= 1; n >>= 1) nodes_[n] = nodes_[2 * n] + nodes_[2 * n + 1];
}

std::size_t SumTree::find(double mass) const {
  std::size_t n = 1;
  while (n < leaf_offset_) {
    const std::size_t left = 2 * n;
    if (mass < nodes_[left]) {
      n = left;
    } else {
      mass -= nodes_[left];
      n = left + 1;
    }
  }
  // Rounding can push the walk into the zero-weight padding past the last leaf.
  return std::min(n - leaf_offset_, size_ - 1);
}

LapBuffer::LapBuffer(const TransitionDataset& dataset, double alpha, std::uint64_t seed, double min_priority,
                     bool uniform)
    : dataset_(&dataset),
      alpha_(alpha),
      min_priority_(min_priority),
      uniform_(uniform),
      tree_(std::max<std::size_t>(dataset.size(), 1), 1.0),
      rng_(seed) {
  if (dataset.empty()) throw ParameterError("cannot build a replay buffer over an empty dataset");
  if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
  if (!(min_priority > 0.0)) throw ParameterError("min_priority must be positive");
}

std::vector<std::int64_t> LapBuffer::sample_indices(std::size_t batch_size) {
  if (batch_size == 0) throw ParameterError("batch_size must be at least 1");
  std::vector<std::int64_t> out(batch_size);
  const double total = tree_.total();
  for (auto& idx : out) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    idx = static_cast<std::int64_t>(tree_.find(u * total));
  }
  return out;
}

SampledBatch LapBuffer::sample(std::size_t batch_size) {
  SampledBatch batch;
  batch.indices = sample_indices(batch_size);
  batch.transitions.reserve(batch_size);
  for (auto i : batch.indices) batch.transitions.push_back(dataset_->at(static_cast<std::size_t>(i)));
  return batch;
}

double LapBuffer::priority_for(double abs_td_error) const {
  return std::max(std::pow(abs_td_error, alpha_), min_priority_);
}

void LapBuffer::update_priorities(std::span<const std::int64_t> indices, std::span<const double> td_errors,
                                  std::size_t ensemble_size) {
  if (ensemble_size == 0 || td_errors.size() != indices.size() * ensemble_size) {
    throw ParameterError("td_errors must have one row of ensemble_size entries per index");
  }
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] < 0 || static_cast<std::size_t>(indices[b]) >= size()) {
      throw ParameterError("priority update index out of range");
    }
  }
  if (!std::ranges::all_of(td_errors, [](double v) { return std::isfinite(v); })) {
    throw DataError("non-finite TD error passed to priority update");
  }
  if (uniform_) return;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < ensemble_size; ++k) worst = std::max(worst, std::abs(td_errors[b * ensemble_size + k]));
    tree_.set(static_cast<std::size_t>(indices[b]), priority_for(worst));
  }
}

std::vector<double> LapBuffer::priorities() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = tree_.get(i);
  return out;
}

void LapBuffer::restore(std::span<const double> priorities, const std::string& rng_state) {
  if (priorities.size() != size()) throw ParameterError("priority vector size does not match dataset");
  for (std::size_t i = 0; i < size(); ++i) tree_.set(i, priorities[i]);
  std::istringstream in(rng_state);
  in >> rng_;
  if (!in) throw DataError("corrupt sampler state");
}

std::string LapBuffer::rng_state() const {
  std::ostringstream out;
  out << rng_;
  return out.str();
}

}  // namespace edtd7
