#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "edtd7/datasets.hpp"

namespace edtd7 {

/// Binary prefix-sum tree over a fixed number of non-negative weights.
/// Internal nodes are recomputed from their children on every update, so the
/// root never accumulates floating-point drift from repeated deltas.
class SumTree {
 public:
  explicit SumTree(std::size_t size, double initial = 0.0);

  void set(std::size_t index, double value);
  [[nodiscard]] double get(std::size_t index) const { return nodes_[leaf_offset_ + index]; }
  [[nodiscard]] double total() const { return nodes_[1]; }
  [[nodiscard]] std::size_t size() const { return size_; }

  /// Smallest leaf index whose inclusive prefix sum exceeds mass, for mass in [0, total()).
  [[nodiscard]] std::size_t find(double mass) const;

 private:
  std::size_t size_;
  std::size_t leaf_offset_;
  std::vector<double> nodes_;  // 1-based heap layout
};

struct SampledBatch {
  std::vector<std::int64_t> indices;
  std::vector<Transition> transitions;
};

/// Loss-adjusted prioritized sampling over a fixed dataset: index i is drawn
/// with probability max(|delta_i|^alpha, min_priority) / sum_j max(|delta_j|^alpha, min_priority).
class LapBuffer {
 public:
  LapBuffer(const TransitionDataset& dataset, double alpha, std::uint64_t seed, double min_priority = 1.0,
            bool uniform = false);

  /// Draws batch_size indices independently, with replacement.
  [[nodiscard]] std::vector<std::int64_t> sample_indices(std::size_t batch_size);
  [[nodiscard]] SampledBatch sample(std::size_t batch_size);

  /// td_errors is row-major [indices.size() x ensemble_size]. Each row is
  /// reduced by max |delta| before the priority transform. Duplicate indices
  /// take the value of their last occurrence.
  void update_priorities(std::span<const std::int64_t> indices, std::span<const double> td_errors,
                         std::size_t ensemble_size);

  [[nodiscard]] double priority(std::size_t i) const { return tree_.get(i); }
  [[nodiscard]] double total_priority() const { return tree_.total(); }
  [[nodiscard]] double probability(std::size_t i) const { return tree_.get(i) / tree_.total(); }
  [[nodiscard]] std::size_t size() const { return tree_.size(); }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] double min_priority() const { return min_priority_; }
  [[nodiscard]] bool uniform() const { return uniform_; }
  [[nodiscard]] const TransitionDataset& dataset() const { return *dataset_; }

  [[nodiscard]] double priority_for(double abs_td_error) const;

  // Checkpointing of the priority vector and sampling stream.
  [[nodiscard]] std::vector<double> priorities() const;
  void restore(std::span<const double> priorities, const std::string& rng_state);
  [[nodiscard]] std::string rng_state() const;

 private:
  const TransitionDataset* dataset_;
  double alpha_;
  double min_priority_;
  bool uniform_;
  SumTree tree_;
  std::mt19937_64 rng_;
};

}  // namespace edtd7
