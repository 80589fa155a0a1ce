#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace edtd7 {

struct Transition {
  std::vector<float> state;
  std::vector<float> action;
  float reward = 0.0f;
  std::vector<float> next_state;
  bool terminal = false;

  bool operator==(const Transition&) const = default;
};

/// Fixed offline collection of transitions. Stored column-wise so that
/// batches can be gathered without copying individual records.
class TransitionDataset {
 public:
  TransitionDataset(std::string name, int state_dim, int action_dim);

  void push_back(const Transition& t);
  void reserve(std::size_t n);

  [[nodiscard]] std::size_t size() const { return rewards_.size(); }
  [[nodiscard]] bool empty() const { return rewards_.empty(); }
  [[nodiscard]] int state_dim() const { return state_dim_; }
  [[nodiscard]] int action_dim() const { return action_dim_; }
  [[nodiscard]] const std::string& name() const { return name_; }

  [[nodiscard]] Transition at(std::size_t i) const;

  [[nodiscard]] std::span<const float> state(std::size_t i) const;
  [[nodiscard]] std::span<const float> action(std::size_t i) const;
  [[nodiscard]] std::span<const float> next_state(std::size_t i) const;
  [[nodiscard]] float reward(std::size_t i) const { return rewards_[i]; }
  [[nodiscard]] bool terminal(std::size_t i) const { return terminals_[i] != 0; }

  // Raw column storage, row-major.
  [[nodiscard]] const std::vector<float>& states() const { return states_; }
  [[nodiscard]] const std::vector<float>& actions() const { return actions_; }
  [[nodiscard]] const std::vector<float>& rewards() const { return rewards_; }
  [[nodiscard]] const std::vector<float>& next_states() const { return next_states_; }
  [[nodiscard]] const std::vector<std::uint8_t>& terminals() const { return terminals_; }

  bool operator==(const TransitionDataset&) const = default;

 private:
  std::string name_;
  int state_dim_;
  int action_dim_;
  std::vector<float> states_;
  std::vector<float> actions_;
  std::vector<float> rewards_;
  std::vector<float> next_states_;
  std::vector<std::uint8_t> terminals_;
};

struct LoadOptions {
  /// Clamp out-of-range actions into [-1, 1] instead of rejecting the file.
  bool clamp_actions = false;
};

/// Reads a D4RL-layout HDF5 file (observations, actions, rewards, terminals,
/// timeouts, optional next_observations).
///
/// Without next_observations, next_state[t] is observations[t+1] and the last
/// index of every time-limited segment (timeout set, or the final row) is not
/// used as a transition source. Terminal rows are kept since their successor
/// is masked out of the bootstrap. The stored terminal flag is
/// terminals[t] && !timeouts[t].
TransitionDataset load_hdf5_dataset(const std::filesystem::path& path, const LoadOptions& options = {});

/// Writes the dataset using the same layout, always including next_observations.
/// Timeouts are written as all-false.
void write_hdf5_dataset(const TransitionDataset& dataset, const std::filesystem::path& path);

struct ChainMdpSpec {
  int n_states = 5;
  double goal_reward = 1.0;
  double discount = 0.99;
  double behavior_epsilon = 0.2;
  int n_transitions = 5000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One-hot encoding of a chain state.
std::vector<float> chain_one_hot(int state, int n_states);

/// Deterministic chain transition: a >= 0 moves right, a < 0 moves left,
/// clamped at both ends.
int chain_next_state(int state, float action, int n_states);

/// Collects n_transitions from the chain MDP with an epsilon-greedy behavior
/// policy around the optimal "move right" action. Episodes start in state 0
/// and restart after reaching the terminal goal state n_states - 1.
TransitionDataset generate_chain_dataset(const ChainMdpSpec& spec);

}  // namespace edtd7
