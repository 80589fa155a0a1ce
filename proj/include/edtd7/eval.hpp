#pragma once

#include <sys/types.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edtd7/datasets.hpp"

namespace edtd7 {

struct StepResult {
  std::vector<float> next_state;
  double reward = 0.0;
  bool done = false;
};

/// Minimal environment contract used for evaluation rollouts.
class EnvAdapter {
 public:
  virtual ~EnvAdapter() = default;
  virtual std::vector<float> reset(std::uint64_t seed) = 0;
  virtual StepResult step(std::span<const float> action) = 0;
  [[nodiscard]] virtual int state_dim() const = 0;
  [[nodiscard]] virtual int action_dim() const = 0;
};

/// The chain MDP behind generate_chain_dataset, with an episode step limit.
class ChainEnv final : public EnvAdapter {
 public:
  explicit ChainEnv(const ChainMdpSpec& spec, int max_episode_steps = 0);

  std::vector<float> reset(std::uint64_t seed) override;
  StepResult step(std::span<const float> action) override;
  [[nodiscard]] int state_dim() const override { return spec_.n_states; }
  [[nodiscard]] int action_dim() const override { return 1; }
  [[nodiscard]] int current_state() const { return state_; }

 private:
  ChainMdpSpec spec_;
  int max_steps_;
  int state_ = 0;
  int steps_ = 0;
};

/// Talks to an external simulator process over line-delimited JSON on its
/// stdin/stdout:
///   -> {"cmd":"spec"}                 <- {"state_dim":D,"action_dim":A}
///   -> {"cmd":"reset","seed":K}       <- {"state":[...]}
///   -> {"cmd":"step","action":[...]}  <- {"state":[...],"reward":R,"done":B}
///   -> {"cmd":"close"}
class SubprocessEnv final : public EnvAdapter {
 public:
  explicit SubprocessEnv(const std::vector<std::string>& argv);
  ~SubprocessEnv() override;
  SubprocessEnv(const SubprocessEnv&) = delete;
  SubprocessEnv& operator=(const SubprocessEnv&) = delete;

  std::vector<float> reset(std::uint64_t seed) override;
  StepResult step(std::span<const float> action) override;
  [[nodiscard]] int state_dim() const override { return state_dim_; }
  [[nodiscard]] int action_dim() const override { return action_dim_; }

 private:
  std::string request(const std::string& line);

  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
  int state_dim_ = 0;
  int action_dim_ = 0;
};

using Policy = std::function<std::vector<float>(std::span<const float> state)>;

struct EvalReport {
  std::int64_t step = 0;
  std::vector<double> episode_returns;
  double mean_return = 0.0;
  std::optional<double> normalized_score;
};

/// Runs the deterministic policy for the given number of episodes; episode k
/// resets the environment with seed + k. Returns undiscounted returns.
EvalReport rollout(EnvAdapter& env, const Policy& policy, int episodes, std::uint64_t seed, std::int64_t step = 0);

/// 100 * (score - random) / (expert - random).
double d4rl_score(double score, double random_score, double expert_score);

/// Text table of "name random_score expert_score" rows; '#' starts a comment.
class ReferenceScores {
 public:
  static ReferenceScores load(const std::filesystem::path& path);
  static ReferenceScores parse(const std::string& text);

  /// Exact name match first, then the environment prefix before the first '-'.
  [[nodiscard]] std::optional<std::pair<double, double>> lookup(const std::string& name) const;

 private:
  std::map<std::string, std::pair<double, double>> table_;
};

struct ChainOracle {
  /// q[s][0] = Q*(s, left), q[s][1] = Q*(s, right); the goal row is zero.
  std::vector<std::array<double, 2>> q;
  std::vector<double> v;
  /// Undiscounted return of the greedy policy from state 0.
  double optimal_return = 0.0;
  int iterations = 0;
};

/// Tabular value iteration on the chain MDP until the sup-norm change drops below 1e-10.
ChainOracle oracle_value_iteration(const ChainMdpSpec& spec);

}  // namespace edtd7
