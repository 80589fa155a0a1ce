#include "edtd7/eval.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <nlohmann/json.hpp>
#include <sstream>

#include "edtd7/errors.hpp"

namespace edtd7 {

ChainEnv::ChainEnv(const ChainMdpSpec& spec, int max_episode_steps)
    : spec_(spec), max_steps_(max_episode_steps > 0 ? max_episode_steps : 10 * spec.n_states) {
  spec_.validate();
}

std::vector<float> ChainEnv::reset(std::uint64_t /*seed*/) {
  state_ = 0;
  steps_ = 0;
  return chain_one_hot(state_, spec_.n_states);
}

StepResult ChainEnv::step(std::span<const float> action) {
  if (action.size() != 1) throw ParameterError("chain env expects a scalar action");
  state_ = chain_next_state(state_, action[0], spec_.n_states);
  ++steps_;
  const bool goal = state_ == spec_.n_states - 1;
  return {chain_one_hot(state_, spec_.n_states), goal ? spec_.goal_reward : 0.0, goal || steps_ >= max_steps_};
}

SubprocessEnv::SubprocessEnv(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ParameterError("environment command is empty");
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
    throw std::runtime_error(std::string("pipe failed: ") + std::strerror(errno));
  }
  pid_ = fork();
  if (pid_ < 0) throw std::runtime_error(std::string("fork failed: ") + std::strerror(errno));
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  // A dead child must surface as an error from write(), not kill us.
  signal(SIGPIPE, SIG_IGN);

  auto reply = nlohmann::json::parse(request(R"({"cmd":"spec"})"));
  state_dim_ = reply.at("state_dim").get<int>();
  action_dim_ = reply.at("action_dim").get<int>();
}

SubprocessEnv::~SubprocessEnv() {
  if (to_child_ >= 0) {
    const std::string bye = "{\"cmd\":\"close\"}\n";
    [[maybe_unused]] auto n = write(to_child_, bye.data(), bye.size());
    close(to_child_);
  }
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) waitpid(pid_, nullptr, 0);
}

std::string SubprocessEnv::request(const std::string& line) {
  std::string payload = line + "\n";
  std::size_t sent = 0;
  while (sent < payload.size()) {
    auto n = write(to_child_, payload.data() + sent, payload.size() - sent);
    if (n <= 0) throw std::runtime_error("environment process closed its input");
    sent += static_cast<std::size_t>(n);
  }
  for (;;) {
    auto pos = pending_.find('\n');
    if (pos != std::string::npos) {
      std::string reply = pending_.substr(0, pos);
      pending_.erase(0, pos + 1);
      return reply;
    }
    char buf[4096];
    auto n = read(from_child_, buf, sizeof(buf));
    if (n <= 0) throw std::runtime_error("environment process exited while handling: " + line);
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

std::vector<float> SubprocessEnv::reset(std::uint64_t seed) {
  nlohmann::json req = {{"cmd", "reset"}, {"seed", seed}};
  auto reply = nlohmann::json::parse(request(req.dump()));
  return reply.at("state").get<std::vector<float>>();
}

StepResult SubprocessEnv::step(std::span<const float> action) {
  nlohmann::json req = {{"cmd", "step"}, {"action", std::vector<float>(action.begin(), action.end())}};
  auto reply = nlohmann::json::parse(request(req.dump()));
  return {reply.at("state").get<std::vector<float>>(), reply.at("reward").get<double>(), reply.at("done").get<bool>()};
}

EvalReport rollout(EnvAdapter& env, const Policy& policy, int episodes, std::uint64_t seed, std::int64_t step) {
  if (episodes <= 0) throw ParameterError("episodes must be positive");
  EvalReport report;
  report.step = step;
  for (int k = 0; k < episodes; ++k) {
    auto state = env.reset(seed + static_cast<std::uint64_t>(k));
    double total = 0.0;
    for (;;) {
      auto result = env.step(policy(state));
      total += result.reward;
      if (result.done) break;
      state = std::move(result.next_state);
    }
    report.episode_returns.push_back(total);
  }
  report.mean_return = std::accumulate(report.episode_returns.begin(), report.episode_returns.end(), 0.0) /
                       static_cast<double>(report.episode_returns.size());
  return report;
}

double d4rl_score(double score, double random_score, double expert_score) {
  if (expert_score == random_score) throw ParameterError("expert and random reference scores must differ");
  return 100.0 * (score - random_score) / (expert_score - random_score);
}

ReferenceScores ReferenceScores::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open reference score table: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

ReferenceScores ReferenceScores::parse(const std::string& text) {
  ReferenceScores scores;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string name;
    if (!(fields >> name)) continue;
    double random_score = 0.0;
    double expert_score = 0.0;
    if (!(fields >> random_score >> expert_score)) {
      throw SchemaError("reference score table line " + std::to_string(lineno) + ": expected name random expert");
    }
    scores.table_[name] = {random_score, expert_score};
  }
  return scores;
}

std::optional<std::pair<double, double>> ReferenceScores::lookup(const std::string& name) const {
  if (auto it = table_.find(name); it != table_.end()) return it->second;
  if (auto it = table_.find(name.substr(0, name.find('-'))); it != table_.end()) return it->second;
  return std::nullopt;
}

ChainOracle oracle_value_iteration(const ChainMdpSpec& spec) {
  spec.validate();
  const int n = spec.n_states;
  const int goal = n - 1;
  const double gamma = spec.discount;
  ChainOracle oracle;
  oracle.q.assign(n, {0.0, 0.0});
  oracle.v.assign(n, 0.0);

  auto backup = [&](int s, float action) {
    const int next = chain_next_state(s, action, n);
    const bool done = next == goal;
    return (done ? spec.goal_reward : 0.0) + (done ? 0.0 : gamma * oracle.v[next]);
  };

  for (;;) {
    ++oracle.iterations;
    double change = 0.0;
    auto q_new = oracle.q;
    for (int s = 0; s < goal; ++s) {
      q_new[s][0] = backup(s, -1.0f);
      q_new[s][1] = backup(s, 1.0f);
      change = std::max({change, std::abs(q_new[s][0] - oracle.q[s][0]), std::abs(q_new[s][1] - oracle.q[s][1])});
    }
    oracle.q = std::move(q_new);
    for (int s = 0; s < goal; ++s) oracle.v[s] = std::max(oracle.q[s][0], oracle.q[s][1]);
    if (change < 1e-10) break;
  }

  int s = 0;
  for (int t = 0; t < 10 * n && s != goal; ++t) {
    const float a = oracle.q[s][1] >= oracle.q[s][0] ? 1.0f : -1.0f;
    const int next = chain_next_state(s, a, n);
    if (next == goal) oracle.optimal_return += spec.goal_reward;
    s = next;
  }
  return oracle;
}

}  // namespace edtd7
