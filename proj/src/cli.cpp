#include "edtd7/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "edtd7/errors.hpp"
#include "edtd7/eval.hpp"
#include "edtd7/metrics.hpp"
#include "edtd7/trainer.hpp"

#ifndef EDTD7_DEFAULT_REF_SCORES
#define EDTD7_DEFAULT_REF_SCORES ""
#endif

namespace edtd7 {

void ExperimentConfig::validate() const {
  if (dataset_path.has_value() == chain.has_value()) {
    throw UsageError("exactly one of --dataset or --chain must be given");
  }
  if (chain) chain->validate();
  if (seeds.empty()) throw UsageError("at least one --seed is required");
  if (eval_episodes <= 0) throw UsageError("--eval-episodes must be positive");
  if (log_freq <= 0) throw UsageError("--log-freq must be positive");
  if (checkpoint_freq < 0) throw UsageError("--checkpoint-freq must be non-negative");
  if (keep_checkpoints < 1) throw UsageError("--keep-checkpoints must be at least 1");
  try {
    hp.validate();
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
}

TaskDefaults task_defaults(const std::string& env_name) {
  TaskDefaults d;
  // hopper-medium-expert and hopper-expert use a stronger BC weight.
  const bool hopper_expert = env_name.starts_with("hopper-expert") || env_name.starts_with("hopper-medium-expert");
  if (hopper_expert) d.lambda_bc = 0.05;
  return d;
}

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

TrainCommand::TrainCommand(CLI::App& app) : app_(app) {
  auto& hp = config_.hp;
  app.set_config("--config", "", "Flat key = value file mirroring the flags; flags override it");

  auto* dataset = app.add_option("--dataset", dataset_, "D4RL-layout HDF5 dataset");
  auto* chain = app.add_option("--chain", chain_states_, "Use a synthetic chain MDP with N states");
  dataset->excludes(chain);
  app.add_option("--chain-transitions", chain_transitions_, "Transitions collected from the chain MDP");
  app.add_option("--chain-epsilon", chain_epsilon_, "Behavior policy epsilon for the chain MDP");
  app.add_option("--chain-seed", chain_seed_, "Seed of the chain data collection");
  app.add_option("--goal-reward", goal_reward_, "Reward for reaching the chain goal");
  app.add_option("--env", config_.env_name, "Task name (selects per-task defaults and reference scores)");
  app.add_option("--seed", config_.seeds, "Run seed; repeat for several seeds");
  app.add_option("--max-steps", hp.max_steps, "Gradient steps per run");
  app.add_option("--eval-freq", hp.eval_freq, "Evaluate every E steps");
  app.add_option("--n-ensemble", hp.ensemble_size, "Number of critics N");
  app.add_option("--eta", hp.eta, "Gradient-diversity penalty weight");
  app.add_option("--lambda", hp.lambda_bc, "Behavior-cloning weight");
  app.add_option("--target-mode", target_mode_, "minq or pessq")->check(CLI::IsMember({"minq", "pessq"}));
  app.add_option("--ablate", ablate_, "Remove a component: sale, lap or ensemble (repeatable)")
      ->check(CLI::IsMember({"sale", "lap", "ensemble"}));
  app.add_option("--bc-weight", bc_weight_, "per-sample or batch-mean |Q| weighting")
      ->check(CLI::IsMember({"per-sample", "batch-mean"}));
  app.add_option("--out", config_.output_dir, "Output directory");
  app.add_option("--gamma", hp.gamma, "Discount factor");
  app.add_option("--batch-size", hp.batch_size, "Mini-batch size");
  app.add_option("--target-update-freq", hp.target_update_freq, "Hard target update period M");
  app.add_option("--policy-freq", hp.policy_update_freq, "Actor update period");
  app.add_option("--lr", hp.learning_rate, "Adam learning rate");
  app.add_option("--alpha", hp.alpha, "Priority smoothing exponent");
  app.add_option("--min-priority", hp.min_priority, "Priority floor and huber threshold");
  app.add_option("--noise-sigma", hp.noise_sigma, "Target policy noise std");
  app.add_option("--noise-clip", hp.noise_clip, "Target policy noise clip");
  app.add_option("--hidden-dim", hidden_dim_, "Hidden width of encoder, critic and actor");
  app.add_option("--embedding-dim", hp.embedding_dim, "Width of z^s and z^sa");
  app.add_option("--env-cmd", env_cmd_, "Evaluation simulator command (JSON-lines protocol)");
  app.add_option("--ref-scores", ref_scores_, "Reference score table for normalization");
  app.add_option("--eval-episodes", config_.eval_episodes, "Episodes per evaluation");
  app.add_option("--log-freq", config_.log_freq, "Write a metrics record every K steps");
  app.add_option("--checkpoint-freq", config_.checkpoint_freq, "Checkpoint every K steps (0: final only)");
  app.add_option("--keep-checkpoints", config_.keep_checkpoints, "Checkpoints kept on disk per seed");
  app.add_flag("--resume", config_.resume, "Continue from the latest checkpoint of each seed");
  app.add_flag("--clamp-actions", config_.clamp_actions, "Clamp out-of-range dataset actions instead of failing");
}

ExperimentConfig TrainCommand::finalize() const {
  ExperimentConfig config = config_;
  auto& hp = config.hp;
  auto given = [this](const char* name) { return app_.count(name) > 0; };

  if (given("--dataset")) config.dataset_path = dataset_;
  if (given("--chain")) {
    ChainMdpSpec spec;
    spec.n_states = chain_states_;
    spec.n_transitions = chain_transitions_;
    spec.behavior_epsilon = chain_epsilon_;
    spec.seed = chain_seed_;
    spec.goal_reward = goal_reward_;
    spec.discount = hp.gamma;
    config.chain = spec;
    if (config.env_name.empty()) config.env_name = "chain-" + std::to_string(chain_states_);
  }

  const auto defaults = task_defaults(config.env_name);
  if (!given("--n-ensemble")) hp.ensemble_size = defaults.ensemble_size;
  if (!given("--eta")) hp.eta = defaults.eta;
  if (!given("--lambda")) hp.lambda_bc = defaults.lambda_bc;

  try {
    hp.target_mode = parse_target_mode(target_mode_);
    hp.bc_weighting = parse_bc_weighting(bc_weight_);
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  if (hp.target_mode == TargetMode::kPessQ) {
    if (given("--eta") && hp.eta != 0.0) {
      throw UsageError("--target-mode pessq has no gradient-diversity term; --eta must be 0");
    }
    hp.eta = 0.0;
  }
  for (const auto& a : ablate_) {
    if (a == "sale") hp.ablations.sale = true;
    if (a == "lap") hp.ablations.lap = true;
    if (a == "ensemble") hp.ablations.ensemble = true;
  }
  if (given("--hidden-dim")) hp.encoder_hidden = hp.critic_hidden = hp.actor_hidden = hidden_dim_;
  config.env_command = split_words(env_cmd_);
  config.reference_scores = std::filesystem::path(ref_scores_.empty() ? EDTD7_DEFAULT_REF_SCORES : ref_scores_);
  config.validate();
  return config;
}

ExperimentConfig parse_train_args(const std::vector<std::string>& args) {
  CLI::App app{"edtd7 train"};
  TrainCommand command(app);
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  return command.finalize();
}

std::string config_snapshot(const ExperimentConfig& config) {
  const auto& hp = config.hp;
  std::ostringstream out;
  out.precision(17);
  if (config.dataset_path) out << "dataset=\"" << config.dataset_path->string() << "\"\n";
  if (config.chain) {
    out << "chain=" << config.chain->n_states << "\n"
        << "chain-transitions=" << config.chain->n_transitions << "\n"
        << "chain-epsilon=" << config.chain->behavior_epsilon << "\n"
        << "chain-seed=" << config.chain->seed << "\n"
        << "goal-reward=" << config.chain->goal_reward << "\n";
  }
  out << "env=\"" << config.env_name << "\"\n";
  out << "seed=[";
  for (std::size_t i = 0; i < config.seeds.size(); ++i) out << (i ? "," : "") << config.seeds[i];
  out << "]\n";
  out << "max-steps=" << hp.max_steps << "\n"
      << "eval-freq=" << hp.eval_freq << "\n"
      << "n-ensemble=" << hp.ensemble_size << "\n"
      << "eta=" << hp.eta << "\n"
      << "lambda=" << hp.lambda_bc << "\n"
      << "target-mode=\"" << to_string(hp.target_mode) << "\"\n";
  std::vector<std::string> ablate;
  if (hp.ablations.sale) ablate.emplace_back("sale");
  if (hp.ablations.lap) ablate.emplace_back("lap");
  if (hp.ablations.ensemble) ablate.emplace_back("ensemble");
  if (!ablate.empty()) {
    out << "ablate=[";
    for (std::size_t i = 0; i < ablate.size(); ++i) out << (i ? "," : "") << '"' << ablate[i] << '"';
    out << "]\n";
  }
  out << "bc-weight=\"" << to_string(hp.bc_weighting) << "\"\n"
      << "out=\"" << config.output_dir.string() << "\"\n"
      << "gamma=" << hp.gamma << "\n"
      << "batch-size=" << hp.batch_size << "\n"
      << "target-update-freq=" << hp.target_update_freq << "\n"
      << "policy-freq=" << hp.policy_update_freq << "\n"
      << "lr=" << hp.learning_rate << "\n"
      << "alpha=" << hp.alpha << "\n"
      << "min-priority=" << hp.min_priority << "\n"
      << "noise-sigma=" << hp.noise_sigma << "\n"
      << "noise-clip=" << hp.noise_clip << "\n";
  if (hp.encoder_hidden == hp.critic_hidden && hp.critic_hidden == hp.actor_hidden) {
    out << "hidden-dim=" << hp.critic_hidden << "\n";
  }
  out << "embedding-dim=" << hp.embedding_dim << "\n";
  if (!config.env_command.empty()) {
    out << "env-cmd=\"";
    for (std::size_t i = 0; i < config.env_command.size(); ++i) out << (i ? " " : "") << config.env_command[i];
    out << "\"\n";
  }
  out << "ref-scores=\"" << config.reference_scores.string() << "\"\n"
      << "eval-episodes=" << config.eval_episodes << "\n"
      << "log-freq=" << config.log_freq << "\n"
      << "checkpoint-freq=" << config.checkpoint_freq << "\n"
      << "keep-checkpoints=" << config.keep_checkpoints << "\n"
      << "clamp-actions=" << (config.clamp_actions ? "true" : "false") << "\n";
  return out.str();
}

std::pair<double, double> final_window_stats(const std::vector<double>& scores, std::size_t window) {
  if (scores.empty()) return {std::nan(""), std::nan("")};
  const auto first = scores.size() > window ? scores.end() - static_cast<std::ptrdiff_t>(window) : scores.begin();
  const std::vector<double> tail(first, scores.end());
  const double mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(tail.size());
  double var = 0.0;
  for (double v : tail) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(tail.size()))};
}

namespace {

std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  std::optional<std::filesystem::path> best;
  std::int64_t best_step = -1;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.empty() || !std::ranges::all_of(name, ::isdigit)) continue;
    if (!std::filesystem::exists(entry.path() / "rng_state.bin")) continue;
    const auto step = std::stoll(name);
    if (step > best_step) {
      best_step = step;
      best = entry.path();
    }
  }
  return best;
}

void prune_checkpoints(const std::filesystem::path& dir, int keep) {
  std::vector<std::pair<std::int64_t, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!name.empty() && std::ranges::all_of(name, ::isdigit)) found.emplace_back(std::stoll(name), entry.path());
  }
  std::ranges::sort(found);
  for (std::size_t i = 0; i + static_cast<std::size_t>(keep) < found.size(); ++i) {
    std::filesystem::remove_all(found[i].second);
  }
}

void write_error_record(const std::filesystem::path& dir, std::int64_t step, const std::string& message) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["error"] = message;
  std::ofstream(dir / "error.json") << j.dump(2) << '\n';
}

}  // namespace

int run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const auto snapshot = config_snapshot(config);
  std::ofstream(config.output_dir / "config.ini") << snapshot;

  const TransitionDataset dataset = config.chain ? generate_chain_dataset(*config.chain)
                                                 : load_hdf5_dataset(*config.dataset_path, {config.clamp_actions});

  std::optional<std::pair<double, double>> reference;
  if (!config.reference_scores.empty() && std::filesystem::exists(config.reference_scores)) {
    reference = ReferenceScores::load(config.reference_scores).lookup(config.env_name);
  }

  ExperimentSummary summary;
  summary.metric = reference ? "normalized_score" : "eval_mean_return";
  int status = 0;

  for (auto seed : config.seeds) {
    const auto seed_dir = config.output_dir / ("seed_" + std::to_string(seed));
    const auto ckpt_dir = seed_dir / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
    if (!config.resume) {
      std::filesystem::remove(seed_dir / "metrics.jsonl");
      std::filesystem::remove(seed_dir / "timing.jsonl");
      std::filesystem::remove(seed_dir / "error.json");
    }

    std::unique_ptr<EnvAdapter> env;
    if (config.chain) {
      env = std::make_unique<ChainEnv>(*config.chain);
    } else if (!config.env_command.empty()) {
      env = std::make_unique<SubprocessEnv>(config.env_command);
    } else {
      std::cerr << "warning: no --env-cmd given; evaluation records will carry no return\n";
    }

    Trainer trainer(dataset, config.hp, seed);
    if (config.resume) {
      if (auto latest = latest_checkpoint(ckpt_dir)) {
        trainer.load_checkpoint(*latest);
        truncate_metrics(seed_dir / "metrics.jsonl", trainer.step());
        truncate_metrics(seed_dir / "timing.jsonl", trainer.step());
        std::cerr << "seed " << seed << ": resumed at step " << trainer.step() << "\n";
      }
    }

    MetricsLog log(seed_dir / "metrics.jsonl", seed_dir / "timing.jsonl");
    TrainingOptions options;
    options.env = env.get();
    options.eval_episodes = config.eval_episodes;
    options.eval_seed = seed * 1'000'003ULL;
    options.reference_scores = reference;
    options.log_freq = config.log_freq;
    options.checkpoint_dir = ckpt_dir;
    options.checkpoint_freq = config.checkpoint_freq;
    options.on_record = [&log](const MetricsRecord& r) { log.append(r); };
    options.on_checkpoint = [&](const std::filesystem::path& dir) {
      std::ofstream(dir / "config.ini") << snapshot;
      prune_checkpoints(ckpt_dir, config.keep_checkpoints);
    };

    try {
      run_training(trainer, options);
    } catch (const std::exception& e) {
      write_error_record(seed_dir, trainer.step(), e.what());
      std::cerr << "seed " << seed << " failed at step " << trainer.step() << ": " << e.what() << "\n";
      status = 1;
      continue;
    }

    std::vector<double> scores;
    for (const auto& r : read_metrics(seed_dir / "metrics.jsonl")) {
      const auto& v = reference ? r.normalized_score : r.eval_mean_return;
      if (v) scores.push_back(*v);
    }
    const auto [mean, sd] = final_window_stats(scores);
    summary.seeds.push_back({seed, scores.size(), mean, sd});
  }

  std::vector<double> per_seed;
  for (const auto& s : summary.seeds) {
    if (s.evaluations > 0) per_seed.push_back(s.final_mean);
  }
  std::tie(summary.mean, summary.std) = final_window_stats(per_seed, per_seed.size());

  nlohmann::ordered_json j;
  j["metric"] = summary.metric;
  j["window"] = 10;
  j["mean"] = per_seed.empty() ? nlohmann::json(nullptr) : nlohmann::json(summary.mean);
  j["std"] = per_seed.empty() ? nlohmann::json(nullptr) : nlohmann::json(summary.std);
  j["seeds"] = nlohmann::json::array();
  for (const auto& s : summary.seeds) {
    nlohmann::ordered_json row;
    row["seed"] = s.seed;
    row["evaluations"] = s.evaluations;
    row["final_mean"] = s.evaluations ? nlohmann::json(s.final_mean) : nlohmann::json(nullptr);
    row["final_std"] = s.evaluations ? nlohmann::json(s.final_std) : nlohmann::json(nullptr);
    j["seeds"].push_back(row);
  }
  std::ofstream(config.output_dir / "summary.json") << j.dump(2) << '\n';
  return status;
}

}  // namespace edtd7
