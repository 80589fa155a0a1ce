#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

#include "edtd7/cli.hpp"
#include "edtd7/datasets.hpp"
#include "edtd7/errors.hpp"
#include "edtd7/eval.hpp"

int main(int argc, char** argv) {
  CLI::App app{"EDTD7 offline reinforcement learning experiments"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train on an offline dataset or a synthetic chain MDP");
  edtd7::TrainCommand train_command(*train);

  auto* plot = app.add_subcommand("plot", "Plot learning curves (mean +- std across seeds)");
  std::vector<std::string> run_dirs;
  std::string plot_out = "curves.png";
  plot->add_option("runs", run_dirs, "Configuration directories (each holding seed_*/metrics.jsonl)")->required();
  plot->add_option("--out", plot_out, "Output PNG; a CSV with the plotted series is written alongside");

  auto* gen = app.add_subcommand("generate-chain", "Write a chain MDP dataset in the HDF5 layout");
  edtd7::ChainMdpSpec spec;
  std::string gen_out = "chain.hdf5";
  gen->add_option("--states", spec.n_states, "Number of chain states");
  gen->add_option("--transitions", spec.n_transitions, "Transitions to collect");
  gen->add_option("--epsilon", spec.behavior_epsilon, "Behavior policy epsilon");
  gen->add_option("--seed", spec.seed, "Collection seed");
  gen->add_option("--goal-reward", spec.goal_reward, "Reward for reaching the goal");
  gen->add_option("--out", gen_out, "Output file");

  auto* oracle = app.add_subcommand("oracle", "Print the value-iteration solution of a chain MDP");
  oracle->add_option("--states", spec.n_states, "Number of chain states");
  oracle->add_option("--gamma", spec.discount, "Discount factor");
  oracle->add_option("--goal-reward", spec.goal_reward, "Reward for reaching the goal");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return edtd7::run_experiment(train_command.finalize());
    if (*plot) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      auto curves = edtd7::plot_learning_curves(dirs, plot_out);
      std::cout << "wrote " << plot_out << " (" << curves.size() << " curves)\n";
      return 0;
    }
    if (*gen) {
      edtd7::write_hdf5_dataset(edtd7::generate_chain_dataset(spec), gen_out);
      std::cout << "wrote " << gen_out << "\n";
      return 0;
    }
    if (*oracle) {
      spec.n_transitions = std::max(spec.n_transitions, spec.n_states);
      auto result = edtd7::oracle_value_iteration(spec);
      std::cout << std::setprecision(10) << "state  Q(left)  Q(right)\n";
      for (int s = 0; s + 1 < spec.n_states; ++s) {
        std::cout << s << "  " << result.q[s][0] << "  " << result.q[s][1] << "\n";
      }
      std::cout << "optimal return from state 0: " << result.optimal_return << "\n";
      return 0;
    }
  } catch (const edtd7::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
