#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "edtd7/cli.hpp"
#include "edtd7/errors.hpp"
#include "edtd7/metrics.hpp"

using namespace edtd7;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "edtd7_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

bool contains_line(const std::string& text, const std::string& line) {
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (l == line) return true;
  return false;
}

// Tiny networks so that a full run takes well under a second.
std::vector<std::string> quick_chain_args(const fs::path& out, std::int64_t max_steps = 20) {
  return {"--chain", "4", "--chain-transitions", "300", "--max-steps", std::to_string(max_steps), "--eval-freq", "5",
          "--eval-episodes", "2", "--hidden-dim", "8", "--embedding-dim", "8", "--batch-size", "16", "--n-ensemble",
          "3", "--log-freq", "1", "--out", out.string()};
}

std::vector<std::string> with(std::vector<std::string> args, const std::vector<std::string>& extra) {
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

TEST(TrainArgs, TaskDefaultsAppearInSnapshot) {
  auto config = parse_train_args({"--chain", "5", "--env", "halfcheetah-medium-v2"});
  EXPECT_EQ(config.hp.ensemble_size, 10);
  EXPECT_EQ(config.hp.eta, 1.0);
  EXPECT_EQ(config.hp.lambda_bc, 0.01);
  auto snapshot = config_snapshot(config);
  EXPECT_TRUE(contains_line(snapshot, "n-ensemble=10")) << snapshot;
  EXPECT_TRUE(contains_line(snapshot, "eta=1")) << snapshot;
  EXPECT_TRUE(contains_line(snapshot, "lambda=0.01")) << snapshot;
  EXPECT_TRUE(contains_line(snapshot, "max-steps=1000000"));
  EXPECT_TRUE(contains_line(snapshot, "eval-freq=5000"));
  EXPECT_TRUE(contains_line(snapshot, "target-update-freq=250"));
  EXPECT_TRUE(contains_line(snapshot, "batch-size=256"));
}

TEST(TrainArgs, HopperExpertTasksUseStrongerCloning) {
  EXPECT_EQ(parse_train_args({"--chain", "5", "--env", "hopper-expert-v2"}).hp.lambda_bc, 0.05);
  EXPECT_EQ(parse_train_args({"--chain", "5", "--env", "hopper-medium-expert-v2"}).hp.lambda_bc, 0.05);
  EXPECT_EQ(parse_train_args({"--chain", "5", "--env", "hopper-medium-v2"}).hp.lambda_bc, 0.01);
  EXPECT_EQ(parse_train_args({"--chain", "5", "--env", "hopper-expert-v2", "--lambda", "0.2"}).hp.lambda_bc, 0.2);
}

TEST(TrainArgs, PessqRejectsNonzeroEta) {
  EXPECT_THROW(parse_train_args({"--chain", "5", "--target-mode", "pessq", "--eta", "5"}), UsageError);
  auto config = parse_train_args({"--chain", "5", "--target-mode", "pessq"});
  EXPECT_EQ(config.hp.eta, 0.0);
  EXPECT_EQ(config.hp.target_mode, TargetMode::kPessQ);
  EXPECT_NO_THROW(parse_train_args({"--chain", "5", "--target-mode", "pessq", "--eta", "0"}));
}

TEST(TrainArgs, ExactlyOneDataSource) {
  EXPECT_THROW(parse_train_args({"--max-steps", "10"}), UsageError);
  EXPECT_THROW(parse_train_args({"--chain", "5", "--dataset", "x.hdf5"}), UsageError);
  EXPECT_NO_THROW(parse_train_args({"--dataset", "x.hdf5"}));
}

TEST(TrainArgs, RepeatableSeedsAndAblations) {
  auto config = parse_train_args({"--chain", "5", "--seed", "1", "--seed", "4", "--seed", "9", "--ablate", "lap",
                                  "--ablate", "sale", "--bc-weight", "batch-mean"});
  EXPECT_EQ(config.seeds, (std::vector<std::uint64_t>{1, 4, 9}));
  EXPECT_TRUE(config.hp.ablations.lap);
  EXPECT_TRUE(config.hp.ablations.sale);
  EXPECT_FALSE(config.hp.ablations.ensemble);
  EXPECT_EQ(config.hp.bc_weighting, BcWeighting::kBatchMean);
  EXPECT_THROW(parse_train_args({"--chain", "5", "--ablate", "encoder"}), UsageError);
  EXPECT_THROW(parse_train_args({"--chain", "5", "--target-mode", "meanq"}), UsageError);
}

TEST(TrainArgs, ConfigFileWithFlagOverride) {
  auto dir = scratch("config_file");
  std::ofstream(dir / "run.ini") << "chain=6\nn-ensemble=4\neta=2.5\nlambda=0.3\nseed=[3,5]\nablate=[\"lap\"]\n";
  auto config = parse_train_args({"--config", (dir / "run.ini").string(), "--eta", "0.5"});
  ASSERT_TRUE(config.chain.has_value());
  EXPECT_EQ(config.chain->n_states, 6);
  EXPECT_EQ(config.hp.ensemble_size, 4);
  EXPECT_EQ(config.hp.eta, 0.5);
  EXPECT_EQ(config.hp.lambda_bc, 0.3);
  EXPECT_EQ(config.seeds, (std::vector<std::uint64_t>{3, 5}));
  EXPECT_TRUE(config.hp.ablations.lap);
}

TEST(TrainArgs, SnapshotRoundTripsThroughConfigFile) {
  auto dir = scratch("snapshot_round_trip");
  auto original = parse_train_args(with(quick_chain_args(dir / "a"), {"--ablate", "sale", "--target-mode", "pessq",
                                                                       "--seed", "2", "--seed", "7", "--gamma", "0.95"}));
  std::ofstream(dir / "snap.ini") << config_snapshot(original);
  auto reparsed = parse_train_args({"--config", (dir / "snap.ini").string()});
  EXPECT_EQ(config_snapshot(reparsed), config_snapshot(original));
}

TEST(FinalWindow, MeanAndPopulationStdOfLastTen) {
  std::vector<double> scores{100, 100, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  auto [mean, sd] = final_window_stats(scores);
  EXPECT_DOUBLE_EQ(mean, 5.5);
  EXPECT_NEAR(sd, std::sqrt(8.25), 1e-12);
  auto [m1, s1] = final_window_stats({4.0});
  EXPECT_EQ(m1, 4.0);
  EXPECT_EQ(s1, 0.0);
}

TEST(Metrics, JsonLineRoundTripWithoutWallTime) {
  MetricsRecord r;
  r.step = 12;
  r.critic_loss = 0.25;
  r.es_penalty_value = 1.5;
  r.actor_loss = -3.0;
  r.mean_q_min = 0.75;
  r.eval_mean_return = 1.0;
  r.wall_time_s = 9.0;
  auto line = r.to_json_line();
  EXPECT_EQ(line.find("wall_time_s"), std::string::npos);
  auto parsed = MetricsRecord::from_json_line(line);
  EXPECT_EQ(parsed.step, 12);
  EXPECT_EQ(parsed.actor_loss, -3.0);
  EXPECT_FALSE(parsed.encoder_loss.has_value());
  EXPECT_FALSE(parsed.normalized_score.has_value());
  EXPECT_EQ(MetricsRecord::from_json_line(r.to_json_line(true)).wall_time_s, 9.0);
}

TEST(Metrics, LogRequiresIncreasingStepsAndTruncates) {
  auto dir = scratch("metrics_log");
  {
    MetricsLog log(dir / "m.jsonl", dir / "t.jsonl");
    for (std::int64_t s : {1, 2, 5}) {
      MetricsRecord r;
      r.step = s;
      log.append(r);
    }
    MetricsRecord back;
    back.step = 5;
    EXPECT_THROW(log.append(back), std::logic_error);
  }
  EXPECT_EQ(read_metrics(dir / "m.jsonl").size(), 3u);
  EXPECT_EQ(read_metrics(dir / "t.jsonl").size(), 3u);
  truncate_metrics(dir / "m.jsonl", 2);
  auto kept = read_metrics(dir / "m.jsonl");
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept.back().step, 2);
}

TEST(RunExperiment, EnsembleAblationLogsZeroPenaltyEveryStep) {
  auto dir = scratch("ablate_ensemble");
  auto config = parse_train_args(with(quick_chain_args(dir), {"--ablate", "ensemble"}));
  ASSERT_EQ(run_experiment(config), 0);
  auto records = read_metrics(dir / "seed_0" / "metrics.jsonl");
  ASSERT_EQ(records.size(), 20u);
  for (std::size_t k = 0; k < records.size(); ++k) {
    EXPECT_EQ(records[k].step, static_cast<std::int64_t>(k + 1));
    EXPECT_EQ(records[k].es_penalty_value, 0.0);
  }
  // The full ensemble does produce a penalty on the same data.
  auto full_dir = scratch("full_ensemble");
  ASSERT_EQ(run_experiment(parse_train_args(quick_chain_args(full_dir))), 0);
  double total = 0.0;
  for (const auto& r : read_metrics(full_dir / "seed_0" / "metrics.jsonl")) total += std::abs(r.es_penalty_value);
  EXPECT_GT(total, 0.0);
}

TEST(RunExperiment, WritesArtifactsAndSummary) {
  auto dir = scratch("artifacts");
  auto config = parse_train_args(with(quick_chain_args(dir), {"--seed", "0", "--seed", "1", "--checkpoint-freq", "10"}));
  ASSERT_EQ(run_experiment(config), 0);
  EXPECT_TRUE(fs::exists(dir / "config.ini"));
  for (const char* seed : {"seed_0", "seed_1"}) {
    EXPECT_TRUE(fs::exists(dir / seed / "metrics.jsonl"));
    EXPECT_TRUE(fs::exists(dir / seed / "timing.jsonl"));
    EXPECT_TRUE(fs::exists(dir / seed / "checkpoints" / "20" / "config.ini"));
    EXPECT_FALSE(fs::exists(dir / seed / "checkpoints" / "10"));  // pruned, one kept
  }
  auto summary = nlohmann::json::parse(read_file(dir / "summary.json"));
  EXPECT_EQ(summary["metric"], "eval_mean_return");
  ASSERT_EQ(summary["seeds"].size(), 2u);
  EXPECT_EQ(summary["seeds"][0]["evaluations"], 4);
}

TEST(RunExperiment, SnapshotReproducesMetrics) {
  auto dir = scratch("reproduce");
  ASSERT_EQ(run_experiment(parse_train_args(quick_chain_args(dir / "first"))), 0);
  ASSERT_EQ(run_experiment(parse_train_args(
                {"--config", (dir / "first" / "config.ini").string(), "--out", (dir / "second").string()})),
            0);
  const auto a = read_file(dir / "first" / "seed_0" / "metrics.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read_file(dir / "second" / "seed_0" / "metrics.jsonl"));
}

TEST(RunExperiment, ResumeMatchesUninterruptedRun) {
  auto dir = scratch("resume");
  ASSERT_EQ(run_experiment(parse_train_args(quick_chain_args(dir / "full", 20))), 0);
  ASSERT_EQ(run_experiment(parse_train_args(with(quick_chain_args(dir / "split", 10), {"--checkpoint-freq", "5"}))), 0);
  ASSERT_EQ(run_experiment(parse_train_args(with(quick_chain_args(dir / "split", 20), {"--resume"}))), 0);
  EXPECT_EQ(read_file(dir / "full" / "seed_0" / "metrics.jsonl"), read_file(dir / "split" / "seed_0" / "metrics.jsonl"));
}

TEST(PlotCurves, ZeroWidthBandsAndCsv) {
  auto dir = scratch("plot");
  ASSERT_EQ(run_experiment(parse_train_args(quick_chain_args(dir / "single"))), 0);
  // Two identical seeds.
  fs::create_directories(dir / "twin");
  fs::copy(dir / "single" / "seed_0", dir / "twin" / "seed_0", fs::copy_options::recursive);
  fs::copy(dir / "single" / "seed_0", dir / "twin" / "seed_1", fs::copy_options::recursive);

  auto curves = plot_learning_curves({dir / "single", dir / "twin"}, dir / "curves.png");
  ASSERT_EQ(curves.size(), 2u);
  for (const auto& c : curves) {
    ASSERT_EQ(c.points.size(), 4u);  // evaluations at 5, 10, 15, 20
    for (const auto& p : c.points) EXPECT_EQ(p.std, 0.0);
  }
  EXPECT_EQ(curves[1].points[0].seeds, 2u);
  EXPECT_EQ(curves[0].points[2].mean, curves[1].points[2].mean);

  const auto png = read_file(dir / "curves.png");
  ASSERT_GE(png.size(), 8u);
  EXPECT_EQ(png.substr(1, 3), "PNG");
  std::ifstream csv(dir / "curves.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "label,step,mean,std,seeds");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) rows += line.empty() ? 0 : 1;
  EXPECT_EQ(rows, 8u);
}

TEST(PlotCurves, MissingMetricsIsAnError) {
  auto dir = scratch("plot_empty");
  EXPECT_THROW(plot_learning_curves({dir}, dir / "out.png"), std::runtime_error);
}

TEST(CommandLine, ExitCodes) {
  auto dir = scratch("binary");
  const std::string bin = EDTD7_CLI_BINARY;
  const auto quiet = " > " + (dir / "log.txt").string() + " 2>&1";
  auto status = [](int raw) { return WEXITSTATUS(raw); };
  EXPECT_EQ(status(std::system((bin + " train --chain 5 --target-mode pessq --eta 5" + quiet).c_str())), 2);
  EXPECT_EQ(status(std::system((bin + " train --dataset " + (dir / "missing.hdf5").string() + " --out " +
                                (dir / "run").string() + quiet).c_str())),
            1);
  EXPECT_EQ(status(std::system((bin + " oracle --states 5" + quiet).c_str())), 0);
  EXPECT_NE(read_file(dir / "log.txt").find("0.970299"), std::string::npos);
  EXPECT_EQ(status(std::system((bin + " generate-chain --states 3 --transitions 50 --out " +
                                (dir / "chain.hdf5").string() + quiet).c_str())),
            0);
  EXPECT_TRUE(fs::exists(dir / "chain.hdf5"));
}
