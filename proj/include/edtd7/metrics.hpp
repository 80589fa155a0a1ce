#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace edtd7 {

struct MetricsRecord {
  std::int64_t step = 0;
  double critic_loss = 0.0;
  double es_penalty_value = 0.0;
  std::optional<double> encoder_loss;
  std::optional<double> actor_loss;
  double mean_q_min = 0.0;
  std::optional<double> eval_mean_return;
  std::optional<double> normalized_score;
  double wall_time_s = 0.0;

  /// One flat JSON object. wall_time_s is only included on request so that
  /// the default serialization is a pure function of the training run.
  [[nodiscard]] std::string to_json_line(bool include_wall_time = false) const;
  static MetricsRecord from_json_line(const std::string& line);
};

/// Append-only line-delimited log with strictly increasing steps.
class MetricsLog {
 public:
  MetricsLog(const std::filesystem::path& metrics_path, const std::filesystem::path& timing_path);

  void append(const MetricsRecord& record);

 private:
  std::ofstream metrics_;
  std::ofstream timing_;
  std::int64_t last_step_ = -1;
};

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

/// Drops every record with step > max_step (used when resuming).
void truncate_metrics(const std::filesystem::path& path, std::int64_t max_step);

}  // namespace edtd7
