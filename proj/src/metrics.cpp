#include "edtd7/metrics.hpp"

#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace edtd7 {

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_value(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string MetricsRecord::to_json_line(bool include_wall_time) const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["critic_loss"] = critic_loss;
  j["es_penalty_value"] = es_penalty_value;
  j["encoder_loss"] = optional_json(encoder_loss);
  j["actor_loss"] = optional_json(actor_loss);
  j["mean_q_min"] = mean_q_min;
  j["eval_mean_return"] = optional_json(eval_mean_return);
  j["normalized_score"] = optional_json(normalized_score);
  if (include_wall_time) j["wall_time_s"] = wall_time_s;
  return j.dump();
}

MetricsRecord MetricsRecord::from_json_line(const std::string& line) {
  auto j = nlohmann::json::parse(line);
  MetricsRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.critic_loss = j.value("critic_loss", 0.0);
  r.es_penalty_value = j.value("es_penalty_value", 0.0);
  r.encoder_loss = optional_value(j, "encoder_loss");
  r.actor_loss = optional_value(j, "actor_loss");
  r.mean_q_min = j.value("mean_q_min", 0.0);
  r.eval_mean_return = optional_value(j, "eval_mean_return");
  r.normalized_score = optional_value(j, "normalized_score");
  r.wall_time_s = j.value("wall_time_s", 0.0);
  return r;
}

MetricsLog::MetricsLog(const std::filesystem::path& metrics_path, const std::filesystem::path& timing_path)
    : metrics_(metrics_path, std::ios::app), timing_(timing_path, std::ios::app) {
  if (!metrics_ || !timing_) throw std::runtime_error("cannot open metrics log in " + metrics_path.parent_path().string());
  for (const auto& r : read_metrics(metrics_path)) last_step_ = r.step;
}

void MetricsLog::append(const MetricsRecord& record) {
  if (record.step <= last_step_) throw std::logic_error("metrics steps must be strictly increasing");
  last_step_ = record.step;
  metrics_ << record.to_json_line() << '\n';
  metrics_.flush();
  nlohmann::ordered_json t;
  t["step"] = record.step;
  t["wall_time_s"] = record.wall_time_s;
  timing_ << t.dump() << '\n';
  timing_.flush();
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::vector<MetricsRecord> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(MetricsRecord::from_json_line(line));
  }
  return out;
}

void truncate_metrics(const std::filesystem::path& path, std::int64_t max_step) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::ostringstream kept;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (nlohmann::json::parse(line).at("step").get<std::int64_t>() <= max_step) kept << line << '\n';
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << kept.str();
}

}  // namespace edtd7
