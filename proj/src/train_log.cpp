#include <json.hpp>

#include <ostream>

#include "preln/experiment.hpp"

namespace preln {

using nlohmann::ordered_json;

namespace {

ordered_json config_object(const RunConfig& config) {
  ordered_json j = ordered_json::object();
  const std::string text = serialize_run_config(config);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

}  // namespace

std::string train_log_header(const RunConfig& config) {
  ordered_json j;
  j["type"] = "header";
  j["artifact_version"] = kArtifactVersion;
  j["scheme"] = config.scheme.name;
  j["seed"] = config.train.seed;
  j["config"] = config_object(config);
  return j.dump();
}

std::string train_log_step(const TrainLogRecord& r) {
  ordered_json j;
  j["type"] = "step";
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["train_loss"] = r.train_loss;
  j["grad_norm_preclip"] = r.grad_norm_preclip;
  j["grad_norm_postclip"] = r.grad_norm_postclip;
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

std::string train_log_spike(const SpikeEvent& e) {
  ordered_json j;
  j["type"] = "spike";
  j["step"] = e.step;
  j["grad_norm"] = e.grad_norm;
  j["trailing_median"] = e.trailing_median;
  j["ratio"] = e.ratio;
  return j.dump();
}

void write_train_log(std::ostream& out, const RunConfig& config, const RunOutcome& outcome) {
  out << train_log_header(config) << '\n';
  for (const auto& r : outcome.log) out << train_log_step(r) << '\n';
  for (const auto& e : outcome.spikes) out << train_log_spike(e) << '\n';
}

std::string summary_json(const RunConfig& config, const RunSummary& s) {
  ordered_json j;
  j["scheme"] = config.scheme.name;
  j["seed"] = config.train.seed;
  j["status"] = to_string(s.status);
  j["steps_completed"] = s.steps_completed;
  if (std::isfinite(s.final_loss)) {
    j["final_loss"] = s.final_loss;
  } else {
    j["final_loss"] = nullptr;
  }
  j["max_grad_norm"] = s.max_grad_norm;
  j["spike_count"] = s.spike_count;
  if (s.diverged_step) {
    j["diverged_step"] = *s.diverged_step;
  } else {
    j["diverged_step"] = nullptr;
  }
  return j.dump(2);
}

}  // namespace preln
