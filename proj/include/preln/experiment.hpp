#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "preln/bounds.hpp"
#include "preln/config.hpp"
#include "preln/trainer.hpp"

namespace preln {

inline constexpr std::string_view kArtifactVersion = "1.0.0";

// Parameter stream for a run seed; bounds, train and compare all use it, so
// a seed names the same initial weights everywhere.
inline RandomSource init_stream(std::uint64_t seed) { return RandomSource(seed).fork("init"); }
inline RandomSource probe_stream(std::uint64_t seed) { return RandomSource(seed).fork("probe"); }

struct RunSummary {
  double final_loss = std::numeric_limits<double>::quiet_NaN();  // last step's training loss
  double max_grad_norm = 0.0;                                    // largest pre-clip norm
  int spike_count = 0;
  RunStatus status = RunStatus::Completed;
  std::optional<int> diverged_step;
  int steps_completed = 0;
};

struct RunOutcome {
  RunSummary summary;
  std::vector<TrainLogRecord> log;
  std::vector<SpikeEvent> spikes;
  Parameters<double> params;
};

// Corpus from config.data, weights from init_stream(config.train.seed),
// precision from config.train.precision.
RunOutcome run_training(const RunConfig& config, const StepObserver& observer = {});

// JSONL: one header object, one object per logged step, then one per spike.
std::string train_log_header(const RunConfig& config);
std::string train_log_step(const TrainLogRecord& r);
std::string train_log_spike(const SpikeEvent& e);
void write_train_log(std::ostream& out, const RunConfig& config, const RunOutcome& outcome);
std::string summary_json(const RunConfig& config, const RunSummary& s);

// Init-time bounds for one config (materialized model, double precision).
BoundReport init_bound_report(const RunConfig& config, std::uint64_t seed);

struct CompareOptions {
  std::vector<SchemeSpec> schemes;
  std::vector<std::uint64_t> seeds;
  std::vector<double> lrs;    // empty: train.lr_peak
  std::vector<int> seq_lens;  // empty: model.seq_len
  bool token_budget = false;  // keep batch x L at train.batch_size x model.seq_len
};

struct CompareRow {
  std::string scheme;
  std::uint64_t seed = 0;
  double lr = 0.0;
  int seq_len = 0;
  int batch_size = 0;
  RunSummary summary;
  std::string error;  // non-empty when the run could not be carried out
  double layer1_ffn_bound = std::numeric_limits<double>::quiet_NaN();
  double layer1_attn_bound = std::numeric_limits<double>::quiet_NaN();

  int tokens_per_step() const { return batch_size * seq_len; }
};

struct CompareBounds {
  std::string scheme;
  std::uint64_t seed = 0;
  int seq_len = 0;
  BoundReport report;
};

struct CompareResult {
  std::vector<CompareRow> rows;  // schemes x seeds x lrs x seq_lens, in that nesting order
  std::vector<CompareBounds> bounds;
};

using CompareProgress = std::function<void(const CompareRow&)>;

CompareResult compare_schemes(const RunConfig& base, const CompareOptions& options,
                              const CompareProgress& progress = {});

void write_compare_csv(std::ostream& out, const CompareResult& result);
void write_compare_bounds_csv(std::ostream& out, const CompareResult& result);

}  // namespace preln
