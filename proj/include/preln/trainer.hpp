#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "preln/data.hpp"
#include "preln/model.hpp"

namespace preln {

enum class Precision { Double, Single };
std::string_view to_string(Precision p);
Precision parse_precision(std::string_view s);

struct TrainConfig {
  double lr_peak = 1e-3;
  double warmup_fraction = 0.05;
  int total_steps = 2000;
  int batch_size = 16;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  Precision precision = Precision::Single;
  int log_every = 1;
  int spike_window = 50;
  double spike_factor = 3.0;
  bool record_wall_time = false;  // wall_ms is 0 when off

  void validate() const;  // throws std::invalid_argument
  bool operator==(const TrainConfig&) const = default;
};

int warmup_steps(const TrainConfig& config);

// Linear warmup from 0 to lr_peak, then cosine decay to 0.1 lr_peak.
double lr_at(int step, const TrainConfig& config);

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename S>
double global_grad_norm(const Gradients<S>& g);

// Scales every tensor by clip_norm/norm when norm > clip_norm. Returns the
// norm before clipping.
template <typename S>
double clip_gradients(Gradients<S>& g, double clip_norm);

template <typename S>
struct OptimizerState {
  Parameters<S> m;
  Parameters<S> v;
  long step = 0;
};

template <typename S>
OptimizerState<S> make_optimizer_state(const Parameters<S>& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

// Bias-corrected Adam with decoupled weight decay; the embedding and
// positional tables are not decayed.
template <typename S>
void adam_step(Parameters<S>& params, const Gradients<S>& grads, OptimizerState<S>& state, double lr,
               const TrainConfig& config);

struct TrainLogRecord {
  int step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double grad_norm_preclip = 0.0;
  double grad_norm_postclip = 0.0;
  double wall_ms = 0.0;
};

struct SpikeEvent {
  int step = 0;
  double grad_norm = 0.0;
  double trailing_median = 0.0;
  double ratio = 0.0;
};

// Event at record t (t >= window) when its pre-clip gradient norm exceeds
// factor times the median of the previous `window` records.
std::optional<SpikeEvent> spike_at(std::span<const TrainLogRecord> log, std::size_t t, int window,
                                   double factor);
std::vector<SpikeEvent> detect_spikes(std::span<const TrainLogRecord> log, int window = 50,
                                      double factor = 3.0);

enum class RunStatus { Completed, Diverged };
std::string_view to_string(RunStatus s);

template <typename S>
struct TrainResult {
  Parameters<S> params;
  std::vector<TrainLogRecord> log;
  std::vector<SpikeEvent> spikes;
  RunStatus status = RunStatus::Completed;
  std::optional<int> diverged_step;
  int steps_completed = 0;
  double max_grad_norm = 0.0;  // over every step, logged or not
};

using StepObserver = std::function<void(const TrainLogRecord&)>;

// Each step averages loss and gradients over the rows of one batch.
template <typename S>
TrainResult<S> train(Parameters<S> params, const ModelConfig& config, const TrainConfig& tconfig,
                     BatchStream& data, const StepObserver& observer = {});

// Loss and gradients of one batch, averaged over its rows. `rng` drives
// dropout and may be null in eval mode.
template <typename S>
std::pair<double, Gradients<S>> batch_gradients(const Parameters<S>& params, const ModelConfig& config,
                                                const Batch& batch, Mode mode, RandomSource* rng);

}  // namespace preln
