#include "preln/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>

namespace preln {

std::string_view to_string(Precision p) { return p == Precision::Double ? "double" : "single"; }

Precision parse_precision(std::string_view s) {
  if (s == "double") return Precision::Double;
  if (s == "single") return Precision::Single;
  throw std::invalid_argument("unknown precision '" + std::string(s) + "'");
}

std::string_view to_string(RunStatus s) { return s == RunStatus::Completed ? "completed" : "diverged"; }

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (!(lr_peak > 0.0)) fail("lr_peak must be positive");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) fail("warmup_fraction must be in (0, 1)");
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must be in (0, 1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in (0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
  if (log_every < 1) fail("log_every must be >= 1");
  if (spike_window < 10) fail("spike_window must be >= 10");
  if (!(spike_factor > 0.0)) fail("spike_factor must be positive");
}

int warmup_steps(const TrainConfig& c) {
  return std::max(1, static_cast<int>(std::lround(c.warmup_fraction * c.total_steps)));
}

double lr_at(int step, const TrainConfig& c) {
  if (step < 0 || step >= c.total_steps) throw std::out_of_range("lr_at: step out of range");
  const int w = warmup_steps(c);
  if (step <= w) return c.lr_peak * step / w;
  const double floor = 0.1 * c.lr_peak;
  const double progress = static_cast<double>(step - w) / static_cast<double>(c.total_steps - w);
  return floor + (c.lr_peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename S>
double global_grad_norm(const Gradients<S>& g) {
  double sum = 0.0;
  for_each_tensor(g, [&](const std::string&, const Matrix<S>& m) {
    sum += m.template cast<double>().squaredNorm();
  });
  return std::sqrt(sum);
}

template <typename S>
double clip_gradients(Gradients<S>& g, double clip_norm) {
  const double norm = global_grad_norm(g);
  if (!std::isfinite(norm)) throw NonFiniteGradient("non-finite gradient norm");
  if (norm > clip_norm) {
    const S scale = static_cast<S>(clip_norm / norm);
    for_each_tensor(g, [&](const std::string&, Matrix<S>& m) { m *= scale; });
  }
  return norm;
}

template <typename S>
void adam_step(Parameters<S>& params, const Gradients<S>& grads, OptimizerState<S>& state, double lr,
               const TrainConfig& c) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.adam_beta2, static_cast<double>(state.step));
  std::vector<Matrix<S>*> p_list, m_list, v_list;
  std::vector<const Matrix<S>*> g_list;
  std::vector<bool> decay;
  for_each_tensor(params, [&](const std::string& name, Matrix<S>& m) {
    p_list.push_back(&m);
    decay.push_back(name != "embedding" && name != "positional");
  });
  for_each_tensor(state.m, [&](const std::string&, Matrix<S>& m) { m_list.push_back(&m); });
  for_each_tensor(state.v, [&](const std::string&, Matrix<S>& m) { v_list.push_back(&m); });
  for_each_tensor(grads, [&](const std::string&, const Matrix<S>& m) { g_list.push_back(&m); });
  if (g_list.size() != p_list.size() || m_list.size() != p_list.size() || v_list.size() != p_list.size()) {
    throw std::invalid_argument("adam_step: state does not match parameters");
  }
  const S b1 = S(c.adam_beta1), b2 = S(c.adam_beta2);
  const S step = S(lr / bc1), inv_bc2 = S(1.0 / bc2), eps = S(c.adam_eps);
  const S shrink = S(1.0 - lr * c.weight_decay);
  for (std::size_t i = 0; i < p_list.size(); ++i) {
    auto p = p_list[i]->array();
    auto m = m_list[i]->array();
    auto v = v_list[i]->array();
    const auto g = g_list[i]->array();
    if (g.size() != p.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (decay[i] && c.weight_decay > 0.0) p *= shrink;
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.square();
    p -= step * m / ((v * inv_bc2).sqrt() + eps);
  }
}

std::optional<SpikeEvent> spike_at(std::span<const TrainLogRecord> log, std::size_t t, int window,
                                   double factor) {
  if (window < 1 || t < static_cast<std::size_t>(window) || t >= log.size()) return std::nullopt;
  std::vector<double> trailing;
  trailing.reserve(static_cast<std::size_t>(window));
  for (std::size_t i = t - static_cast<std::size_t>(window); i < t; ++i) {
    trailing.push_back(log[i].grad_norm_preclip);
  }
  std::sort(trailing.begin(), trailing.end());
  const std::size_t h = trailing.size() / 2;
  const double median = trailing.size() % 2 ? trailing[h] : 0.5 * (trailing[h - 1] + trailing[h]);
  if (!(median > 0.0)) return std::nullopt;
  const double g = log[t].grad_norm_preclip;
  if (!(g > factor * median)) return std::nullopt;
  return SpikeEvent{log[t].step, g, median, g / median};
}

std::vector<SpikeEvent> detect_spikes(std::span<const TrainLogRecord> log, int window, double factor) {
  if (window < 10) throw std::invalid_argument("detect_spikes: window must be >= 10");
  std::vector<SpikeEvent> events;
  for (std::size_t t = 0; t < log.size(); ++t) {
    if (auto e = spike_at(log, t, window, factor)) events.push_back(*e);
  }
  return events;
}

template <typename S>
std::pair<double, Gradients<S>> batch_gradients(const Parameters<S>& params, const ModelConfig& config,
                                                const Batch& batch, Mode mode, RandomSource* rng) {
  const Eigen::Index rows = batch.inputs.rows();
  if (rows < 1) throw std::invalid_argument("batch_gradients: empty batch");
  Gradients<S> total;
  double loss = 0.0;
  std::vector<int> inputs(static_cast<std::size_t>(batch.inputs.cols()));
  std::vector<int> targets(inputs.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      inputs[t] = batch.inputs(r, static_cast<Eigen::Index>(t));
      targets[t] = batch.targets(r, static_cast<Eigen::Index>(t));
    }
    auto fwd = model_forward<S>(inputs, params, config, mode, rng);
    auto ce = cross_entropy(fwd.logits, targets);
    loss += ce.loss;
    Gradients<S> g = model_backward(fwd.cache, params, config, ce.dlogits);
    if (r == 0) {
      total = std::move(g);
    } else {
      std::vector<Matrix<S>*> dst;
      for_each_tensor(total, [&](const std::string&, Matrix<S>& m) { dst.push_back(&m); });
      std::size_t i = 0;
      for_each_tensor(g, [&](const std::string&, const Matrix<S>& m) { *dst[i++] += m; });
    }
  }
  const S inv = S(1.0 / static_cast<double>(rows));
  for_each_tensor(total, [&](const std::string&, Matrix<S>& m) { m *= inv; });
  return {loss / static_cast<double>(rows), std::move(total)};
}

template <typename S>
TrainResult<S> train(Parameters<S> params, const ModelConfig& config, const TrainConfig& tc,
                     BatchStream& data, const StepObserver& observer) {
  config.validate();
  tc.validate();
  TrainResult<S> result;
  OptimizerState<S> state = make_optimizer_state(params);
  const RandomSource run(tc.seed);
  std::vector<TrainLogRecord> all;  // every step, for spike detection
  using clock = std::chrono::steady_clock;
  for (int step = 0; step < tc.total_steps; ++step) {
    const auto start = clock::now();
    const Batch batch = data.next();
    RandomSource dropout = run.fork("dropout", static_cast<std::uint64_t>(step));
    double loss = 0.0;
    Gradients<S> grads;
    try {
      std::tie(loss, grads) = batch_gradients(params, config, batch, Mode::Train, &dropout);
    } catch (const DegenerateInput&) {
      loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(loss)) {
      result.status = RunStatus::Diverged;
      result.diverged_step = step;
      break;
    }
    TrainLogRecord rec;
    rec.step = step;
    rec.lr = lr_at(step, tc);
    rec.train_loss = loss;
    try {
      rec.grad_norm_preclip = clip_gradients(grads, tc.clip_norm);
    } catch (const NonFiniteGradient&) {
      result.status = RunStatus::Diverged;
      result.diverged_step = step;
      break;
    }
    rec.grad_norm_postclip = global_grad_norm(grads);
    adam_step(params, grads, state, rec.lr, tc);
    if (tc.record_wall_time) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    }
    all.push_back(rec);
    result.steps_completed = step + 1;
    result.max_grad_norm = std::max(result.max_grad_norm, rec.grad_norm_preclip);
    if (auto e = spike_at(all, all.size() - 1, tc.spike_window, tc.spike_factor)) {
      result.spikes.push_back(*e);
    }
    if (step % tc.log_every == 0 || step + 1 == tc.total_steps) {
      result.log.push_back(rec);
      if (observer) observer(rec);
    }
  }
  result.params = std::move(params);
  return result;
}

#define PRELN_INSTANTIATE(S)                                                                      \
  template double global_grad_norm<S>(const Gradients<S>&);                                       \
  template double clip_gradients<S>(Gradients<S>&, double);                                       \
  template void adam_step<S>(Parameters<S>&, const Gradients<S>&, OptimizerState<S>&, double,     \
                             const TrainConfig&);                                                 \
  template std::pair<double, Gradients<S>> batch_gradients<S>(const Parameters<S>&, const ModelConfig&, \
                                                             const Batch&, Mode, RandomSource*);  \
  template TrainResult<S> train<S>(Parameters<S>, const ModelConfig&, const TrainConfig&, BatchStream&, \
                                   const StepObserver&);

PRELN_INSTANTIATE(float)
PRELN_INSTANTIATE(double)

}  // namespace preln
