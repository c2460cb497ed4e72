#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "preln/bounds.hpp"
#include "preln/model.hpp"

namespace preln {

// ---------------------------------------------------------------------------
// Gradient check against central finite differences of the scalar loss

struct TensorGradError {
  std::string name;
  double rel_error = 0.0;  // |a - f| / max(|a|, |f|), Frobenius norms
  double analytic_norm = 0.0;
  double fd_norm = 0.0;
};

struct GradCheckReport {
  std::vector<TensorGradError> tensors;
  double max_rel_error = 0.0;
  std::string worst;
  std::uint64_t seed_used = 0;  // differs from the request when ReLU kinks forced a redraw
  bool passed = false;
};

// 2 layers, d=16, d_ffn=32, h=2, L=4, vocab 32, dropout 0.
ModelConfig gradcheck_config(Activation activation, NormKind norm, EmbedMode embed);

// Double precision, eval mode. For EmbedDetach the embedding-table gradient
// is compared with gamma times the finite difference. ReLU draws are redrawn
// until every pre-activation is at least 1e-3 away from the kink.
GradCheckReport gradient_check(const ModelConfig& config, std::uint64_t seed, double eps = 1e-5,
                               double tol = 1e-4);

// ---------------------------------------------------------------------------
// Inequality trials: small random residual sub-layers, finite-difference
// Jacobian norm against the analytic bound

struct InequalityTrial {
  std::uint64_t seed = 0;
  ModelConfig config;
  Initializer init = Initializer::MegatronSmall;
  double input_std = 1.0;
  JacobianProbe ffn;
  JacobianProbe attn;         // unmasked, the setting of the bound
  JacobianProbe attn_causal;  // reported only
};

// Activation, norm, initializer and input scale all vary with the seed.
InequalityTrial inequality_trial(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Named checks behind `preln verify`

struct CheckOutcome {
  bool passed = false;
  std::string detail;
};

struct Check {
  std::string name;
  std::string description;
  std::function<CheckOutcome()> run;
};

const std::vector<Check>& registered_checks();

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Runs every check whose name contains `filter` (all when empty). A check
// that throws counts as failed.
std::vector<CheckResult> run_checks(std::string_view filter,
                                    const std::function<void(const CheckResult&)>& on_result = {});
std::string check_result_json(const CheckResult& r);

}  // namespace preln

namespace preln {

struct SublayerMoments {
  // each layer's outputs divided by that layer's std, then pooled
  MomentStats attn;  // Attn(LN(x))
  MomentStats ffn;   // FFN(LN(x'))
  // raw values pooled across layers (mixes per-layer scales)
  MomentStats attn_raw;
  MomentStats ffn_raw;
  std::vector<MomentStats> attn_layers;
  std::vector<MomentStats> ffn_layers;
};

// Eval-mode forward of `sequences` random token sequences.
SublayerMoments sublayer_output_moments(const Parameters<double>& params, const ModelConfig& config,
                                        int sequences, RandomSource& rng);

}  // namespace preln
