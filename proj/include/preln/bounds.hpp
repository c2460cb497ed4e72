#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "preln/model.hpp"
#include "preln/scheme.hpp"

namespace preln {

// ---------------------------------------------------------------------------
// Analytic bounds

// (sqrt(d) + sqrt(d_ffn))^2, with d_ffn halved (integer division) for ReLU and
// the SwiGLU constant 2.1 (sqrt(d) + sqrt(d_ffn))^2 sqrt(2 d ln d_ffn).
double ffn_constant(int d, int d_ffn, Activation activation);

// Upper bound on ||dy/dx'||_2 of the FFN residual sub-layer. SiLU multiplies
// the sub-layer term by 1.1 (the maximum of its derivative); SwiGLU needs sigma_v.
double ffn_upper_bound(double sigma1, double sigma2, double sigma_shortcut, int d, int d_ffn,
                       Activation activation, std::optional<double> sigma_v = std::nullopt);

// 1 + sigma_o (2 sqrt(d)) jz_norm / sigma_shortcut
double attn_upper_bound(double sigma_o, double sigma_shortcut, int d, double jz_norm);

// Bound on ||J^Z||_2 under uniform attention:
// h ((sqrt(L) + 2 + 1/sqrt(L)) sigma^3 sqrt(d^3 d_head) + sigma (sqrt(d) + sqrt(d_head)))
double jz_bound(int h, int L, double sigma, int d, int d_head);

// Exact Jacobian of layer_norm at x:
// (sqrt(d)/|c|)(I - c c^T/|c|^2 - 1 1^T/d), c = x - mean(x).
MatrixD ln_jacobian_analytic(const VectorD& x);
// (sqrt(d)/|x|)(I - x x^T/|x|^2), the Jacobian of rms_norm.
MatrixD rms_jacobian_analytic(const VectorD& x);

struct ZzVariance {
  double diag_var = 0.0;
  double offdiag_var = 0.0;
  double max_abs_entry_over_d = 0.0;  // largest |z_i z_j|/d over i != j and all draws
};

// z = standardized Gaussian vector of size d; variance of z_i z_i and z_i z_j.
ZzVariance zz_variance_mc(int d, int samples, RandomSource& rng);

double silu_derivative(double x);

struct SiluMax {
  double argmax = 0.0;
  double max = 0.0;
};
SiluMax silu_derivative_max(double grid_lo, double grid_hi, double grid_step);

struct RmsJacobianCheck {
  int d = 0;
  double sigma_x = 0.0;       // population std of x
  double fd_norm = 0.0;       // ||J_fd||_2
  double norm_rel_dev = 0.0;  // | ||J_fd||_2 - 1/sigma_x | * sigma_x
  double frob_rel_dev = 0.0;  // ||J_fd - I/sigma_x||_F / ||I/sigma_x||_F
  double op_rel_dev = 0.0;    // ||J_fd - I/sigma_x||_2 * sigma_x
};
RmsJacobianCheck rmsnorm_jacobian_check(const VectorD& x);

// ---------------------------------------------------------------------------
// Measured statistics and reports

struct SublayerStats {
  int layer = 0;
  double sigma_x = 0.0;        // std of the attention shortcut x
  double sigma_x_prime = 0.0;  // std of the FFN shortcut x'
  std::size_t samples = 0;
};

// Eval-mode forward passes over `probe_batches` random token sequences; stds
// are pooled over all positions and sequences.
template <typename S>
std::vector<SublayerStats> measure_shortcut_stats(const Parameters<S>& params, const ModelConfig& config,
                                                  int probe_batches, RandomSource& rng);

struct TensorStds {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double sigma_o = 0.0;
  double sigma_qkv = 0.0;  // max over W_Q, W_K, W_V; fed to jz_bound
  std::optional<double> sigma_v;
};

template <typename S>
TensorStds measure_tensor_stds(const LayerParams<S>& p);

struct LayerBound {
  int layer = 0;
  double sigma_x = 0.0;
  double sigma_x_prime = 0.0;
  TensorStds stds;
  double c_ffn = 0.0;
  double jz = 0.0;
  double c_attn = 0.0;  // 2 sqrt(d) jz
  double ffn_bound = 1.0;
  double attn_bound = 1.0;
};

LayerBound evaluate_layer_bound(const ModelConfig& config, const TensorStds& stds,
                                const SublayerStats& stats);

struct BoundReport {
  std::string scheme;
  std::vector<LayerBound> layers;
};

template <typename S>
BoundReport layerwise_bound_report(const Parameters<S>& params, const ModelConfig& config,
                                   std::span<const SublayerStats> stats, std::string scheme = "");

// layer,sigma_x,sigma_x_prime,sigma1,sigma2,sigma_O,ffn_bound,attn_bound,scheme
void write_bound_csv(std::ostream& out, const BoundReport& report);
std::string bound_csv_header();
std::string bound_csv_row(const LayerBound& row, const std::string& scheme);

struct StreamProbeOptions {
  int probe_batches = 1;
  int probe_seq_len = 0;   // 0: config.seq_len
  int layers = -1;         // probe only the first `layers` layers; -1: all
  bool single_precision = false;
};

// Same numbers as init_parameters + measure_shortcut_stats + layerwise_bound_report,
// but weights are generated one layer at a time and only the embedding rows
// that the probe tokens touch are materialized. Schemes sharing an
// initializer share the sampled layers. `init` is the parameter stream,
// `probe` the stream for the probe tokens.
std::vector<BoundReport> stream_bound_reports(const ModelConfig& config,
                                              std::span<const SchemeSpec> schemes,
                                              const RandomSource& init, const RandomSource& probe,
                                              const StreamProbeOptions& options = {});

// ---------------------------------------------------------------------------
// Jacobian probes

enum class Sublayer { FFN, Attn };
std::string_view to_string(Sublayer s);

struct JacobianProbe {
  Sublayer sublayer = Sublayer::FFN;
  double empirical = 0.0;  // ||d(residual sub-layer)/d(input)||_2 by finite differences
  double bound = 0.0;
  double slack = 0.0;      // bound - empirical
  double sigma_shortcut = 0.0;
};

inline constexpr int kProbeMaxD = 64;
inline constexpr int kProbeMaxL = 8;

// x is the d x L sub-layer input (x for Attn, x' for FFN). The Jacobian is
// taken over the whole flattened sequence. sigma_shortcut is the smallest
// per-position std of x.
JacobianProbe probe_sublayer_jacobian(const LayerParams<double>& p, Sublayer sublayer,
                                      const MatrixD& x, const ModelConfig& config);

struct AttnVarianceRow {
  int L = 0;
  double mc_var = 0.0;
  double analytic_var = 0.0;  // var(W_O) var(W_V) var(x) d^2 / L
};

// Single head, W_Q = 0 (uniform attention), no mask, no normalization.
std::vector<AttnVarianceRow> attn_variance_vs_length(int d, double var_wo, double var_wv, double var_x,
                                                     std::span<const int> lengths, int samples,
                                                     RandomSource& rng);

}  // namespace preln
