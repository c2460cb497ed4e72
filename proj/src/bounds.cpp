#include "preln/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "preln/format.hpp"

namespace preln {

double ffn_constant(int d, int d_ffn, Activation activation) {
  const double sd = std::sqrt(static_cast<double>(d));
  switch (activation) {
    case Activation::ReLU: {
      const double s = sd + std::sqrt(static_cast<double>(d_ffn / 2));
      return s * s;
    }
    case Activation::SwiGLU: {
      const double s = sd + std::sqrt(static_cast<double>(d_ffn));
      return 2.1 * s * s * std::sqrt(2.0 * d * std::log(static_cast<double>(d_ffn)));
    }
    default: {
      const double s = sd + std::sqrt(static_cast<double>(d_ffn));
      return s * s;
    }
  }
}

double ffn_upper_bound(double sigma1, double sigma2, double sigma_shortcut, int d, int d_ffn,
                       Activation activation, std::optional<double> sigma_v) {
  if (!(sigma_shortcut > 0.0)) throw std::invalid_argument("ffn_upper_bound: shortcut std must be positive");
  if ((activation == Activation::SwiGLU) != sigma_v.has_value()) {
    throw std::invalid_argument("ffn_upper_bound: sigma_v is required for SwiGLU and only for SwiGLU");
  }
  double term = sigma1 * sigma2 / sigma_shortcut * ffn_constant(d, d_ffn, activation);
  if (activation == Activation::SiLU) term *= 1.1;
  if (activation == Activation::SwiGLU) term *= *sigma_v;
  return 1.0 + term;
}

double attn_upper_bound(double sigma_o, double sigma_shortcut, int d, double jz_norm) {
  if (!(sigma_shortcut > 0.0)) throw std::invalid_argument("attn_upper_bound: shortcut std must be positive");
  if (jz_norm < 0.0) throw std::invalid_argument("attn_upper_bound: jz_norm must be >= 0");
  return 1.0 + sigma_o * 2.0 * std::sqrt(static_cast<double>(d)) * jz_norm / sigma_shortcut;
}

double jz_bound(int h, int L, double sigma, int d, int d_head) {
  const double sl = std::sqrt(static_cast<double>(L));
  const double dd = d, dh = d_head;
  return h * ((sl + 2.0 + 1.0 / sl) * sigma * sigma * sigma * std::sqrt(dd * dd * dd * dh) +
              sigma * (std::sqrt(dd) + std::sqrt(dh)));
}

MatrixD ln_jacobian_analytic(const VectorD& x) {
  const Eigen::Index d = x.size();
  if (d < 2) throw std::invalid_argument("ln_jacobian_analytic: d must be >= 2");
  const VectorD c = x.array() - x.mean();
  const double n2 = c.squaredNorm();
  if (!(n2 > 0.0)) throw DegenerateInput("ln_jacobian_analytic: zero-variance input");
  MatrixD j = MatrixD::Identity(d, d) - c * c.transpose() / n2;
  j.array() -= 1.0 / static_cast<double>(d);
  return j * (std::sqrt(static_cast<double>(d)) / std::sqrt(n2));
}

MatrixD rms_jacobian_analytic(const VectorD& x) {
  const Eigen::Index d = x.size();
  if (d < 2) throw std::invalid_argument("rms_jacobian_analytic: d must be >= 2");
  const double n2 = x.squaredNorm();
  if (!(n2 > 0.0)) throw DegenerateInput("rms_jacobian_analytic: zero input");
  const MatrixD j = MatrixD::Identity(d, d) - x * x.transpose() / n2;
  return j * (std::sqrt(static_cast<double>(d)) / std::sqrt(n2));
}

ZzVariance zz_variance_mc(int d, int samples, RandomSource& rng) {
  if (d < 2) throw std::invalid_argument("zz_variance_mc: d must be >= 2");
  if (samples < 1000) throw std::invalid_argument("zz_variance_mc: needs at least 1000 samples");
  RunningMoments diag, off;
  double max_abs = 0.0;
  VectorD z(d);
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < d; ++i) z[i] = rng.normal();
    z.array() -= z.mean();
    z /= std::sqrt(z.squaredNorm() / d);
    diag.add(z.array().square());
    // z_i z_{i+1} (cyclic): d off-diagonal entries per draw
    VectorD shifted(d);
    shifted.head(d - 1) = z.tail(d - 1);
    shifted[d - 1] = z[0];
    off.add(z.array() * shifted.array());
    // the largest |z_i z_j|, i != j, is the product of the two largest |z|
    double a = 0.0, b = 0.0;
    for (int i = 0; i < d; ++i) {
      const double v = std::abs(z[i]);
      if (v > a) {
        b = a;
        a = v;
      } else if (v > b) {
        b = v;
      }
    }
    max_abs = std::max(max_abs, a * b / d);
  }
  return {diag.std() * diag.std(), off.std() * off.std(), max_abs};
}

double silu_derivative(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

SiluMax silu_derivative_max(double grid_lo, double grid_hi, double grid_step) {
  if (!(grid_step > 0.0) || !(grid_hi > grid_lo)) throw std::invalid_argument("silu_derivative_max: bad grid");
  double best_x = grid_lo, best = silu_derivative(grid_lo);
  const long n = static_cast<long>(std::floor((grid_hi - grid_lo) / grid_step));
  for (long i = 1; i <= n; ++i) {
    const double x = grid_lo + static_cast<double>(i) * grid_step;
    const double v = silu_derivative(x);
    if (v > best) best = v, best_x = x;
  }
  // golden-section refinement around the grid maximum
  double lo = std::max(grid_lo, best_x - grid_step), hi = std::min(grid_hi, best_x + grid_step);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (silu_derivative(a) < silu_derivative(b)) lo = a; else hi = b;
  }
  const double x = 0.5 * (lo + hi);
  if (silu_derivative(x) > best) best = silu_derivative(x), best_x = x;
  return {best_x, best};
}

RmsJacobianCheck rmsnorm_jacobian_check(const VectorD& x) {
  RmsJacobianCheck r;
  r.d = static_cast<int>(x.size());
  r.sigma_x = population_std(x);
  if (!(x.squaredNorm() > 0.0)) throw DegenerateInput("rmsnorm_jacobian_check: zero input");
  const MatrixD j = finite_diff_jacobian([](const VectorD& v) { return rms_norm<double>(v); }, x, 1e-5);
  RandomSource rng(0x5eed);
  r.fd_norm = spectral_norm(j, 1e-9, 5000, rng).value;
  const double inv = 1.0 / r.sigma_x;
  r.norm_rel_dev = std::abs(r.fd_norm - inv) * r.sigma_x;
  MatrixD diff = j;
  diff.diagonal().array() -= inv;
  r.frob_rel_dev = diff.norm() / (inv * std::sqrt(static_cast<double>(r.d)));
  r.op_rel_dev = spectral_norm(diff, 1e-9, 5000, rng).value * r.sigma_x;
  return r;
}

template <typename S>
TensorStds measure_tensor_stds(const LayerParams<S>& p) {
  TensorStds s;
  s.sigma1 = population_std(p.w1);
  s.sigma2 = population_std(p.w2);
  s.sigma_o = population_std(p.wo);
  s.sigma_qkv = std::max({population_std(p.wq), population_std(p.wk), population_std(p.wv)});
  if (p.v.size() > 0) s.sigma_v = population_std(p.v);
  return s;
}

LayerBound evaluate_layer_bound(const ModelConfig& config, const TensorStds& stds,
                                const SublayerStats& stats) {
  LayerBound b;
  b.layer = stats.layer;
  b.sigma_x = stats.sigma_x;
  b.sigma_x_prime = stats.sigma_x_prime;
  b.stds = stds;
  b.c_ffn = ffn_constant(config.d, config.d_ffn, config.activation);
  b.ffn_bound = ffn_upper_bound(stds.sigma1, stds.sigma2, stats.sigma_x_prime, config.d, config.d_ffn,
                                config.activation,
                                config.activation == Activation::SwiGLU ? stds.sigma_v : std::nullopt);
  b.jz = jz_bound(config.num_heads, config.seq_len, stds.sigma_qkv, config.d, config.d_head());
  b.c_attn = 2.0 * std::sqrt(static_cast<double>(config.d)) * b.jz;
  b.attn_bound = attn_upper_bound(stds.sigma_o, stats.sigma_x, config.d, b.jz);
  return b;
}

template <typename S>
BoundReport layerwise_bound_report(const Parameters<S>& params, const ModelConfig& config,
                                   std::span<const SublayerStats> stats, std::string scheme) {
  BoundReport r;
  r.scheme = std::move(scheme);
  for (std::size_t n = 0; n < params.layers.size(); ++n) {
    const int layer = static_cast<int>(n) + 1;
    const auto it = std::find_if(stats.begin(), stats.end(),
                                 [&](const SublayerStats& s) { return s.layer == layer; });
    if (it == stats.end()) {
      throw std::invalid_argument("layerwise_bound_report: no stats for layer " + std::to_string(layer));
    }
    r.layers.push_back(evaluate_layer_bound(config, measure_tensor_stds(params.layers[n]), *it));
  }
  return r;
}

std::string bound_csv_header() {
  return "layer,sigma_x,sigma_x_prime,sigma1,sigma2,sigma_O,ffn_bound,attn_bound,scheme";
}

std::string bound_csv_row(const LayerBound& b, const std::string& scheme) {
  std::ostringstream s;
  s << b.layer << ',' << format_number(b.sigma_x) << ',' << format_number(b.sigma_x_prime) << ','
    << format_number(b.stds.sigma1) << ',' << format_number(b.stds.sigma2) << ','
    << format_number(b.stds.sigma_o) << ',' << format_number(b.ffn_bound) << ','
    << format_number(b.attn_bound) << ',' << scheme;
  return s.str();
}

void write_bound_csv(std::ostream& out, const BoundReport& report) {
  out << bound_csv_header() << '\n';
  for (const auto& row : report.layers) out << bound_csv_row(row, report.scheme) << '\n';
}

std::vector<AttnVarianceRow> attn_variance_vs_length(int d, double var_wo, double var_wv, double var_x,
                                                     std::span<const int> lengths, int samples,
                                                     RandomSource& rng) {
  if (d < 1 || samples < 1) throw std::invalid_argument("attn_variance_vs_length: bad sizes");
  std::vector<AttnVarianceRow> rows;
  for (int L : lengths) {
    if (L < 1) throw std::invalid_argument("attn_variance_vs_length: L must be positive");
    RunningMoments m;
    LayerParams<double> p;
    p.wq = MatrixD::Zero(d, d);
    for (int s = 0; s < samples; ++s) {
      p.wk = gaussian_matrix(d, d, 0.0, 1.0, rng);
      p.wv = gaussian_matrix(d, d, 0.0, std::sqrt(var_wv), rng);
      p.wo = gaussian_matrix(d, d, 0.0, std::sqrt(var_wo), rng);
      const MatrixD x = gaussian_matrix(d, L, 0.0, std::sqrt(var_x), rng);
      m.add(attention_forward(x, p, 1, false));
    }
    const double var = m.std() * m.std();
    rows.push_back({L, var, var_wo * var_wv * var_x * d * d / L});
  }
  return rows;
}

std::string_view to_string(Sublayer s) { return s == Sublayer::FFN ? "ffn" : "attn"; }

template TensorStds measure_tensor_stds<float>(const LayerParams<float>&);
template TensorStds measure_tensor_stds<double>(const LayerParams<double>&);
template BoundReport layerwise_bound_report<float>(const Parameters<float>&, const ModelConfig&,
                                                   std::span<const SublayerStats>, std::string);
template BoundReport layerwise_bound_report<double>(const Parameters<double>&, const ModelConfig&,
                                                    std::span<const SublayerStats>, std::string);

}  // namespace preln
