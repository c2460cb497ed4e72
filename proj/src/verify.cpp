#include "preln/verify.hpp"

#include <json.hpp>

#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "preln/checkpoint.hpp"
#include "preln/config.hpp"
#include "preln/data.hpp"
#include "preln/trainer.hpp"

namespace preln {

// ---------------------------------------------------------------------------
// Gradient check

ModelConfig gradcheck_config(Activation activation, NormKind norm, EmbedMode embed) {
  ModelConfig c;
  c.num_layers = 2;
  c.d = 16;
  c.d_ffn = 32;
  c.num_heads = 2;
  c.seq_len = 4;
  c.vocab_size = 32;
  c.activation = activation;
  c.norm = norm;
  c.embed_mode = embed;
  c.dropout = 0.0;
  return c;
}

namespace {

double min_abs_preactivation(const ForwardCache<double>& cache) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& l : cache.layers) m = std::min(m, l.h_pre.cwiseAbs().minCoeff());
  return m;
}

}  // namespace

GradCheckReport gradient_check(const ModelConfig& config, std::uint64_t seed, double eps, double tol) {
  config.validate();
  GradCheckReport report;
  Parameters<double> params;
  std::vector<int> tokens(static_cast<std::size_t>(config.seq_len)), targets(tokens.size());
  for (int attempt = 0;; ++attempt) {
    const std::uint64_t s = seed + 1000003ull * static_cast<std::uint64_t>(attempt);
    const RandomSource base(s);
    params = init_parameters<double>(config, Initializer::MegatronSmall, base.fork("init"));
    RandomSource tr = base.fork("tokens");
    for (auto& t : tokens) t = static_cast<int>(tr.uniform_int(static_cast<std::uint64_t>(config.vocab_size)));
    for (auto& t : targets) t = static_cast<int>(tr.uniform_int(static_cast<std::uint64_t>(config.vocab_size)));
    report.seed_used = s;
    if (config.activation != Activation::ReLU) break;
    const auto fwd = model_forward<double>(tokens, params, config, Mode::Eval, nullptr);
    if (min_abs_preactivation(fwd.cache) > 1e-3) break;
    if (attempt > 200) throw std::runtime_error("gradient_check: no kink-free ReLU draw found");
  }

  const auto fwd = model_forward<double>(tokens, params, config, Mode::Eval, nullptr);
  const auto ce = cross_entropy(fwd.logits, targets);
  const Gradients<double> analytic = model_backward(fwd.cache, params, config, ce.dlogits);

  auto loss = [&](const Parameters<double>& p) {
    return cross_entropy(model_forward<double>(tokens, p, config, Mode::Eval, nullptr).logits, targets).loss;
  };
  Parameters<double> work = params;
  std::vector<const MatrixD*> analytic_list;
  for_each_tensor(analytic, [&](const std::string&, const MatrixD& m) { analytic_list.push_back(&m); });
  std::size_t index = 0;
  const double gamma = config.embed_mode.gradient_scale();
  for_each_tensor(work, [&](const std::string& name, MatrixD& m) {
    MatrixD fd(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + eps;
      const double up = loss(work);
      m.data()[i] = orig - eps;
      const double down = loss(work);
      m.data()[i] = orig;
      fd.data()[i] = (up - down) / (2.0 * eps);
    }
    if (name == "embedding" || name == "positional") fd *= gamma;
    const MatrixD& a = *analytic_list[index++];
    TensorGradError e{name, 0.0, a.norm(), fd.norm()};
    const double scale = std::max(e.analytic_norm, e.fd_norm);
    const double diff = (a - fd).norm();
    // vanishing gradients are compared absolutely
    e.rel_error = scale > 1e-8 ? diff / scale : diff;
    report.tensors.push_back(e);
    if (e.rel_error >= report.max_rel_error) {
      report.max_rel_error = e.rel_error;
      report.worst = name;
    }
  });
  report.passed = report.max_rel_error <= tol;
  return report;
}

// ---------------------------------------------------------------------------
// Inequality trials

InequalityTrial inequality_trial(std::uint64_t seed) {
  static const Activation acts[] = {Activation::Identity, Activation::ReLU, Activation::SiLU, Activation::SwiGLU};
  static const double scales[] = {0.02, 0.1, 0.5, 1.0, 3.0};
  InequalityTrial t;
  t.seed = seed;
  ModelConfig& c = t.config;
  c.num_layers = 2;
  c.d = seed % 3 == 0 ? 16 : 32;
  c.d_ffn = 2 * c.d;
  c.num_heads = 2;
  c.seq_len = 4 + static_cast<int>(seed % 5);
  c.vocab_size = 16;
  c.activation = acts[seed % 4];
  c.norm = (seed / 4) % 2 == 0 ? NormKind::LayerNorm : NormKind::RMSNorm;
  c.dropout = 0.0;
  c.causal = false;
  t.init = (seed / 8) % 3 == 2 ? Initializer::Xavier : Initializer::MegatronSmall;
  t.input_std = scales[(seed / 2) % 5];
  const RandomSource base(seed);
  const LayerParams<double> p = init_layer<double>(c, t.init, base.fork("weights"), 0);
  RandomSource xr = base.fork("inputs");
  const MatrixD x = gaussian_matrix(c.d, c.seq_len, 0.0, t.input_std, xr);
  const MatrixD x_prime = gaussian_matrix(c.d, c.seq_len, 0.0, t.input_std, xr);
  t.ffn = probe_sublayer_jacobian(p, Sublayer::FFN, x_prime, c);
  t.attn = probe_sublayer_jacobian(p, Sublayer::Attn, x, c);
  ModelConfig causal = c;
  causal.causal = true;
  t.attn_causal = probe_sublayer_jacobian(p, Sublayer::Attn, x, causal);
  return t;
}

// ---------------------------------------------------------------------------
// Sub-layer output distribution

SublayerMoments sublayer_output_moments(const Parameters<double>& params, const ModelConfig& config,
                                        int sequences, RandomSource& rng) {
  const std::size_t layers = static_cast<std::size_t>(config.num_layers);
  std::vector<std::vector<double>> attn(layers), ffn(layers);
  std::vector<int> tokens(static_cast<std::size_t>(config.seq_len));
  for (int s = 0; s < sequences; ++s) {
    for (auto& t : tokens) t = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.vocab_size)));
    const auto fwd = model_forward<double>(tokens, params, config, Mode::Eval, nullptr);
    for (std::size_t n = 0; n < layers; ++n) {
      const auto& l = fwd.cache.layers[n];
      attn[n].insert(attn[n].end(), l.attn_out.data(), l.attn_out.data() + l.attn_out.size());
      ffn[n].insert(ffn[n].end(), l.ffn_out.data(), l.ffn_out.data() + l.ffn_out.size());
    }
  }
  SublayerMoments out;
  auto pool = [&](std::vector<std::vector<double>>& per_layer, std::vector<MomentStats>& stats, MomentStats& raw,
                  MomentStats& standardized) {
    std::vector<double> all_raw, all_std;
    for (auto& v : per_layer) {
      const MomentStats m = sample_stats(Eigen::Map<const VectorD>(v.data(), static_cast<Eigen::Index>(v.size())));
      stats.push_back(m);
      all_raw.insert(all_raw.end(), v.begin(), v.end());
      for (double x : v) all_std.push_back(m.std > 0.0 ? (x - m.mean) / m.std : 0.0);
    }
    raw = sample_stats(Eigen::Map<const VectorD>(all_raw.data(), static_cast<Eigen::Index>(all_raw.size())));
    standardized = sample_stats(Eigen::Map<const VectorD>(all_std.data(), static_cast<Eigen::Index>(all_std.size())));
  };
  pool(attn, out.attn_layers, out.attn_raw, out.attn);
  pool(ffn, out.ffn_layers, out.ffn_raw, out.ffn);
  return out;
}

// ---------------------------------------------------------------------------
// Registry

namespace {

struct Detail {
  std::ostringstream s;
  bool ok = true;
  template <typename T>
  Detail& operator<<(const T& v) {
    s << v;
    return *this;
  }
  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      s << " [FAILED: " << what << "]";
    }
  }
  CheckOutcome done() { return {ok, s.str()}; }
};

bool within_rel(double v, double target, double rel) { return std::abs(v - target) <= rel * std::abs(target); }

CheckOutcome check_zz_variance() {
  Detail out;
  RandomSource rng(12);
  const ZzVariance z = zz_variance_mc(1024, 100000, rng);
  out << "d=1024 diag_var=" << z.diag_var << " offdiag_var=" << z.offdiag_var;
  out.expect(std::abs(z.diag_var - 2.0) <= 0.1, "diag variance 2 +- 0.1");
  out.expect(std::abs(z.offdiag_var - 1.0) <= 0.05, "off-diagonal variance 1 +- 0.05");
  RandomSource rng2(13);
  const ZzVariance big = zz_variance_mc(4096, 1000, rng2);
  out << " d=4096 max|zz^T|/d=" << big.max_abs_entry_over_d;
  out.expect(big.max_abs_entry_over_d < 0.01, "max entry / d < 0.01");
  return out.done();
}

CheckOutcome check_spectral_svd() {
  Detail out;
  RandomSource rng(21);
  double worst = 0.0;
  int non_converged = 0;
  for (int i = 0; i < 30; ++i) {
    const int rows = 1 + static_cast<int>(rng.uniform_int(128));
    const int cols = 1 + static_cast<int>(rng.uniform_int(128));
    const MatrixD m = gaussian_matrix(rows, cols, 0.0, 1.0, rng);
    const auto est = spectral_norm(m, 1e-6, 1000, rng);
    const double exact = Eigen::BDCSVD<MatrixD>(m).singularValues()(0);
    if (!est.converged) ++non_converged;
    worst = std::max(worst, std::abs(est.value - exact) / exact);
  }
  out << "30 matrices up to 128x128, worst rel error " << worst << ", non-converged " << non_converged;
  out.expect(worst <= 1e-6, "power iteration within 1e-6 of SVD");
  out.expect(non_converged == 0, "all converged");
  MatrixD diag = MatrixD::Zero(3, 3);
  diag.diagonal() << 3, 2, 1;
  const double v = spectral_norm(diag, rng).value;
  out << "; diag(3,2,1) -> " << v;
  out.expect(std::abs(v - 3.0) < 1e-6, "diag(3,2,1) = 3");
  return out.done();
}

CheckOutcome check_spectral_law() {
  Detail out;
  for (auto [rows, cols] : {std::pair{256, 1024}, std::pair{512, 2048}}) {
    for (double sigma : {0.01, 0.02}) {
      double mean = 0.0;
      for (int seed = 0; seed < 3; ++seed) {
        RandomSource rng(1000 + seed);
        mean += spectral_norm(gaussian_matrix(rows, cols, 0.0, sigma, rng), rng).value / 3.0;
      }
      const double expected = expected_spectral_norm(sigma, rows, cols);
      out << rows << 'x' << cols << " sigma " << sigma << ": " << mean << " vs " << expected << "; ";
      out.expect(within_rel(mean, expected, 0.03), "within 3%");
    }
  }
  return out.done();
}

CheckOutcome check_spectral_props() {
  Detail out;
  RandomSource rng(31);
  int violations = 0;
  for (int i = 0; i < 10; ++i) {
    const MatrixD a = gaussian_matrix(40, 30, 0.0, 1.0, rng);
    const MatrixD b = gaussian_matrix(30, 50, 0.0, 1.0, rng);
    const MatrixD c = gaussian_matrix(40, 30, 0.0, 1.0, rng);
    const double na = spectral_norm(a, rng).value, nb = spectral_norm(b, rng).value, nc = spectral_norm(c, rng).value;
    if (spectral_norm(MatrixD(a * b), rng).value > na * nb * (1.0 + kSpectralTol)) ++violations;
    if (spectral_norm(MatrixD(a + c), rng).value > na + nc + kSpectralTol) ++violations;
  }
  out << "10 pairs, violations " << violations;
  out.expect(violations == 0, "submultiplicative and subadditive");
  return out.done();
}

CheckOutcome check_ln_jacobian() {
  Detail out;
  RandomSource rng(41);
  const VectorD x = gaussian_matrix(16, 1, 0.3, 1.7, rng).col(0);
  const MatrixD fd = finite_diff_jacobian([](const VectorD& v) { return layer_norm<double>(v); }, x, 1e-5);
  const double err = (fd - ln_jacobian_analytic(x)).cwiseAbs().maxCoeff();
  out << "d=16 max |analytic - fd| = " << err;
  out.expect(err <= 1e-6, "analytic LN Jacobian within 1e-6");
  const VectorD y = gaussian_matrix(1024, 1, 0.0, 1.0, rng).col(0);
  const MatrixD fd_big = finite_diff_jacobian([](const VectorD& v) { return layer_norm<double>(v); }, y, 1e-5);
  const double norm = spectral_norm(fd_big, rng).value;
  const double target = 1.0 / population_std(y);
  out << "; d=1024 ||J||=" << norm << " 1/sigma=" << target;
  out.expect(within_rel(norm, target, 0.02), "within 2% of 1/sigma");
  return out.done();
}

CheckOutcome check_rms_jacobian() {
  Detail out;
  RandomSource rng(43);
  const VectorD x = gaussian_matrix(1024, 1, 0.0, 1.0, rng).col(0);
  const RmsJacobianCheck r = rmsnorm_jacobian_check(x);
  out << "d=1024 ||J||*sigma-1=" << r.norm_rel_dev << " frob_rel_dev=" << r.frob_rel_dev
      << " op_rel_dev=" << r.op_rel_dev;
  out.expect(r.norm_rel_dev < 0.02, "||J|| within 2% of 1/sigma");
  out.expect(r.frob_rel_dev < 0.05, "Frobenius deviation from I/sigma < 5%");
  const MatrixD fd = finite_diff_jacobian([](const VectorD& v) { return rms_norm<double>(v); }, VectorD(x.head(16)), 1e-5);
  const double err = (fd - rms_jacobian_analytic(x.head(16))).cwiseAbs().maxCoeff();
  out << " d=16 rms analytic err=" << err;
  out.expect(err <= 1e-6, "analytic RMSNorm Jacobian within 1e-6");
  return out.done();
}

CheckOutcome check_gradcheck() {
  Detail out;
  int failed = 0, total = 0;
  double worst = 0.0;
  for (auto act : {Activation::Identity, Activation::ReLU, Activation::SiLU, Activation::SwiGLU}) {
    for (auto norm : {NormKind::LayerNorm, NormKind::RMSNorm}) {
      for (auto embed : {EmbedMode::vanilla(), EmbedMode::scaled(), EmbedMode::layer_norm(), EmbedMode::detach()}) {
        const auto r = gradient_check(gradcheck_config(act, norm, embed), 7);
        ++total;
        worst = std::max(worst, r.max_rel_error);
        if (!r.passed) {
          ++failed;
          out << to_string(act) << '/' << to_string(norm) << '/' << to_string(embed.kind) << " worst "
              << r.worst << ' ' << r.max_rel_error << "; ";
        }
      }
    }
  }
  ModelConfig pos = gradcheck_config(Activation::SiLU, NormKind::LayerNorm, EmbedMode::scaled());
  pos.positional = Positional::Learned;
  const auto r = gradient_check(pos, 7);
  ++total;
  worst = std::max(worst, r.max_rel_error);
  if (!r.passed) ++failed;
  out << total << " configurations, worst rel error " << worst;
  out.expect(failed == 0, std::to_string(failed) + " configurations above 1e-4");
  return out.done();
}

CheckOutcome check_embed_detach() {
  Detail out;
  ModelConfig c = gradcheck_config(Activation::SiLU, NormKind::LayerNorm, EmbedMode::vanilla());
  const auto params = init_parameters<double>(c, Initializer::MegatronSmall, RandomSource(5));
  const std::vector<int> tokens = {1, 7, 3, 9}, targets = {7, 3, 9, 2};
  auto grads = [&](const ModelConfig& cfg) {
    const auto f = model_forward<double>(tokens, params, cfg, Mode::Eval, nullptr);
    const auto ce = cross_entropy(f.logits, targets);
    return std::pair{f.logits, model_backward(f.cache, params, cfg, ce.dlogits)};
  };
  ModelConfig d = c;
  d.embed_mode = EmbedMode::detach(0.1);
  const auto [lv, gv] = grads(c);
  const auto [ld, gd] = grads(d);
  out.expect(lv == ld, "logits bit-identical");
  out.expect(gd.embedding == (gv.embedding * 0.1).eval(), "embedding gradient exactly 0.1x");
  bool others = gd.output == gv.output;
  for (std::size_t n = 0; n < gv.layers.size(); ++n) {
    others = others && gd.layers[n].w1 == gv.layers[n].w1 && gd.layers[n].wq == gv.layers[n].wq &&
             gd.layers[n].wo == gv.layers[n].wo;
  }
  out.expect(others, "other gradients identical");
  out << "gamma 0.1 vs vanilla";
  return out.done();
}

CheckOutcome check_inequality() {
  Detail out;
  double worst = std::numeric_limits<double>::infinity(), worst_causal = worst;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const InequalityTrial t = inequality_trial(seed);
    worst = std::min({worst, t.ffn.slack, t.attn.slack});
    worst_causal = std::min(worst_causal, t.attn_causal.slack);
  }
  out << "10 trials, min slack " << worst << " (causal attention, reported: " << worst_causal << ")";
  out.expect(worst >= -1e-6, "slack >= -1e-6");
  return out.done();
}

std::vector<BoundReport> scheme_reports(int d, int layers, std::uint64_t seed, int vocab = 256, int n_layers = 8,
                                       int L = 128) {
  ModelConfig c;
  c.num_layers = n_layers;
  c.d = d;
  c.d_ffn = 4 * d;
  c.num_heads = d / 64;
  c.seq_len = L;
  c.vocab_size = vocab;
  c.activation = Activation::Identity;
  std::vector<SchemeSpec> schemes;
  for (const char* name : {"vanilla", "embed-detach", "scaled-embed", "embed-ln", "xavier"}) {
    schemes.push_back(scheme_by_name(name));
  }
  StreamProbeOptions opt;
  opt.layers = layers;
  return stream_bound_reports(c, schemes, RandomSource(seed).fork("init"), RandomSource(seed).fork("probe"), opt);
}

CheckOutcome check_bound_ordering() {
  Detail out;
  const auto r = scheme_reports(256, -1, 3);
  bool ok = true;
  for (std::size_t n = 0; n < r[0].layers.size(); ++n) {
    const double hi = std::min(r[0].layers[n].ffn_bound, r[1].layers[n].ffn_bound);
    const double lo = std::max(r[2].layers[n].ffn_bound, r[3].layers[n].ffn_bound);
    ok = ok && lo < hi;
  }
  out << "d=256 N=8 layer 1 ffn bounds: vanilla " << r[0].layers[0].ffn_bound << ", detach "
      << r[1].layers[0].ffn_bound << ", scaled " << r[2].layers[0].ffn_bound << ", ln " << r[3].layers[0].ffn_bound;
  out.expect(ok, "scaled-embed and embed-ln below vanilla and embed-detach at every layer");
  out.expect(r[0].layers.size() == 8, "one row per layer");
  return out.done();
}

CheckOutcome check_depth_effect() {
  Detail out;
  const ModelConfig c = reference_shape("1.7b");
  const std::vector<SchemeSpec> schemes = {scheme_by_name("vanilla"), scheme_by_name("xavier")};
  StreamProbeOptions opt;
  opt.layers = 1;
  opt.single_precision = true;
  const auto r = stream_bound_reports(c, schemes, RandomSource(1).fork("init"), RandomSource(1).fork("probe"), opt);
  const double megatron = r[0].layers[0].ffn_bound, xavier = r[1].layers[0].ffn_bound;
  out << "1.7b shape, L=" << c.seq_len << ", layer 1: xavier " << xavier << " vs megatron " << megatron;
  const auto small = scheme_reports(256, 1, 4, 50304);
  out << "; d=256 N=8 L=128, reported: xavier " << small[4].layers[0].ffn_bound << " vs megatron "
      << small[0].layers[0].ffn_bound;
  out.expect(xavier > megatron, "xavier above megatron-small");
  return out.done();
}

CheckOutcome check_width_trend() {
  Detail out;
  double prev = 0.0;
  for (int d : {256, 1024, 2304}) {
    ModelConfig c = reference_shape("1.7b");
    c.d = d;
    c.d_ffn = 4 * d;
    c.num_heads = d / 64;
    c.seq_len = 256;
    const SchemeSpec v = scheme_by_name("vanilla");
    StreamProbeOptions opt;
    opt.layers = 1;
    opt.single_precision = true;
    const auto r = stream_bound_reports(c, std::span(&v, 1), RandomSource(5).fork("init"), RandomSource(5).fork("probe"), opt);
    const double b = r[0].layers[0].ffn_bound;
    out << "d=" << d << ": " << b << "; ";
    out.expect(b > prev, "increasing in d");
    prev = b;
  }
  return out.done();
}

CheckOutcome check_formulas() {
  Detail out;
  const double v = ffn_upper_bound(0.013176, 0.0019018, 0.013176, 2304, 9216, Activation::Identity);
  const double s = ffn_upper_bound(0.013176, 0.0019018, 0.63246, 2304, 9216, Activation::Identity);
  out << "ffn bound vanilla " << v << " scaled " << s << " jz(1,1,1,1,1)=" << jz_bound(1, 1, 1.0, 1, 1)
      << " attn(1,1,1,1)=" << attn_upper_bound(1.0, 1.0, 1, 1.0);
  out.expect(std::abs(v - 40.44) < 0.01, "vanilla 40.44");
  out.expect(std::abs(s - 1.822) < 0.001, "scaled 1.822");
  out.expect(jz_bound(1, 1, 1.0, 1, 1) == 6.0, "unit jz = 6");
  out.expect(attn_upper_bound(1.0, 1.0, 1, 1.0) == 3.0, "unit attention bound = 3");
  return out.done();
}

CheckOutcome check_silu_max() {
  Detail out;
  const SiluMax m = silu_derivative_max(0.0, 5.0, 1e-3);
  out << "argmax " << m.argmax << " max " << m.max;
  out.expect(std::abs(m.argmax - 2.40) <= 0.01, "argmax 2.40 +- 0.01");
  out.expect(std::abs(m.max - 1.0998) <= 1e-3, "max 1.0998 +- 1e-3");
  out.expect(silu_derivative(0.0) == 0.5, "derivative at 0 is 0.5");
  return out.done();
}

CheckOutcome check_attn_variance() {
  Detail out;
  RandomSource rng(81);
  const std::vector<int> lengths = {8, 16, 32, 64};
  const auto rows = attn_variance_vs_length(64, 1e-4, 1e-4, 1.0, lengths, 1000, rng);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << "L=" << rows[i].L << " mc " << rows[i].mc_var << " law " << rows[i].analytic_var << "; ";
    out.expect(within_rel(rows[i].mc_var, rows[i].analytic_var, 0.15), "within 15% of the d^2/L law");
    if (i > 0) out.expect(within_rel(rows[i - 1].mc_var / rows[i].mc_var, 2.0, 0.15), "doubling L halves the variance");
  }
  return out.done();
}

CheckOutcome check_normality() {
  Detail out;
  ModelConfig c;
  c.num_layers = 8;
  c.d = 256;
  c.d_ffn = 1024;
  c.num_heads = 4;
  c.seq_len = 64;
  c.causal = false;
  const auto params = init_parameters<double>(c, Initializer::MegatronSmall, RandomSource(9));
  RandomSource rng(10);
  const SublayerMoments m = sublayer_output_moments(params, c, 64, rng);
  out << "unmasked, 64 sequences: attn skew " << m.attn.skewness << " kurt " << m.attn.excess_kurtosis << ", ffn skew "
      << m.ffn.skewness << " kurt " << m.ffn.excess_kurtosis << " (raw pooled attn kurt " << m.attn_raw.excess_kurtosis
      << ")";
  for (const MomentStats* s : {&m.attn, &m.ffn}) {
    out.expect(std::abs(s->skewness) < 0.1 && std::abs(s->excess_kurtosis) < 0.3, "close to normal");
  }
  c.causal = true;
  RandomSource rng_causal(10);
  const SublayerMoments mc = sublayer_output_moments(params, c, 64, rng_causal);
  out << "; causal, reported: attn kurt " << mc.attn.excess_kurtosis << " (layer 1 " << mc.attn_layers[0].excess_kurtosis
      << "), ffn kurt " << mc.ffn.excess_kurtosis;
  return out.done();
}

CheckOutcome check_schedule() {
  Detail out;
  TrainConfig t;
  t.total_steps = 1000;
  t.lr_peak = 1e-3;
  const int w = warmup_steps(t);
  bool mono = true;
  for (int s = 1; s < t.total_steps; ++s) {
    const double a = lr_at(s - 1, t), b = lr_at(s, t);
    mono = mono && (s <= w ? b >= a : b <= a);
  }
  out << "warmup " << w << " lr(0)=" << lr_at(0, t) << " lr(w)=" << lr_at(w, t) << " lr(T-1)=" << lr_at(t.total_steps - 1, t);
  out.expect(lr_at(0, t) == 0.0, "starts at 0");
  out.expect(lr_at(w, t) == t.lr_peak, "peak at the end of warmup");
  out.expect(within_rel(lr_at(t.total_steps - 1, t), 0.1 * t.lr_peak, 1e-3), "ends near 0.1 peak");
  out.expect(mono, "nondecreasing then nonincreasing");
  return out.done();
}

CheckOutcome check_clip() {
  Detail out;
  const ModelConfig c = gradcheck_config(Activation::SiLU, NormKind::LayerNorm, EmbedMode::vanilla());
  RandomSource rng(91);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    Gradients<double> g = init_parameters<double>(c, Initializer::Xavier, rng.fork("g", i));
    const double scale = std::exp(rng.normal() * 2.0);
    for_each_tensor(g, [&](const std::string&, MatrixD& m) { m *= scale; });
    const double pre = clip_gradients(g, 1.0);
    worst = std::max(worst, std::abs(global_grad_norm(g) - std::min(pre, 1.0)));
  }
  out << "20 random gradient sets, worst |post - min(pre, clip)| = " << worst;
  out.expect(worst <= 1e-9, "post-clip norm = min(pre, clip)");
  return out.done();
}

CheckOutcome check_adam() {
  Detail out;
  // one scalar parameter, constant gradient: the bias-corrected step is lr
  Parameters<double> p;
  p.embedding = MatrixD::Zero(1, 1);
  p.output = MatrixD::Constant(1, 1, 1.0);
  Gradients<double> g = p;
  g.embedding.setZero();
  g.output(0, 0) = 0.5;
  TrainConfig t;
  t.weight_decay = 0.0;
  auto state = make_optimizer_state(p);
  double last_step = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double before = p.output(0, 0);
    adam_step(p, g, state, 1e-2, t);
    last_step = before - p.output(0, 0);
  }
  out << "constant-gradient step " << last_step;
  out.expect(std::abs(last_step - 1e-2) < 1e-8, "step size -> lr");
  out.expect(p.embedding(0, 0) == 0.0, "zero gradient leaves parameter unchanged");
  return out.done();
}

CheckOutcome check_spikes() {
  Detail out;
  std::vector<TrainLogRecord> log(200);
  for (int i = 0; i < 200; ++i) log[i] = {i, 1e-3, 2.0, 1.0, 1.0, 0.0};
  out.expect(detect_spikes(log).empty(), "constant norms give no events");
  log[120].grad_norm_preclip = 10.0;
  const auto events = detect_spikes(log);
  out << "events " << events.size();
  out.expect(events.size() == 1 && events[0].step == 120, "one event at the excursion");
  return out.done();
}

CheckOutcome check_data() {
  Detail out;
  out.expect(byte_tokenize("AB") == std::vector<int>{65, 66}, "AB -> 65 66");
  RandomSource rng(3);
  bool round_trip = true;
  for (int i = 0; i < 1000; ++i) {
    std::string s(rng.uniform_int(64), '\0');
    for (char& ch : s) ch = static_cast<char>(rng.uniform_int(256));
    round_trip = round_trip && byte_detokenize(byte_tokenize(s)) == s;
  }
  out.expect(round_trip, "tokenize round trip");
  RandomSource a(4), b(4);
  const Corpus ca = synthetic_corpus(CorpusKind::SeededMarkov, 5000, a);
  const Corpus cb = synthetic_corpus(CorpusKind::SeededMarkov, 5000, b);
  out.expect(ca.bytes == cb.bytes, "same seed, same corpus");
  BatchStream stream(ca, 8, 32, RandomSource(5));
  bool aligned = true;
  for (int i = 0; i < 10; ++i) {
    const Batch batch = stream.next();
    aligned = aligned && batch.inputs.rightCols(31) == batch.targets.leftCols(31);
  }
  out.expect(aligned, "targets are inputs shifted by one");
  out.expect(token_budget_batch_size(16 * 64, 32) == 32, "halving L doubles the batch");
  out << "tokenizer, corpus and batch checks";
  return out.done();
}

CheckOutcome check_config_roundtrip() {
  Detail out;
  RunConfig c;
  apply_override(c, "model.d=48");
  apply_override(c, "model.num_heads=3");
  apply_override(c, "scheme.name=xavier-scaled");
  apply_override(c, "scheme.embed_factor=2.5");
  apply_override(c, "train.lr_peak=0.00037");
  apply_override(c, "data.kind=seeded-markov");
  const std::string text = serialize_run_config(c);
  const RunConfig back = parse_run_config(text);
  out.expect(back == c, "parse(serialize(c)) == c");
  out.expect(serialize_run_config(back) == text, "serialization is stable");
  bool rejected = false;
  try {
    parse_run_config("model.nonsense = 3\n");
  } catch (const ConfigError&) {
    rejected = true;
  }
  out.expect(rejected, "unknown keys rejected");
  std::stringstream ss;
  const ModelConfig m = c.model_config();
  const auto params = init_parameters<double>(m, Initializer::Xavier, RandomSource(1));
  write_checkpoint(ss, m, params);
  const Checkpoint ck = read_checkpoint(ss);
  bool same = ck.config == m;
  std::vector<const MatrixD*> a;
  for_each_tensor(params, [&](const std::string&, const MatrixD& t) { a.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(ck.params, [&](const std::string&, const MatrixD& t) { same = same && t == *a[i++]; });
  out.expect(same, "checkpoint round trip");
  out << "config and checkpoint round trips";
  return out.done();
}

CheckOutcome check_train_determinism() {
  Detail out;
  const ModelConfig c = [] {
    ModelConfig m;
    m.num_layers = 1;
    m.d = 32;
    m.d_ffn = 64;
    m.num_heads = 2;
    m.seq_len = 16;
    return m;
  }();
  TrainConfig t;
  t.total_steps = 60;
  t.batch_size = 2;
  t.spike_window = 10;
  RandomSource rng(6);
  const Corpus corpus = synthetic_corpus(CorpusKind::RepeatingPattern, 4096, rng);
  auto run = [&] {
    BatchStream data(corpus, t.batch_size, c.seq_len, RandomSource(8));
    return train(init_parameters<float>(c, Initializer::MegatronSmall, RandomSource(7)), c, t, data);
  };
  const auto a = run(), b = run();
  bool same = a.log.size() == b.log.size();
  bool clip_ok = true;
  for (std::size_t i = 0; same && i < a.log.size(); ++i) {
    same = a.log[i].train_loss == b.log[i].train_loss && a.log[i].grad_norm_preclip == b.log[i].grad_norm_preclip;
    clip_ok = clip_ok && a.log[i].grad_norm_postclip <= std::min(a.log[i].grad_norm_preclip, t.clip_norm) + 1e-6;
  }
  out << "60 steps twice, final loss " << a.log.back().train_loss;
  out.expect(same, "bit-identical logs");
  out.expect(clip_ok, "clip contract");
  out.expect(a.status == RunStatus::Completed, "completed");
  return out.done();
}

}  // namespace

const std::vector<Check>& registered_checks() {
  static const std::vector<Check> checks = {
      {"zz-variance", "zz^T variance Monte Carlo", check_zz_variance},
      {"spectral-svd", "power iteration against SVD", check_spectral_svd},
      {"spectral-law", "Gaussian spectral norm law", check_spectral_law},
      {"spectral-props", "submultiplicativity and subadditivity", check_spectral_props},
      {"ln-jacobian", "LN Jacobian, analytic and 1/sigma", check_ln_jacobian},
      {"rms-jacobian", "RMSNorm Jacobian against I/sigma", check_rms_jacobian},
      {"gradcheck", "analytic gradients against finite differences", check_gradcheck},
      {"embed-detach", "embed detach scales only the embedding gradient", check_embed_detach},
      {"inequality", "sub-layer Jacobian norms below the analytic bounds", check_inequality},
      {"bound-formulas", "closed-form bound values", check_formulas},
      {"bound-ordering", "scheme ordering of layer bounds", check_bound_ordering},
      {"depth-effect", "xavier against depth-scaled init", check_depth_effect},
      {"width-trend", "layer-1 bound grows with d", check_width_trend},
      {"silu-max", "maximum of the SiLU derivative", check_silu_max},
      {"attn-variance", "attention output variance against d^2/L", check_attn_variance},
      {"normality", "sub-layer output moments at init", check_normality},
      {"schedule", "warmup and cosine schedule", check_schedule},
      {"clip", "gradient clipping", check_clip},
      {"adam", "Adam fixed point", check_adam},
      {"spike-detector", "trailing-median spike detector", check_spikes},
      {"data", "tokenizer, corpora and batches", check_data},
      {"config-roundtrip", "config and checkpoint round trips", check_config_roundtrip},
      {"train-determinism", "bit-identical short training runs", check_train_determinism},
  };
  return checks;
}

std::vector<CheckResult> run_checks(std::string_view filter, const std::function<void(const CheckResult&)>& on_result) {
  std::vector<CheckResult> results;
  for (const auto& check : registered_checks()) {
    if (!filter.empty() && check.name.find(filter) == std::string::npos) continue;
    CheckResult r;
    r.name = check.name;
    const auto start = std::chrono::steady_clock::now();
    try {
      const CheckOutcome o = check.run();
      r.passed = o.passed;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::string check_result_json(const CheckResult& r) {
  nlohmann::ordered_json j;
  j["check"] = r.name;
  j["passed"] = r.passed;
  j["seconds"] = std::round(r.seconds * 1000.0) / 1000.0;
  j["detail"] = r.detail;
  return j.dump();
}

}  // namespace preln
