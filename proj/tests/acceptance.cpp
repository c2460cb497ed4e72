// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "preln/bounds.hpp"
#include "preln/experiment.hpp"
#include "preln/verify.hpp"

using namespace preln;

namespace {

struct Verdict {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [FAILED: " << what << "]";
    }
  }
  template <typename T>
  Verdict& operator<<(const T& v) {
    detail << v;
    return *this;
  }
};

bool within_rel(double v, double target, double rel) { return std::abs(v - target) <= rel * std::abs(target); }

// criterion 1
void zz_variance(Verdict& v) {
  RandomSource rng(2024);
  const ZzVariance z = zz_variance_mc(1024, 100000, rng);
  v << "d=1024, 1e5 draws: diag var " << z.diag_var << ", off-diag var " << z.offdiag_var;
  v.expect(std::abs(z.diag_var - 2.0) <= 0.1, "diag 2 +- 0.1");
  v.expect(std::abs(z.offdiag_var - 1.0) <= 0.05, "off-diag 1 +- 0.05");
}

// criterion 2
void spectral_law(Verdict& v) {
  for (auto [n, m] : {std::pair{256, 1024}, std::pair{512, 2048}}) {
    for (double sigma : {0.01, 0.02}) {
      double mean = 0.0;
      for (int seed = 0; seed < 10; ++seed) {
        RandomSource rng(500 + seed);
        mean += spectral_norm(gaussian_matrix(n, m, 0.0, sigma, rng), rng).value / 10.0;
      }
      const double law = expected_spectral_norm(sigma, n, m);
      v << n << 'x' << m << " s=" << sigma << ": " << mean << " vs " << law << "; ";
      v.expect(within_rel(mean, law, 0.03), "within 3%");
    }
  }
}

// criterion 3
void ln_jacobian(Verdict& v) {
  RandomSource rng(3);
  const VectorD x = gaussian_matrix(1024, 1, 0.0, 1.0, rng).col(0);
  const MatrixD fd = finite_diff_jacobian([](const VectorD& u) { return layer_norm<double>(u); }, x, 1e-5);
  const double norm = spectral_norm(fd, rng).value;
  const double target = 1.0 / population_std(x);
  v << "d=1024 ||J_fd|| " << norm << " vs 1/sigma " << target;
  v.expect(within_rel(norm, target, 0.02), "within 2%");
  const VectorD s = gaussian_matrix(16, 1, 0.5, 2.0, rng).col(0);
  const MatrixD fd16 = finite_diff_jacobian([](const VectorD& u) { return layer_norm<double>(u); }, s, 1e-5);
  const double err = (fd16 - ln_jacobian_analytic(s)).cwiseAbs().maxCoeff();
  v << "; d=16 analytic vs fd max err " << err;
  v.expect(err <= 1e-6, "analytic matrix within 1e-6");
}

// criterion 4
void gradient_exactness(Verdict& v) {
  int total = 0, failed = 0;
  double worst = 0.0;
  std::string worst_where;
  for (auto act : {Activation::Identity, Activation::ReLU, Activation::SiLU, Activation::SwiGLU}) {
    for (auto norm : {NormKind::LayerNorm, NormKind::RMSNorm}) {
      for (auto embed : {EmbedMode::vanilla(), EmbedMode::scaled(), EmbedMode::layer_norm(), EmbedMode::detach()}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
          const GradCheckReport r = gradient_check(gradcheck_config(act, norm, embed), seed);
          ++total;
          if (!r.passed) ++failed;
          if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            worst_where = std::string(to_string(act)) + '/' + std::string(to_string(norm)) + '/' +
                          std::string(to_string(embed.kind)) + " seed " + std::to_string(seed) + ' ' + r.worst;
          }
        }
      }
    }
  }
  v << total << " model/seed combinations, worst rel error " << worst << " (" << worst_where << ")";
  v.expect(failed == 0, std::to_string(failed) + " above 1e-4");
}

// criterion 5
void inequality_soundness(Verdict& v) {
  double worst = std::numeric_limits<double>::infinity();
  double worst_causal = worst;
  int largest_d = 0, largest_L = 0;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const InequalityTrial t = inequality_trial(seed);
    largest_d = std::max(largest_d, t.config.d);
    largest_L = std::max(largest_L, t.config.seq_len);
    worst = std::min({worst, t.ffn.slack, t.attn.slack});
    worst_causal = std::min(worst_causal, t.attn_causal.slack);
  }
  v << "25 models (d <= " << largest_d << ", L <= " << largest_L << "), min slack " << worst
    << "; causal attention, reported: " << worst_causal;
  v.expect(largest_d <= 64 && largest_L <= 8, "toy sizes");
  v.expect(worst >= -1e-6, "slack >= -1e-6");
}

// criterion 6
void layer_bounds_1_7b(Verdict& v) {
  const ModelConfig shape = reference_shape("1.7b");
  std::vector<SchemeSpec> schemes;
  for (const char* name : {"vanilla", "embed-detach", "scaled-embed", "embed-ln", "xavier"}) {
    schemes.push_back(scheme_by_name(name));
  }
  const RandomSource init = init_stream(1), probe = probe_stream(1);

  // layer 1 at the full sequence length
  StreamProbeOptions first;
  first.layers = 1;
  first.single_precision = true;
  const auto l1 = stream_bound_reports(shape, schemes, init, probe, first);
  const double vanilla = l1[0].layers[0].ffn_bound, scaled = l1[2].layers[0].ffn_bound;
  const double xavier = l1[4].layers[0].ffn_bound;
  v << "L=" << shape.seq_len << " layer 1: vanilla " << vanilla << ", detach " << l1[1].layers[0].ffn_bound
    << ", scaled " << scaled << ", embed-ln " << l1[3].layers[0].ffn_bound << ", xavier " << xavier;
  v.expect(within_rel(vanilla, 40.4, 0.10), "vanilla 40.4 +- 10%");
  v.expect(within_rel(scaled, 1.82, 0.10), "scaled 1.82 +- 10%");
  v.expect(xavier > vanilla, "xavier above megatron-small");

  // every layer, shorter probe sequences
  StreamProbeOptions all;
  all.probe_seq_len = 512;
  all.single_precision = true;
  const auto full = stream_bound_reports(shape, std::span(schemes).first(4), init, probe, all);
  int bad_layers = 0;
  double margin = std::numeric_limits<double>::infinity();
  for (int n = 0; n < shape.num_layers; ++n) {
    const double hi = std::min(full[0].layers[n].ffn_bound, full[1].layers[n].ffn_bound);
    const double lo = std::max(full[2].layers[n].ffn_bound, full[3].layers[n].ffn_bound);
    margin = std::min(margin, hi / lo);
    if (!(lo < hi)) ++bad_layers;
  }
  v << "; all " << shape.num_layers << " layers (probe L=512): min ratio (vanilla, detach) / (scaled, embed-ln) "
    << margin;
  v.expect(bad_layers == 0, std::to_string(bad_layers) + " layers out of order");
}

// criterion 7
void silu_bound(Verdict& v) {
  const SiluMax m = silu_derivative_max(0.0, 5.0, 1e-4);
  v << "argmax " << m.argmax << ", max " << m.max;
  v.expect(std::abs(m.max - 1.0998) <= 1e-3, "max 1.0998 +- 0.001");
  v.expect(std::abs(m.argmax - 2.40) <= 0.01, "argmax 2.40 +- 0.01");
}

// criterion 8
void attention_variance(Verdict& v) {
  RandomSource rng(88);
  const std::vector<int> lengths = {8, 16, 32, 64};
  const auto rows = attn_variance_vs_length(64, 1e-4, 1e-4, 1.0, lengths, 2000, rng);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    v << "L=" << rows[i].L << ": " << rows[i].mc_var << " vs " << rows[i].analytic_var << "; ";
    v.expect(within_rel(rows[i].mc_var, rows[i].analytic_var, 0.15), "within 15%");
    if (i > 0) v.expect(within_rel(rows[i - 1].mc_var / rows[i].mc_var, 2.0, 0.15), "doubling L halves it");
  }
}

// criterion 9
void width_trend(Verdict& v) {
  double prev = 0.0;
  const SchemeSpec vanilla = scheme_by_name("vanilla");
  for (int d : {256, 1024, 2304}) {
    ModelConfig c = reference_shape("1.7b");
    c.d = d;
    c.d_ffn = 4 * d;
    c.num_heads = d / 64;
    StreamProbeOptions opt;
    opt.layers = 1;
    opt.probe_seq_len = 512;
    opt.single_precision = true;
    const auto r = stream_bound_reports(c, std::span(&vanilla, 1), init_stream(1), probe_stream(1), opt);
    const double b = r[0].layers[0].ffn_bound;
    v << "d=" << d << ": " << b << "; ";
    v.expect(b > prev, "strictly increasing");
    prev = b;
  }
}

RunConfig toy_run(const std::string& scheme, std::uint64_t seed) {
  RunConfig c;
  c.model.num_layers = 2;
  c.model.d = 64;
  c.model.d_ffn = 256;
  c.model.num_heads = 4;
  c.model.seq_len = 64;
  c.model.vocab_size = 256;
  c.model.activation = Activation::SiLU;
  c.model.dropout = 0.0;
  c.scheme = scheme_by_name(scheme);
  c.train.lr_peak = 1e-3;
  c.train.warmup_fraction = 0.05;
  c.train.total_steps = 500;
  c.train.batch_size = 16;
  c.train.seed = seed;
  c.train.precision = Precision::Single;
  c.train.log_every = 1;
  c.data.kind = CorpusKind::RepeatingPattern;
  c.data.length = 200000;
  c.data.seed = seed;
  return c;
}

// criterion 10
void toy_training(Verdict& v) {
  const double target = std::log(256.0) / 2.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunConfig cfg = toy_run("scaled-embed", seed);
    const RunOutcome r = run_training(cfg);
    bool clip_ok = true;
    for (const auto& rec : r.log) {
      clip_ok = clip_ok && rec.grad_norm_postclip <= std::min(rec.grad_norm_preclip, cfg.train.clip_norm) + 1e-6 &&
                rec.lr == lr_at(rec.step, cfg.train);
    }
    v << "seed " << seed << ": " << to_string(r.summary.status) << " final loss " << r.summary.final_loss
      << " spikes " << r.summary.spike_count << "; ";
    v.expect(r.summary.status == RunStatus::Completed, "run completed");
    v.expect(r.summary.final_loss < target, "final loss below ln(256)/2");
    v.expect(clip_ok, "clip and schedule contract on every step");
    if (seed == 1) {
      const RunOutcome again = run_training(cfg);
      bool same = again.log.size() == r.log.size() && again.params.output == r.params.output;
      for (std::size_t i = 0; same && i < r.log.size(); ++i) {
        same = again.log[i].train_loss == r.log[i].train_loss &&
               again.log[i].grad_norm_preclip == r.log[i].grad_norm_preclip;
      }
      v.expect(same, "bit-identical rerun");
    }
  }
  v << "vanilla at matched seeds, reported:";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunOutcome r = run_training(toy_run("vanilla", seed));
    v << " seed " << seed << " spikes " << r.summary.spike_count << " max grad " << r.summary.max_grad_norm << ';';
  }
}

// criterion 11
void normality(Verdict& v) {
  ModelConfig c;
  c.num_layers = 8;
  c.d = 256;
  c.d_ffn = 1024;
  c.num_heads = 4;
  c.seq_len = 64;
  c.causal = false;
  const auto params = init_parameters<double>(c, Initializer::MegatronSmall, init_stream(11));
  RandomSource rng = probe_stream(11);
  const SublayerMoments m = sublayer_output_moments(params, c, 64, rng);
  v << "attention skew " << m.attn.skewness << " kurt " << m.attn.excess_kurtosis << ", ffn skew " << m.ffn.skewness
    << " kurt " << m.ffn.excess_kurtosis;
  for (const MomentStats* s : {&m.attn, &m.ffn}) {
    v.expect(std::abs(s->skewness) < 0.1, "|skewness| < 0.1");
    v.expect(std::abs(s->excess_kurtosis) < 0.3, "|excess kurtosis| < 0.3");
  }
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Verdict&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "zz-variance", 30, zz_variance},
      {2, "spectral-law", 60, spectral_law},
      {3, "ln-jacobian", 60, ln_jacobian},
      {4, "gradient-exactness", 600, gradient_exactness},
      {5, "inequality-soundness", 900, inequality_soundness},
      {6, "layer-bounds-1.7b", 300, layer_bounds_1_7b},
      {7, "silu-bound", 1, silu_bound},
      {8, "attention-variance", 300, attention_variance},
      {9, "width-trend", 60, width_trend},
      {10, "toy-training", 1200, toy_training},
      {11, "normality", 120, normality},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      v.ok = false;
      v.detail << " [FAILED: over the runtime budget]";
    }
    std::printf("%s %2d %-22s %8.1fs (budget %gs) %s\n", v.ok ? "PASS" : "FAIL", c.id, c.name, secs, c.budget_s,
                v.detail.str().c_str());
    std::fflush(stdout);
    if (!v.ok) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
