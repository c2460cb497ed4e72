#include "preln/bounds.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace preln {

namespace {

std::vector<int> random_tokens(int count, int vocab, RandomSource& rng) {
  std::vector<int> t(static_cast<std::size_t>(count));
  for (auto& id : t) id = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab)));
  return t;
}

}  // namespace

template <typename S>
std::vector<SublayerStats> measure_shortcut_stats(const Parameters<S>& params, const ModelConfig& config,
                                                  int probe_batches, RandomSource& rng) {
  if (probe_batches < 1) throw std::invalid_argument("measure_shortcut_stats: probe_batches must be >= 1");
  const std::size_t n_layers = params.layers.size();
  std::vector<RunningMoments> sx(n_layers), sxp(n_layers);
  for (int b = 0; b < probe_batches; ++b) {
    const std::vector<int> tokens = random_tokens(config.seq_len, config.vocab_size, rng);
    Matrix<S> x = embed<S>(tokens, params, config).x;
    for (std::size_t n = 0; n < n_layers; ++n) {
      sx[n].add(x);
      x = attention_sublayer(x, params.layers[n], config);
      sxp[n].add(x);
      if (n + 1 < n_layers) x = ffn_sublayer(x, params.layers[n], config);
    }
  }
  std::vector<SublayerStats> out;
  for (std::size_t n = 0; n < n_layers; ++n) {
    out.push_back({static_cast<int>(n) + 1, sx[n].std(), sxp[n].std(),
                   static_cast<std::size_t>(sx[n].count())});
  }
  return out;
}

namespace {

template <typename S>
std::vector<BoundReport> stream_reports(const ModelConfig& config, std::span<const SchemeSpec> schemes,
                                        const RandomSource& init, const RandomSource& probe,
                                        const StreamProbeOptions& opt) {
  config.validate();
  if (opt.probe_batches < 1) throw std::invalid_argument("stream_bound_reports: probe_batches must be >= 1");
  ModelConfig probe_cfg = config;
  if (opt.probe_seq_len > 0) probe_cfg.seq_len = opt.probe_seq_len;
  if (config.positional == Positional::Learned && probe_cfg.seq_len > config.seq_len) {
    throw std::invalid_argument("stream_bound_reports: probe longer than the positional table");
  }
  const int n_layers = opt.layers < 0 ? config.num_layers : std::min(opt.layers, config.num_layers);

  // probe tokens, drawn exactly as measure_shortcut_stats would
  RandomSource token_rng = probe;
  std::vector<std::vector<int>> tokens;
  for (int b = 0; b < opt.probe_batches; ++b) {
    tokens.push_back(random_tokens(probe_cfg.seq_len, config.vocab_size, token_rng));
  }
  // compact vocabulary: only the rows the probes touch
  std::map<int, int> index;
  for (const auto& seq : tokens) {
    for (int id : seq) index.emplace(id, 0);
  }
  std::vector<int> ids;
  for (auto& [id, slot] : index) {
    slot = static_cast<int>(ids.size());
    ids.push_back(id);
  }
  std::vector<std::vector<int>> local = tokens;
  for (auto& seq : local) {
    for (int& id : seq) id = index.at(id);
  }

  std::vector<BoundReport> reports(schemes.size());
  for (std::size_t s = 0; s < schemes.size(); ++s) reports[s].scheme = schemes[s].name;

  for (Initializer scheme_init : {Initializer::MegatronSmall, Initializer::Xavier}) {
    std::vector<std::size_t> members;
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      if (schemes[s].init == scheme_init) members.push_back(s);
    }
    if (members.empty()) continue;

    Parameters<S> table;
    table.embedding = init_embedding_rows<S>(config, scheme_init, init, ids);
    if (config.positional == Positional::Learned) {
      std::vector<int> pos(static_cast<std::size_t>(probe_cfg.seq_len));
      for (int i = 0; i < probe_cfg.seq_len; ++i) pos[static_cast<std::size_t>(i)] = i;
      table.positional = init_embedding_rows<S>(config, scheme_init, init, pos, true);
    }

    // members whose forward passes coincide share one residual stream;
    // detach only changes gradients
    std::vector<ModelConfig> forward_cfgs;
    std::vector<std::size_t> stream_of(members.size());
    for (std::size_t m = 0; m < members.size(); ++m) {
      ModelConfig cfg = with_scheme(probe_cfg, schemes[members[m]]);
      if (cfg.embed_mode.kind == EmbedMode::Kind::EmbedDetach) cfg.embed_mode = EmbedMode::vanilla();
      const auto it = std::find(forward_cfgs.begin(), forward_cfgs.end(), cfg);
      stream_of[m] = static_cast<std::size_t>(it - forward_cfgs.begin());
      if (it == forward_cfgs.end()) forward_cfgs.push_back(cfg);
    }

    // states[f][b]: residual stream of forward config f on probe b
    std::vector<std::vector<Matrix<S>>> states(forward_cfgs.size());
    for (std::size_t f = 0; f < forward_cfgs.size(); ++f) {
      for (const auto& seq : local) states[f].push_back(embed<S>(seq, table, forward_cfgs[f]).x);
    }
    for (int n = 0; n < n_layers; ++n) {
      const LayerParams<S> lp = init_layer<S>(config, scheme_init, init, n);
      const TensorStds stds = measure_tensor_stds(lp);
      std::vector<SublayerStats> layer_stats;
      for (std::size_t f = 0; f < forward_cfgs.size(); ++f) {
        RunningMoments sx, sxp;
        for (auto& x : states[f]) {
          sx.add(x);
          x = attention_sublayer(x, lp, forward_cfgs[f]);
          sxp.add(x);
          if (n + 1 < n_layers) x = ffn_sublayer(x, lp, forward_cfgs[f]);
        }
        layer_stats.push_back({n + 1, sx.std(), sxp.std(), static_cast<std::size_t>(sx.count())});
      }
      for (std::size_t m = 0; m < members.size(); ++m) {
        reports[members[m]].layers.push_back(
            evaluate_layer_bound(with_scheme(config, schemes[members[m]]), stds, layer_stats[stream_of[m]]));
      }
    }
  }
  return reports;
}

}  // namespace

std::vector<BoundReport> stream_bound_reports(const ModelConfig& config, std::span<const SchemeSpec> schemes,
                                              const RandomSource& init, const RandomSource& probe,
                                              const StreamProbeOptions& options) {
  return options.single_precision ? stream_reports<float>(config, schemes, init, probe, options)
                                  : stream_reports<double>(config, schemes, init, probe, options);
}

JacobianProbe probe_sublayer_jacobian(const LayerParams<double>& p, Sublayer sublayer, const MatrixD& x,
                                      const ModelConfig& config) {
  const Eigen::Index d = x.rows(), L = x.cols();
  if (d != config.d) throw std::invalid_argument("probe_sublayer_jacobian: input rows != d");
  if (d > kProbeMaxD || L > kProbeMaxL) {
    throw std::invalid_argument("probe_sublayer_jacobian: dimensions too large for finite differences");
  }
  auto f = [&](const VectorD& v) -> VectorD {
    const MatrixD in = Eigen::Map<const MatrixD>(v.data(), d, L);
    const MatrixD out = sublayer == Sublayer::FFN ? ffn_sublayer(in, p, config)
                                                  : attention_sublayer(in, p, config);
    return Eigen::Map<const VectorD>(out.data(), out.size());
  };
  const VectorD flat = Eigen::Map<const VectorD>(x.data(), x.size());
  const MatrixD j = finite_diff_jacobian(f, flat, 1e-5);
  RandomSource rng(0x9e3779b9);
  JacobianProbe r;
  r.sublayer = sublayer;
  r.empirical = spectral_norm(j, 1e-12, 20000, rng).value;
  r.sigma_shortcut = column_std(x).minCoeff();
  const TensorStds stds = measure_tensor_stds(p);
  if (sublayer == Sublayer::FFN) {
    r.bound = ffn_upper_bound(stds.sigma1, stds.sigma2, r.sigma_shortcut, config.d, config.d_ffn,
                              config.activation,
                              config.activation == Activation::SwiGLU ? stds.sigma_v : std::nullopt);
  } else {
    const double jz = jz_bound(config.num_heads, static_cast<int>(L), stds.sigma_qkv, config.d,
                               config.d_head());
    r.bound = attn_upper_bound(stds.sigma_o, r.sigma_shortcut, config.d, jz);
  }
  r.slack = r.bound - r.empirical;
  return r;
}

template std::vector<SublayerStats> measure_shortcut_stats<float>(const Parameters<float>&, const ModelConfig&,
                                                                  int, RandomSource&);
template std::vector<SublayerStats> measure_shortcut_stats<double>(const Parameters<double>&,
                                                                   const ModelConfig&, int, RandomSource&);

}  // namespace preln
