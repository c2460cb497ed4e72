#include "preln/model.hpp"

#include <cmath>

namespace preln {

double megatron_std(int d) { return std::sqrt(2.0 / (5.0 * d)); }

double xavier_std(Eigen::Index rows, Eigen::Index cols) {
  return std::sqrt(2.0 / static_cast<double>(rows + cols));
}

namespace {

double tensor_std(const ModelConfig& c, Initializer scheme, Eigen::Index rows, Eigen::Index cols) {
  return scheme == Initializer::MegatronSmall ? megatron_std(c.d) : xavier_std(rows, cols);
}

template <typename S>
Matrix<S> sample(const ModelConfig& c, Initializer scheme, Eigen::Index rows, Eigen::Index cols,
                 RandomSource stream, double extra_scale = 1.0) {
  const double std = tensor_std(c, scheme, rows, cols);
  return (gaussian_matrix(rows, cols, 0.0, std, stream) * extra_scale).template cast<S>();
}

}  // namespace

template <typename S>
LayerParams<S> init_layer(const ModelConfig& config, Initializer scheme, const RandomSource& rng,
                          int layer) {
  const RandomSource base = rng.fork("layer", static_cast<std::uint64_t>(layer));
  const Eigen::Index d = config.d, f = config.d_ffn;
  // W2 and W_O only; V keeps the plain std.
  const double depth = scheme == Initializer::MegatronSmall
                           ? std::sqrt(1.0 / (2.0 * std::max(config.num_layers, 1)))
                           : 1.0;
  LayerParams<S> p;
  p.w1 = sample<S>(config, scheme, f, d, base.fork("w1"));
  p.w2 = sample<S>(config, scheme, d, f, base.fork("w2"), depth);
  if (config.activation == Activation::SwiGLU) p.v = sample<S>(config, scheme, f, d, base.fork("v"));
  p.wq = sample<S>(config, scheme, d, d, base.fork("wq"));
  p.wk = sample<S>(config, scheme, d, d, base.fork("wk"));
  p.wv = sample<S>(config, scheme, d, d, base.fork("wv"));
  p.wo = sample<S>(config, scheme, d, d, base.fork("wo"), depth);
  return p;
}

template <typename S>
Matrix<S> init_embedding_rows(const ModelConfig& config, Initializer scheme, const RandomSource& rng,
                              std::span<const int> ids, bool positional) {
  const Eigen::Index table_rows = positional ? config.seq_len : config.vocab_size;
  const double std = tensor_std(config, scheme, table_rows, config.d);
  const char* label = positional ? "positional" : "embedding";
  Matrix<S> out(static_cast<Eigen::Index>(ids.size()), config.d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= table_rows) throw std::out_of_range("init_embedding_rows: row out of range");
    RandomSource stream = rng.fork(label, static_cast<std::uint64_t>(id));
    out.row(static_cast<Eigen::Index>(i)) =
        gaussian_matrix(1, config.d, 0.0, std, stream).row(0).template cast<S>();
  }
  return out;
}

template <typename S>
Parameters<S> init_parameters(const ModelConfig& config, Initializer scheme, const RandomSource& rng) {
  config.validate();
  Parameters<S> p;
  std::vector<int> ids(static_cast<std::size_t>(config.vocab_size));
  for (int i = 0; i < config.vocab_size; ++i) ids[static_cast<std::size_t>(i)] = i;
  p.embedding = init_embedding_rows<S>(config, scheme, rng, ids);
  if (config.positional == Positional::Learned) {
    std::vector<int> pos(static_cast<std::size_t>(config.seq_len));
    for (int i = 0; i < config.seq_len; ++i) pos[static_cast<std::size_t>(i)] = i;
    p.positional = init_embedding_rows<S>(config, scheme, rng, pos, true);
  }
  p.layers.reserve(static_cast<std::size_t>(config.num_layers));
  for (int n = 0; n < config.num_layers; ++n) p.layers.push_back(init_layer<S>(config, scheme, rng, n));
  p.output = sample<S>(config, scheme, config.d, config.vocab_size, rng.fork("output"));
  return p;
}

#define PRELN_INSTANTIATE(S)                                                                    \
  template LayerParams<S> init_layer<S>(const ModelConfig&, Initializer, const RandomSource&, int); \
  template Matrix<S> init_embedding_rows<S>(const ModelConfig&, Initializer, const RandomSource&, \
                                            std::span<const int>, bool);                        \
  template Parameters<S> init_parameters<S>(const ModelConfig&, Initializer, const RandomSource&);

PRELN_INSTANTIATE(float)
PRELN_INSTANTIATE(double)

}  // namespace preln
