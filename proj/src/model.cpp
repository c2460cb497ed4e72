#include "preln/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace preln {

// ---------------------------------------------------------------------------
// Enum names

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::SiLU: return "silu";
    case Activation::SwiGLU: return "swiglu";
  }
  return "?";
}

std::string_view to_string(NormKind n) {
  return n == NormKind::LayerNorm ? "layernorm" : "rmsnorm";
}

std::string_view to_string(Initializer i) {
  return i == Initializer::MegatronSmall ? "megatron-small" : "xavier";
}

std::string_view to_string(Positional p) { return p == Positional::None ? "none" : "learned"; }

std::string_view to_string(EmbedMode::Kind k) {
  switch (k) {
    case EmbedMode::Kind::Vanilla: return "vanilla";
    case EmbedMode::Kind::ScaledEmbed: return "scaled";
    case EmbedMode::Kind::EmbedLN: return "ln";
    case EmbedMode::Kind::EmbedDetach: return "detach";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  for (auto a : {Activation::Identity, Activation::ReLU, Activation::SiLU, Activation::SwiGLU}) {
    if (s == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

NormKind parse_norm_kind(std::string_view s) {
  if (s == "layernorm") return NormKind::LayerNorm;
  if (s == "rmsnorm") return NormKind::RMSNorm;
  throw std::invalid_argument("unknown norm '" + std::string(s) + "'");
}

Initializer parse_initializer(std::string_view s) {
  if (s == "megatron-small") return Initializer::MegatronSmall;
  if (s == "xavier") return Initializer::Xavier;
  throw std::invalid_argument("unknown initializer '" + std::string(s) + "'");
}

Positional parse_positional(std::string_view s) {
  if (s == "none") return Positional::None;
  if (s == "learned") return Positional::Learned;
  throw std::invalid_argument("unknown positional mode '" + std::string(s) + "'");
}

EmbedMode::Kind parse_embed_kind(std::string_view s) {
  for (auto k : {EmbedMode::Kind::Vanilla, EmbedMode::Kind::ScaledEmbed, EmbedMode::Kind::EmbedLN,
                 EmbedMode::Kind::EmbedDetach}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown embed mode '" + std::string(s) + "'");
}

double EmbedMode::scale_factor(int d) const {
  return factor.value_or(std::sqrt(static_cast<double>(d)));
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (num_layers < 0) fail("num_layers must be >= 0");
  if (d < 2) fail("d must be >= 2");
  if (d_ffn < 1) fail("d_ffn must be >= 1");
  if (num_heads < 1) fail("num_heads must be >= 1");
  if (d % num_heads != 0) fail("d must be divisible by num_heads");
  if (seq_len < 1) fail("seq_len must be >= 1");
  if (vocab_size < 1) fail("vocab_size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (embed_mode.kind == EmbedMode::Kind::ScaledEmbed && embed_mode.factor &&
      !(*embed_mode.factor > 0.0)) {
    fail("embed factor must be positive");
  }
  if (embed_mode.kind == EmbedMode::Kind::EmbedDetach &&
      !(embed_mode.gamma > 0.0 && embed_mode.gamma <= 1.0)) {
    fail("detach gamma must be in (0, 1]");
  }
}

ModelConfig reference_shape(std::string_view size) {
  ModelConfig c;
  c.seq_len = 2048;
  c.vocab_size = 50304;
  c.activation = Activation::Identity;
  c.dropout = 0.1;
  if (size == "350m") {
    c.num_layers = 24, c.d = 1024, c.d_ffn = 4096, c.num_heads = 16;
  } else if (size == "1.7b") {
    c.num_layers = 24, c.d = 2304, c.d_ffn = 9216, c.num_heads = 24;
  } else if (size == "13b") {
    c.num_layers = 40, c.d = 5120, c.d_ffn = 20480, c.num_heads = 40;
  } else {
    throw std::invalid_argument("unknown model size '" + std::string(size) + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Normalization

template <typename S>
NormCache<S> norm_columns(NormKind kind, const Matrix<S>& x) {
  const Eigen::Index d = x.rows();
  if (d < 2) throw std::invalid_argument("normalization needs d >= 2");
  NormCache<S> c;
  RowVector<S> var;
  if (kind == NormKind::LayerNorm) {
    const RowVector<S> mean = x.colwise().mean();
    c.out = x.rowwise() - mean;
    var = c.out.array().square().colwise().mean();
  } else {
    c.out = x;
    var = x.array().square().colwise().mean();
  }
  if (!((var.array() > S(0)).all())) {
    throw DegenerateInput(kind == NormKind::LayerNorm ? "layer_norm: zero-variance input"
                                                      : "rms_norm: zero input");
  }
  c.inv_scale = var.array().rsqrt();
  c.out.array().rowwise() *= c.inv_scale.array();
  return c;
}

template <typename S>
Matrix<S> norm_columns_backward(NormKind kind, const NormCache<S>& c, const Matrix<S>& dout) {
  const RowVector<S> proj = (dout.array() * c.out.array()).colwise().mean();
  Matrix<S> dx = dout;
#ifndef PRELN_FAULT_NORM_BACKWARD
  dx.array() -= c.out.array().rowwise() * proj.array();
#endif
  if (kind == NormKind::LayerNorm) {
    const RowVector<S> mean = dout.colwise().mean();
    dx.rowwise() -= mean;
  }
  dx.array().rowwise() *= c.inv_scale.array();
  return dx;
}

template <typename S>
Vector<S> layer_norm(const Vector<S>& x) {
  Matrix<S> m = x;
  return norm_columns(NormKind::LayerNorm, m).out.col(0);
}

template <typename S>
Vector<S> rms_norm(const Vector<S>& x) {
  Matrix<S> m = x;
  return norm_columns(NormKind::RMSNorm, m).out.col(0);
}

// ---------------------------------------------------------------------------
// Feed-forward

namespace {

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return S(1) / (S(1) + (-x).exp());
}

template <typename S>
Matrix<S> silu(const Matrix<S>& x) {
  return (x.array() * sigmoid(x.array())).matrix();
}

template <typename S>
Matrix<S> silu_grad(const Matrix<S>& x) {
  const auto s = sigmoid(x.array()).eval();
  return (s * (S(1) + x.array() * (S(1) - s))).matrix();
}

template <typename S>
void ffn_apply(const Matrix<S>& b, const LayerParams<S>& p, Activation act, Matrix<S>& h_pre,
               Matrix<S>& gate, Matrix<S>& h) {
  h_pre.noalias() = p.w1 * b;
  switch (act) {
    case Activation::Identity:
      h = h_pre;
      break;
    case Activation::ReLU:
      h = h_pre.cwiseMax(S(0));
      break;
    case Activation::SiLU:
      h = silu(h_pre);
      break;
    case Activation::SwiGLU:
      if (p.v.size() == 0) throw std::invalid_argument("SwiGLU requires the V matrix");
      gate.noalias() = p.v * b;
      h = (silu(h_pre).array() * gate.array()).matrix();
      break;
  }
}

template <typename S>
Matrix<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, RandomSource& rng) {
  Matrix<S> m(rows, cols);
  const S keep = S(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < rate ? S(0) : keep;
  return m;
}

template <typename S>
void softmax_rows(Matrix<S>& s, bool causal) {
  const Eigen::Index L = s.cols();
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    const Eigen::Index limit = causal ? std::min<Eigen::Index>(k + 1, L) : L;
    auto row = s.row(k);
    const S mx = row.head(limit).maxCoeff();
    row.head(limit) = (row.head(limit).array() - mx).exp();
    row.head(limit) /= row.head(limit).sum();
    if (limit < L) row.tail(L - limit).setZero();
  }
}

}  // namespace

template <typename S>
Vector<S> ffn_forward(const Vector<S>& x, const Matrix<S>& w1, const Matrix<S>& w2,
                      const Matrix<S>& v, Activation activation) {
  LayerParams<S> p;
  p.w1 = w1;
  p.w2 = w2;
  p.v = v;
  Matrix<S> b = x;
  Matrix<S> h_pre, gate, h;
  ffn_apply(b, p, activation, h_pre, gate, h);
  return (w2 * h).col(0);
}

// ---------------------------------------------------------------------------
// Attention

template <typename S>
Matrix<S> attention_forward(const Matrix<S>& x, const LayerParams<S>& p, int num_heads,
                            bool causal, AttentionCache<S>* cache) {
  const Eigen::Index d = x.rows();
  const Eigen::Index L = x.cols();
  if (num_heads < 1 || d % num_heads != 0) throw std::invalid_argument("attention: bad head count");
  const Eigen::Index dh = d / num_heads;
  const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));

  Matrix<S> q, k, v;
  q.noalias() = p.wq * x;
  k.noalias() = p.wk * x;
  v.noalias() = p.wv * x;
  Matrix<S> z(d, L);
  if (cache) {
    cache->scores.clear();
    cache->weights.clear();
  }
  for (int i = 0; i < num_heads; ++i) {
    const auto qi = q.middleRows(i * dh, dh);
    const auto ki = k.middleRows(i * dh, dh);
    const auto vi = v.middleRows(i * dh, dh);
    Matrix<S> s(L, L);
    s.noalias() = qi.transpose() * ki;
    s *= scale;
    if (cache) cache->scores.push_back(s);
    softmax_rows(s, causal);
    z.middleRows(i * dh, dh).noalias() = vi * s.transpose();
    if (cache) cache->weights.push_back(std::move(s));
  }
  Matrix<S> out;
  out.noalias() = p.wo * z;
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->z = std::move(z);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer

template <typename S>
Matrix<S> attention_sublayer(const Matrix<S>& x, const LayerParams<S>& p, const ModelConfig& config) {
  const NormCache<S> n = norm_columns(config.norm, x);
  return x + attention_forward(n.out, p, config.num_heads, config.causal);
}

template <typename S>
Matrix<S> ffn_sublayer(const Matrix<S>& x_mid, const LayerParams<S>& p, const ModelConfig& config) {
  const NormCache<S> n = norm_columns(config.norm, x_mid);
  Matrix<S> h_pre, gate, h;
  ffn_apply(n.out, p, config.activation, h_pre, gate, h);
  Matrix<S> y = x_mid;
  y.noalias() += p.w2 * h;
  return y;
}

template <typename S>
Matrix<S> layer_forward(const Matrix<S>& x, const LayerParams<S>& p, const ModelConfig& config,
                        Mode mode, RandomSource* rng, LayerCache<S>* cache) {
  const bool drop = mode == Mode::Train && config.dropout > 0.0;
  if (drop && rng == nullptr) throw std::invalid_argument("layer_forward: dropout needs a RandomSource");

  NormCache<S> ln1 = norm_columns(config.norm, x);
  Matrix<S> attn = attention_forward(ln1.out, p, config.num_heads, config.causal,
                                     cache ? &cache->attn : nullptr);
  Matrix<S> mask1;
  if (drop) {
    mask1 = dropout_mask<S>(attn.rows(), attn.cols(), config.dropout, *rng);
    attn.array() *= mask1.array();
  }
  Matrix<S> x_mid = x + attn;

  NormCache<S> ln2 = norm_columns(config.norm, x_mid);
  Matrix<S> h_pre, gate, h;
  ffn_apply(ln2.out, p, config.activation, h_pre, gate, h);
  Matrix<S> out;
  out.noalias() = p.w2 * h;
  Matrix<S> mask2;
  if (drop) {
    mask2 = dropout_mask<S>(out.rows(), out.cols(), config.dropout, *rng);
    out.array() *= mask2.array();
  }
  Matrix<S> y = x_mid + out;

  if (cache) {
    cache->x = x;
    cache->ln_attn = std::move(ln1);
    cache->attn_out = std::move(attn);
    cache->attn_mask = std::move(mask1);
    cache->x_mid = std::move(x_mid);
    cache->ln_ffn = std::move(ln2);
    cache->h_pre = std::move(h_pre);
    cache->gate = std::move(gate);
    cache->h = std::move(h);
    cache->ffn_out = std::move(out);
    cache->ffn_mask = std::move(mask2);
    cache->y = y;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Model

namespace {

template <typename S>
Matrix<S> lookup(std::span<const int> tokens, const Parameters<S>& params, const ModelConfig& config) {
  const Eigen::Index L = static_cast<Eigen::Index>(tokens.size());
  const bool positional = config.positional == Positional::Learned;
  if (positional && L > params.positional.rows()) {
    throw std::invalid_argument("embed: sequence longer than the positional table");
  }
  Matrix<S> raw(config.d, L);
  for (Eigen::Index t = 0; t < L; ++t) {
    const int id = tokens[static_cast<std::size_t>(t)];
    if (id < 0 || id >= params.embedding.rows()) {
      throw std::out_of_range("embed: token id " + std::to_string(id) + " out of range");
    }
    raw.col(t) = params.embedding.row(id).transpose();
    if (positional) raw.col(t) += params.positional.row(t).transpose();
  }
  return raw;
}

template <typename S>
Matrix<S> treat_embedding(const Matrix<S>& raw, const ModelConfig& config, NormCache<S>* ln_cache) {
  switch (config.embed_mode.kind) {
    case EmbedMode::Kind::Vanilla:
    case EmbedMode::Kind::EmbedDetach:
      return raw;
    case EmbedMode::Kind::ScaledEmbed:
      return raw * S(config.embed_mode.scale_factor(config.d));
    case EmbedMode::Kind::EmbedLN: {
      NormCache<S> c = norm_columns(config.norm, raw);
      Matrix<S> out = c.out;
      if (ln_cache) *ln_cache = std::move(c);
      return out;
    }
  }
  return raw;
}

}  // namespace

template <typename S>
Embedded<S> embed(std::span<const int> tokens, const Parameters<S>& params, const ModelConfig& config) {
  Embedded<S> e;
  e.x = treat_embedding(lookup(tokens, params, config), config, static_cast<NormCache<S>*>(nullptr));
  e.gradient_scale = config.embed_mode.gradient_scale();
  return e;
}

template <typename S>
ForwardResult<S> model_forward(std::span<const int> tokens, const Parameters<S>& params,
                               const ModelConfig& config, Mode mode, RandomSource* rng) {
  if (static_cast<int>(tokens.size()) != config.seq_len) {
    throw std::invalid_argument("model_forward: expected " + std::to_string(config.seq_len) +
                                " tokens, got " + std::to_string(tokens.size()));
  }
  if (static_cast<int>(params.layers.size()) != config.num_layers) {
    throw std::invalid_argument("model_forward: parameter/config layer count mismatch");
  }
  const bool drop = mode == Mode::Train && config.dropout > 0.0;
  if (drop && rng == nullptr) throw std::invalid_argument("model_forward: dropout needs a RandomSource");

  ForwardResult<S> r;
  ForwardCache<S>& c = r.cache;
  c.mode = mode;
  c.tokens.assign(tokens.begin(), tokens.end());
  c.embed_raw = lookup(tokens, params, config);
  Matrix<S> x = treat_embedding(c.embed_raw, config, &c.embed_ln);
  if (drop) {
    c.embed_mask = dropout_mask<S>(x.rows(), x.cols(), config.dropout, *rng);
    x.array() *= c.embed_mask.array();
  }
  c.embedded = x;
  c.layers.resize(params.layers.size());
  for (std::size_t n = 0; n < params.layers.size(); ++n) {
    x = layer_forward(x, params.layers[n], config, mode, rng, &c.layers[n]);
  }
  c.final_ln = norm_columns(config.norm, x);
  r.logits.noalias() = params.output.transpose() * c.final_ln.out;
  c.logits = r.logits;
  return r;
}

template <typename S>
Gradients<S> model_backward(const ForwardCache<S>& cache, const Parameters<S>& params,
                            const ModelConfig& config, const Matrix<S>& dlogits) {
  if (cache.layers.size() != params.layers.size() ||
      static_cast<int>(cache.layers.size()) != config.num_layers) {
    throw std::invalid_argument("model_backward: cache/config mismatch");
  }
  if (dlogits.rows() != params.output.cols() ||
      dlogits.cols() != static_cast<Eigen::Index>(cache.tokens.size())) {
    throw std::invalid_argument("model_backward: dlogits shape mismatch");
  }
  const Eigen::Index d = config.d;
  const int heads = config.num_heads;
  const Eigen::Index dh = d / heads;
  const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));

  Gradients<S> g = zeros_like(params);
  g.output.noalias() = cache.final_ln.out * dlogits.transpose();
  Matrix<S> dx = params.output * dlogits;
  dx = norm_columns_backward(config.norm, cache.final_ln, dx);

  for (std::size_t n = params.layers.size(); n-- > 0;) {
    const LayerCache<S>& c = cache.layers[n];
    const LayerParams<S>& p = params.layers[n];
    LayerParams<S>& gl = g.layers[n];

    // y = x' + FFN(LN(x'))
    Matrix<S> dout = dx;
    if (c.ffn_mask.size() > 0) dout.array() *= c.ffn_mask.array();
    gl.w2.noalias() = dout * c.h.transpose();
    Matrix<S> dh_act = p.w2.transpose() * dout;
    Matrix<S> dh_pre;
    Matrix<S> db;
    switch (config.activation) {
      case Activation::Identity:
        dh_pre = dh_act;
        break;
      case Activation::ReLU:
        dh_pre = (dh_act.array() * (c.h_pre.array() > S(0)).template cast<S>()).matrix();
        break;
      case Activation::SiLU:
        dh_pre = (dh_act.array() * silu_grad(c.h_pre).array()).matrix();
        break;
      case Activation::SwiGLU: {
        const Matrix<S> dgate = (dh_act.array() * silu(c.h_pre).array()).matrix();
        dh_pre = (dh_act.array() * c.gate.array() * silu_grad(c.h_pre).array()).matrix();
        gl.v.noalias() = dgate * c.ln_ffn.out.transpose();
        db.noalias() = p.v.transpose() * dgate;
        break;
      }
    }
    gl.w1.noalias() = dh_pre * c.ln_ffn.out.transpose();
    if (db.size() == 0) {
      db.noalias() = p.w1.transpose() * dh_pre;
    } else {
      db.noalias() += p.w1.transpose() * dh_pre;
    }
    Matrix<S> dx_mid = dx + norm_columns_backward(config.norm, c.ln_ffn, db);

    // x' = x + Attn(LN(x))
    Matrix<S> dattn = dx_mid;
    if (c.attn_mask.size() > 0) dattn.array() *= c.attn_mask.array();
    gl.wo.noalias() = dattn * c.attn.z.transpose();
    const Matrix<S> dz = p.wo.transpose() * dattn;
    Matrix<S> dq(d, dz.cols()), dk(d, dz.cols()), dv(d, dz.cols());
    for (int i = 0; i < heads; ++i) {
      const auto dzi = dz.middleRows(i * dh, dh);
      const Matrix<S>& a = c.attn.weights[static_cast<std::size_t>(i)];
      dv.middleRows(i * dh, dh).noalias() = dzi * a;
      Matrix<S> da = dzi.transpose() * c.attn.v.middleRows(i * dh, dh);
      const Vector<S> row_dot = (a.array() * da.array()).rowwise().sum();
      Matrix<S> ds = (a.array() * (da.array().colwise() - row_dot.array())).matrix() * scale;
      dq.middleRows(i * dh, dh).noalias() = c.attn.k.middleRows(i * dh, dh) * ds.transpose();
      dk.middleRows(i * dh, dh).noalias() = c.attn.q.middleRows(i * dh, dh) * ds;
    }
    const Matrix<S>& a_in = c.ln_attn.out;
    gl.wq.noalias() = dq * a_in.transpose();
    gl.wk.noalias() = dk * a_in.transpose();
    gl.wv.noalias() = dv * a_in.transpose();
    Matrix<S> da_in = p.wq.transpose() * dq;
    da_in.noalias() += p.wk.transpose() * dk;
    da_in.noalias() += p.wv.transpose() * dv;
    dx = dx_mid + norm_columns_backward(config.norm, c.ln_attn, da_in);
  }

  if (cache.embed_mask.size() > 0) dx.array() *= cache.embed_mask.array();
  switch (config.embed_mode.kind) {
    case EmbedMode::Kind::ScaledEmbed:
      dx *= S(config.embed_mode.scale_factor(config.d));
      break;
    case EmbedMode::Kind::EmbedLN:
      dx = norm_columns_backward(config.norm, cache.embed_ln, dx);
      break;
    default:
      break;
  }
  const S gamma = S(config.embed_mode.gradient_scale());
  const bool positional = g.positional.size() > 0;
  for (std::size_t t = 0; t < cache.tokens.size(); ++t) {
    const auto col = dx.col(static_cast<Eigen::Index>(t));
    g.embedding.row(cache.tokens[t]) += gamma * col.transpose();
    if (positional) g.positional.row(static_cast<Eigen::Index>(t)) += gamma * col.transpose();
  }
  return g;
}

template <typename S>
LossResult<S> cross_entropy(const Matrix<S>& logits, std::span<const int> targets) {
  const Eigen::Index L = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != L) {
    throw std::invalid_argument("cross_entropy: target count mismatch");
  }
  LossResult<S> r;
  r.dlogits.resize(logits.rows(), L);
  double total = 0.0;
  for (Eigen::Index t = 0; t < L; ++t) {
    const int target = targets[static_cast<std::size_t>(t)];
    if (target < 0 || target >= logits.rows()) throw std::out_of_range("cross_entropy: bad target id");
    const auto col = logits.col(t).template cast<double>();
    const double mx = col.maxCoeff();
    const Eigen::VectorXd e = (col.array() - mx).exp();
    const double sum = e.sum();
    total += mx + std::log(sum) - col[target];
    r.dlogits.col(t) = (e / sum).template cast<S>();
    r.dlogits(target, t) -= S(1);
  }
  r.loss = total / static_cast<double>(L);
  r.dlogits /= S(L);
  return r;
}

#define PRELN_INSTANTIATE(S)                                                                     \
  template NormCache<S> norm_columns<S>(NormKind, const Matrix<S>&);                             \
  template Matrix<S> norm_columns_backward<S>(NormKind, const NormCache<S>&, const Matrix<S>&);  \
  template Vector<S> layer_norm<S>(const Vector<S>&);                                            \
  template Vector<S> rms_norm<S>(const Vector<S>&);                                              \
  template Vector<S> ffn_forward<S>(const Vector<S>&, const Matrix<S>&, const Matrix<S>&,        \
                                    const Matrix<S>&, Activation);                               \
  template Matrix<S> attention_forward<S>(const Matrix<S>&, const LayerParams<S>&, int, bool,    \
                                          AttentionCache<S>*);                                   \
  template Matrix<S> attention_sublayer<S>(const Matrix<S>&, const LayerParams<S>&,              \
                                           const ModelConfig&);                                  \
  template Matrix<S> ffn_sublayer<S>(const Matrix<S>&, const LayerParams<S>&, const ModelConfig&); \
  template Matrix<S> layer_forward<S>(const Matrix<S>&, const LayerParams<S>&, const ModelConfig&, \
                                      Mode, RandomSource*, LayerCache<S>*);                      \
  template Embedded<S> embed<S>(std::span<const int>, const Parameters<S>&, const ModelConfig&); \
  template ForwardResult<S> model_forward<S>(std::span<const int>, const Parameters<S>&,         \
                                             const ModelConfig&, Mode, RandomSource*);           \
  template Gradients<S> model_backward<S>(const ForwardCache<S>&, const Parameters<S>&,          \
                                          const ModelConfig&, const Matrix<S>&);                 \
  template LossResult<S> cross_entropy<S>(const Matrix<S>&, std::span<const int>);

PRELN_INSTANTIATE(float)
PRELN_INSTANTIATE(double)

}  // namespace preln
