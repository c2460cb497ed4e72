#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "preln/numerics.hpp"
#include "preln/random.hpp"

namespace preln {

enum class Activation { Identity, ReLU, SiLU, SwiGLU };
enum class NormKind { LayerNorm, RMSNorm };
enum class Initializer { MegatronSmall, Xavier };
enum class Positional { None, Learned };
enum class Mode { Train, Eval };

std::string_view to_string(Activation a);
std::string_view to_string(NormKind n);
std::string_view to_string(Initializer i);
std::string_view to_string(Positional p);
Activation parse_activation(std::string_view s);
NormKind parse_norm_kind(std::string_view s);
Initializer parse_initializer(std::string_view s);
Positional parse_positional(std::string_view s);

// How token embeddings enter the residual stream.
struct EmbedMode {
  enum class Kind { Vanilla, ScaledEmbed, EmbedLN, EmbedDetach };

  Kind kind = Kind::Vanilla;
  std::optional<double> factor;  // ScaledEmbed multiplier; unset means sqrt(d)
  double gamma = 0.1;            // EmbedDetach gradient share

  static EmbedMode vanilla() { return {}; }
  static EmbedMode scaled(std::optional<double> factor = std::nullopt) {
    return {Kind::ScaledEmbed, factor, 0.1};
  }
  static EmbedMode layer_norm() { return {Kind::EmbedLN, std::nullopt, 0.1}; }
  static EmbedMode detach(double gamma = 0.1) { return {Kind::EmbedDetach, std::nullopt, gamma}; }

  double scale_factor(int d) const;
  // Multiplier applied to embedding-table gradients.
  double gradient_scale() const { return kind == Kind::EmbedDetach ? gamma : 1.0; }

  bool operator==(const EmbedMode&) const = default;
};

std::string_view to_string(EmbedMode::Kind k);
EmbedMode::Kind parse_embed_kind(std::string_view s);

struct ModelConfig {
  int num_layers = 2;
  int d = 64;
  int d_ffn = 256;
  int num_heads = 4;
  int seq_len = 64;
  int vocab_size = 256;
  Activation activation = Activation::SiLU;
  NormKind norm = NormKind::LayerNorm;
  EmbedMode embed_mode;
  bool causal = true;
  double dropout = 0.1;
  Positional positional = Positional::None;

  int d_head() const { return d / num_heads; }
  void validate() const;  // throws std::invalid_argument

  bool operator==(const ModelConfig&) const = default;
};

// Layer shapes from the hyper-parameter table for the 350M, 1.7B and 13B
// models ("350m", "1.7b", "13b"). Activation is the identity, matching the
// setting of the analytic bounds.
ModelConfig reference_shape(std::string_view size);

// Raised when a normalization receives a vector with no spread.
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

template <typename S>
struct LayerParams {
  Matrix<S> w1;  // d_ffn x d
  Matrix<S> w2;  // d x d_ffn
  Matrix<S> v;   // d_ffn x d, SwiGLU only (empty otherwise)
  Matrix<S> wq;  // h blocks of d_head x d, stacked to d x d
  Matrix<S> wk;
  Matrix<S> wv;
  Matrix<S> wo;  // d x d
};

template <typename S>
struct Parameters {
  Matrix<S> embedding;   // vocab x d
  Matrix<S> positional;  // seq_len x d when learned positions are on
  std::vector<LayerParams<S>> layers;
  Matrix<S> output;  // d x vocab
};

// Gradients have exactly the shapes of the parameters they belong to.
template <typename S>
using Gradients = Parameters<S>;

namespace detail {

template <typename Layer, typename F>
void visit_layer(Layer& p, F&& f) {
  f("w1", p.w1);
  f("w2", p.w2);
  if (p.v.size() > 0) f("v", p.v);
  f("wq", p.wq);
  f("wk", p.wk);
  f("wv", p.wv);
  f("wo", p.wo);
}

template <typename Params, typename F>
void visit_params(Params& p, F&& f) {
  f(std::string("embedding"), p.embedding);
  if (p.positional.size() > 0) f(std::string("positional"), p.positional);
  for (std::size_t n = 0; n < p.layers.size(); ++n) {
    visit_layer(p.layers[n], [&](const char* name, auto& m) {
      f("layer" + std::to_string(n) + "." + name, m);
    });
  }
  f(std::string("output"), p.output);
}

}  // namespace detail

// Visits tensors in checkpoint declaration order with a stable name.
template <typename S, typename F>
void for_each_tensor(Parameters<S>& p, F&& f) {
  detail::visit_params(p, std::forward<F>(f));
}
template <typename S, typename F>
void for_each_tensor(const Parameters<S>& p, F&& f) {
  detail::visit_params(p, std::forward<F>(f));
}
template <typename S, typename F>
void for_each_tensor(LayerParams<S>& p, F&& f) {
  detail::visit_layer(p, std::forward<F>(f));
}
template <typename S, typename F>
void for_each_tensor(const LayerParams<S>& p, F&& f) {
  detail::visit_layer(p, std::forward<F>(f));
}

template <typename S>
Parameters<S> zeros_like(const Parameters<S>& p) {
  Parameters<S> z = p;
  for_each_tensor(z, [](const std::string&, Matrix<S>& m) { m.setZero(); });
  return z;
}

template <typename To, typename From>
Parameters<To> cast_parameters(const Parameters<From>& p) {
  Parameters<To> out;
  out.embedding = p.embedding.template cast<To>();
  out.positional = p.positional.template cast<To>();
  out.output = p.output.template cast<To>();
  out.layers.resize(p.layers.size());
  for (std::size_t n = 0; n < p.layers.size(); ++n) {
    const auto& a = p.layers[n];
    auto& b = out.layers[n];
    b.w1 = a.w1.template cast<To>();
    b.w2 = a.w2.template cast<To>();
    b.v = a.v.template cast<To>();
    b.wq = a.wq.template cast<To>();
    b.wk = a.wk.template cast<To>();
    b.wv = a.wv.template cast<To>();
    b.wo = a.wo.template cast<To>();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initialization

// Nominal entry std of a tensor under each scheme.
double megatron_std(int d);
double xavier_std(Eigen::Index rows, Eigen::Index cols);

// Every tensor is drawn from its own substream of `rng`, so a single layer
// (or a subset of embedding rows) can be regenerated without the rest.
template <typename S>
Parameters<S> init_parameters(const ModelConfig& config, Initializer scheme,
                              const RandomSource& rng);
template <typename S>
LayerParams<S> init_layer(const ModelConfig& config, Initializer scheme,
                          const RandomSource& rng, int layer);
// Rows `ids` of the token embedding table (or the positional table).
template <typename S>
Matrix<S> init_embedding_rows(const ModelConfig& config, Initializer scheme,
                              const RandomSource& rng, std::span<const int> ids,
                              bool positional = false);

// ---------------------------------------------------------------------------
// Building blocks. Sequences are packed column-wise: d x L.

template <typename S>
Vector<S> layer_norm(const Vector<S>& x);
template <typename S>
Vector<S> rms_norm(const Vector<S>& x);

template <typename S>
struct NormCache {
  Matrix<S> out;              // normalized columns
  RowVector<S> inv_scale;     // 1/std (LN) or 1/rms (RMSNorm) per column
};

template <typename S>
NormCache<S> norm_columns(NormKind kind, const Matrix<S>& x);
template <typename S>
Matrix<S> norm_columns_backward(NormKind kind, const NormCache<S>& cache, const Matrix<S>& dout);

template <typename S>
Vector<S> ffn_forward(const Vector<S>& x, const Matrix<S>& w1, const Matrix<S>& w2,
                      const Matrix<S>& v, Activation activation);

template <typename S>
struct AttentionCache {
  Matrix<S> q, k, v;                 // d x L, head i in rows [i*d_head, (i+1)*d_head)
  std::vector<Matrix<S>> scores;     // per head L x L, before masking and softmax
  std::vector<Matrix<S>> weights;    // per head L x L, rows sum to one
  Matrix<S> z;                       // concatenated heads, d x L
};

// Multi-head self-attention on an already-normalized input. Row k of a head's
// weight matrix holds the weights of query position k over key positions.
template <typename S>
Matrix<S> attention_forward(const Matrix<S>& x, const LayerParams<S>& p, int num_heads,
                            bool causal, AttentionCache<S>* cache = nullptr);

template <typename S>
struct LayerCache {
  Matrix<S> x;
  NormCache<S> ln_attn;
  AttentionCache<S> attn;
  Matrix<S> attn_out;
  Matrix<S> attn_mask;  // dropout keep mask (already scaled); empty when unused
  Matrix<S> x_mid;      // x' = x + Attn(LN(x))
  NormCache<S> ln_ffn;
  Matrix<S> h_pre;      // W1 LN(x')
  Matrix<S> gate;       // V LN(x') for SwiGLU
  Matrix<S> h;          // activation output
  Matrix<S> ffn_out;
  Matrix<S> ffn_mask;
  Matrix<S> y;
};

// y = x' + FFN(LN(x')), x' = x + Attn(LN(x)). `rng` is only consulted for
// dropout in training mode.
template <typename S>
Matrix<S> layer_forward(const Matrix<S>& x, const LayerParams<S>& p, const ModelConfig& config,
                        Mode mode, RandomSource* rng, LayerCache<S>* cache = nullptr);

// Pieces of layer_forward, exposed for Jacobian probes.
template <typename S>
Matrix<S> attention_sublayer(const Matrix<S>& x, const LayerParams<S>& p, const ModelConfig& config);
template <typename S>
Matrix<S> ffn_sublayer(const Matrix<S>& x_mid, const LayerParams<S>& p, const ModelConfig& config);

template <typename S>
struct Embedded {
  Matrix<S> x;                 // d x L, after the embed-mode treatment
  double gradient_scale = 1.0;
};

template <typename S>
Embedded<S> embed(std::span<const int> tokens, const Parameters<S>& params, const ModelConfig& config);

template <typename S>
struct ForwardCache {
  std::vector<int> tokens;
  Matrix<S> embed_raw;      // lookup (+ positions), d x L
  NormCache<S> embed_ln;    // EmbedLN only
  Matrix<S> embed_mask;
  Matrix<S> embedded;       // input of the first layer
  std::vector<LayerCache<S>> layers;
  NormCache<S> final_ln;
  Matrix<S> logits;         // vocab x L
  Mode mode = Mode::Eval;
};

template <typename S>
struct ForwardResult {
  Matrix<S> logits;
  ForwardCache<S> cache;
};

template <typename S>
ForwardResult<S> model_forward(std::span<const int> tokens, const Parameters<S>& params,
                               const ModelConfig& config, Mode mode, RandomSource* rng);

template <typename S>
Gradients<S> model_backward(const ForwardCache<S>& cache, const Parameters<S>& params,
                            const ModelConfig& config, const Matrix<S>& dlogits);

template <typename S>
struct LossResult {
  double loss = 0.0;
  Matrix<S> dlogits;
};

// Mean token negative log-likelihood; dlogits = (softmax - onehot) / L.
template <typename S>
LossResult<S> cross_entropy(const Matrix<S>& logits, std::span<const int> targets);

}  // namespace preln
