#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "preln/model.hpp"
#include "preln/scheme.hpp"
#include "preln/verify.hpp"

using namespace preln;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.d = 8;
  c.d_ffn = 16;
  c.num_heads = 2;
  c.seq_len = 4;
  c.vocab_size = 11;
  c.dropout = 0.0;
  return c;
}

std::vector<int> tokens_for(const ModelConfig& c, std::uint64_t seed) {
  RandomSource rng(seed);
  std::vector<int> t(static_cast<std::size_t>(c.seq_len));
  for (auto& v : t) v = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c.vocab_size)));
  return t;
}

double max_abs(const MatrixD& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

// brute-force multi-head attention, one query position at a time
MatrixD naive_attention(const MatrixD& x, const LayerParams<double>& p, int heads, bool causal) {
  const int d = static_cast<int>(x.rows()), L = static_cast<int>(x.cols()), dh = d / heads;
  MatrixD z = MatrixD::Zero(d, L);
  for (int i = 0; i < heads; ++i) {
    const MatrixD wq = p.wq.middleRows(i * dh, dh), wk = p.wk.middleRows(i * dh, dh), wv = p.wv.middleRows(i * dh, dh);
    for (int k = 0; k < L; ++k) {
      const int last = causal ? k : L - 1;
      std::vector<double> s;
      for (int l = 0; l <= last; ++l) {
        double dot = 0.0;
        for (int r = 0; r < dh; ++r) dot += (wq.row(r) * x.col(k))(0) * (wk.row(r) * x.col(l))(0);
        s.push_back(dot / std::sqrt(static_cast<double>(dh)));
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double total = 0.0;
      for (double& v : s) total += (v = std::exp(v - mx));
      for (int l = 0; l <= last; ++l) z.block(i * dh, k, dh, 1) += (s[l] / total) * (wv * x.col(l));
    }
  }
  return p.wo * z;
}

LayerParams<double> random_layer(int d, int d_ffn, RandomSource& rng, bool swiglu = false) {
  LayerParams<double> p;
  p.w1 = gaussian_matrix(d_ffn, d, 0.0, 0.3, rng);
  p.w2 = gaussian_matrix(d, d_ffn, 0.0, 0.3, rng);
  if (swiglu) p.v = gaussian_matrix(d_ffn, d, 0.0, 0.3, rng);
  p.wq = gaussian_matrix(d, d, 0.0, 0.5, rng);
  p.wk = gaussian_matrix(d, d, 0.0, 0.5, rng);
  p.wv = gaussian_matrix(d, d, 0.0, 0.5, rng);
  p.wo = gaussian_matrix(d, d, 0.0, 0.5, rng);
  return p;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation and table shapes") {
  ModelConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.d_ffn = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  const ModelConfig s = reference_shape("1.7b");
  CHECK(s.num_layers == 24);
  CHECK(s.d == 2304);
  CHECK(s.d_ffn == 9216);
  CHECK(s.num_heads == 24);
  CHECK(s.d_head() == 96);
  CHECK(reference_shape("350m").d == 1024);
  CHECK(reference_shape("13b").num_layers == 40);
  CHECK_THROWS(reference_shape("7b"));
}

TEST_CASE("enum names round trip") {
  for (Activation a : {Activation::Identity, Activation::ReLU, Activation::SiLU, Activation::SwiGLU})
    CHECK(parse_activation(to_string(a)) == a);
  for (NormKind n : {NormKind::LayerNorm, NormKind::RMSNorm}) CHECK(parse_norm_kind(to_string(n)) == n);
  for (auto k : {EmbedMode::Kind::Vanilla, EmbedMode::Kind::ScaledEmbed, EmbedMode::Kind::EmbedLN,
                 EmbedMode::Kind::EmbedDetach})
    CHECK(parse_embed_kind(to_string(k)) == k);
  CHECK_THROWS(parse_activation("gelu"));
}

TEST_CASE("megatron-small init statistics at the 1.7b width") {
  const ModelConfig c = reference_shape("1.7b");
  const LayerParams<float> p = init_layer<float>(c, Initializer::MegatronSmall, RandomSource(3), 0);
  const double s1 = population_std(p.w1);
  CHECK(s1 == doctest::Approx(std::sqrt(2.0 / 11520.0)).epsilon(0.01));
  CHECK(population_std(p.w2) / s1 == doctest::Approx(std::sqrt(1.0 / 48.0)).epsilon(0.02));
  CHECK(population_std(p.wo) / s1 == doctest::Approx(std::sqrt(1.0 / 48.0)).epsilon(0.02));
  CHECK(population_std(p.wq) == doctest::Approx(s1).epsilon(0.01));
  CHECK(p.v.size() == 0);
}

TEST_CASE("xavier and swiglu init") {
  ModelConfig c = small_config();
  c.d = 256;
  c.d_ffn = 1024;
  c.num_heads = 4;
  c.num_layers = 8;
  const LayerParams<double> x = init_layer<double>(c, Initializer::Xavier, RandomSource(1), 0);
  CHECK(population_std(x.wq) == doctest::Approx(std::sqrt(1.0 / 256)).epsilon(0.02));
  CHECK(population_std(x.w1) == doctest::Approx(std::sqrt(2.0 / 1280)).epsilon(0.02));
  CHECK(population_std(x.w2) == doctest::Approx(std::sqrt(2.0 / 1280)).epsilon(0.02));

  c.activation = Activation::SwiGLU;
  const LayerParams<double> m = init_layer<double>(c, Initializer::MegatronSmall, RandomSource(1), 0);
  REQUIRE(m.v.rows() == 1024);
  CHECK(population_std(m.v) == doctest::Approx(population_std(m.w1)).epsilon(0.02));
  CHECK(population_std(m.w2) == doctest::Approx(population_std(m.w1) / 4.0).epsilon(0.02));
}

TEST_CASE("parameter shapes and substream regeneration") {
  ModelConfig c = small_config();
  c.positional = Positional::Learned;
  const auto p = init_parameters<double>(c, Initializer::MegatronSmall, RandomSource(4));
  CHECK(p.embedding.rows() == 11);
  CHECK(p.embedding.cols() == 8);
  CHECK(p.positional.rows() == 4);
  CHECK(p.output.rows() == 8);
  CHECK(p.output.cols() == 11);
  REQUIRE(p.layers.size() == 2);
  CHECK(p.layers[1].w1.rows() == 16);
  CHECK(p.layers[1].w2.cols() == 16);

  const std::vector<int> ids = {7, 2, 7};
  const MatrixD rows = init_embedding_rows<double>(c, Initializer::MegatronSmall, RandomSource(4), ids);
  for (int i = 0; i < 3; ++i) CHECK(rows.row(i) == p.embedding.row(ids[static_cast<std::size_t>(i)]));
  const LayerParams<double> l1 = init_layer<double>(c, Initializer::MegatronSmall, RandomSource(4), 1);
  CHECK(l1.wk == p.layers[1].wk);
  CHECK(l1.w2 == p.layers[1].w2);

  const auto again = init_parameters<double>(c, Initializer::MegatronSmall, RandomSource(4));
  CHECK(again.output == p.output);
}

TEST_CASE("norms") {
  RandomSource rng(6);
  const VectorD x = gaussian_matrix(32, 1, 0.7, 2.0, rng).col(0);
  const VectorD n = layer_norm(x);
  CHECK(std::abs(n.mean()) < 1e-9);
  CHECK(population_std(n) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK((layer_norm(n) - n).cwiseAbs().maxCoeff() < 1e-9);
  const VectorD shifted = (3.5 * x.array() - 11.0).matrix();
  CHECK((layer_norm(shifted) - n).cwiseAbs().maxCoeff() < 1e-9);
  const VectorD r = rms_norm(x);
  CHECK(std::sqrt(r.squaredNorm() / 32) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((rms_norm(VectorD(0.25 * x)) - r).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(layer_norm(VectorD(VectorD::Constant(5, 2.0))), DegenerateInput);
  CHECK_THROWS_AS(rms_norm(VectorD(VectorD::Zero(5))), DegenerateInput);
  MatrixD cols(3, 2);
  cols << 1, 5, 2, 5, 3, 5;
  CHECK_THROWS_AS(norm_columns(NormKind::LayerNorm, cols), DegenerateInput);
}

TEST_CASE("ffn forward") {
  const int d = 4, f = 6;
  MatrixD w1 = MatrixD::Zero(f, d), w2 = MatrixD::Zero(d, f);
  w1.topRows(d).setIdentity();
  w2.leftCols(d).setIdentity();
  const VectorD x = (VectorD(4) << 1.0, -2.0, 0.5, 3.0).finished();
  CHECK(ffn_forward<double>(x, w1, w2, MatrixD(), Activation::Identity) == x);
  const MatrixD neg = -MatrixD::Ones(f, d);
  const VectorD pos = VectorD::Constant(d, 1.0);
  CHECK(ffn_forward<double>(pos, neg, w2, MatrixD(), Activation::ReLU).isZero(0.0));

  RandomSource rng(12);
  const MatrixD a = gaussian_matrix(f, d, 0.0, 1.0, rng), b = gaussian_matrix(d, f, 0.0, 1.0, rng),
                v = gaussian_matrix(f, d, 0.0, 1.0, rng);
  for (Activation act : {Activation::Identity, Activation::ReLU, Activation::SiLU, Activation::SwiGLU}) {
    VectorD expect = VectorD::Zero(d);
    for (int j = 0; j < f; ++j) {
      double h = 0.0, g = 0.0;
      for (int k = 0; k < d; ++k) {
        h += a(j, k) * x(k);
        g += v(j, k) * x(k);
      }
      double act_h = h;
      if (act == Activation::ReLU) act_h = h > 0 ? h : 0.0;
      if (act == Activation::SiLU || act == Activation::SwiGLU) act_h = h / (1.0 + std::exp(-h));
      if (act == Activation::SwiGLU) act_h *= g;
      for (int i = 0; i < d; ++i) expect(i) += b(i, j) * act_h;
    }
    const VectorD got = ffn_forward<double>(x, a, b, act == Activation::SwiGLU ? v : MatrixD(), act);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention matches a brute-force loop") {
  RandomSource rng(13);
  const LayerParams<double> p = random_layer(8, 16, rng);
  const MatrixD x = gaussian_matrix(8, 4, 0.0, 1.0, rng);
  for (bool causal : {false, true}) {
    AttentionCache<double> cache;
    const MatrixD out = attention_forward<double>(x, p, 2, causal, &cache);
    CHECK(max_abs(out - naive_attention(x, p, 2, causal)) < 1e-12);
    for (const auto& a : cache.weights) {
      CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
      if (causal) {
        for (int k = 0; k < 4; ++k)
          for (int l = k + 1; l < 4; ++l) CHECK(a(k, l) == 0.0);
      }
    }
  }
}

TEST_CASE("attention special cases") {
  RandomSource rng(14);
  LayerParams<double> p = random_layer(8, 16, rng);
  const MatrixD x1 = gaussian_matrix(8, 1, 0.0, 1.0, rng);
  AttentionCache<double> cache;
  const MatrixD out = attention_forward<double>(x1, p, 2, true, &cache);
  CHECK(cache.weights[0](0, 0) == 1.0);
  CHECK(max_abs(out - p.wo * p.wv * x1) < 1e-12);

  p.wq.setZero();
  const MatrixD x = gaussian_matrix(8, 5, 0.0, 1.0, rng);
  AttentionCache<double> c2;
  attention_forward<double>(x, p, 2, false, &c2);
  for (const auto& a : c2.weights) CHECK((a.array() - 0.2).abs().maxCoeff() < 1e-15);
}

TEST_CASE("layer forward on a hand-computed example") {
  ModelConfig c;
  c.num_layers = 1;
  c.d = 4;
  c.d_ffn = 4;
  c.num_heads = 1;
  c.seq_len = 2;
  c.activation = Activation::Identity;
  c.dropout = 0.0;
  LayerParams<double> p;
  p.wq = MatrixD::Zero(4, 4);
  p.wk = MatrixD::Zero(4, 4);
  p.wv = MatrixD::Identity(4, 4);
  p.wo = 0.5 * MatrixD::Identity(4, 4);
  p.w1 = MatrixD::Identity(4, 4);
  p.w2 = 0.1 * MatrixD::Identity(4, 4);
  MatrixD x(4, 2);
  x << 1, 2, -1, 0, 1, -2, -1, 0;

  // position 1 sees only itself; position 2 averages both normalized inputs
  const double r2 = std::sqrt(2.0);
  MatrixD xm(4, 2);
  xm << 1.5, 2.25 + r2 / 4, -1.5, -0.25, 1.5, -1.75 - r2 / 4, -1.5, -0.25;
  const double sd2 = std::sqrt((8.5 + 2 * r2) / 4.0);
  MatrixD y = xm;
  y.col(0) += 0.1 * (VectorD(4) << 1, -1, 1, -1).finished();
  y.col(1) += 0.1 * xm.col(1) / sd2;

  LayerCache<double> cache;
  const MatrixD got = layer_forward<double>(x, p, c, Mode::Eval, nullptr, &cache);
  CHECK(max_abs(cache.x_mid - xm) < 1e-12);
  CHECK(max_abs(got - y) < 1e-12);
}

TEST_CASE("zero sub-layers pass the residual stream through") {
  ModelConfig c = small_config();
  for (Activation act : {Activation::Identity, Activation::ReLU, Activation::SiLU, Activation::SwiGLU}) {
    c.activation = act;
    LayerParams<double> p = init_layer<double>(c, Initializer::MegatronSmall, RandomSource(1), 0);
    for_each_tensor(p, [](const std::string&, MatrixD& m) { m.setZero(); });
    RandomSource rng(2);
    const MatrixD x = gaussian_matrix(c.d, c.seq_len, 0.0, 1.0, rng);
    const MatrixD y = layer_forward<double>(x, p, c, Mode::Eval, nullptr);
    CHECK(y.rows() == x.rows());
    CHECK(y.cols() == x.cols());
    CHECK(max_abs(y - x) == 0.0);
  }
}

TEST_CASE("embedding treatments") {
  ModelConfig c = reference_shape("1.7b");
  c.num_layers = 1;
  c.seq_len = 16;
  std::vector<int> ids(16);
  std::iota(ids.begin(), ids.end(), 100);
  Parameters<double> table;
  table.embedding = init_embedding_rows<double>(c, Initializer::MegatronSmall, RandomSource(5), ids);
  std::vector<int> local(16);
  std::iota(local.begin(), local.end(), 0);

  c.embed_mode = EmbedMode::scaled();
  const Embedded<double> s = embed<double>(local, table, c);
  CHECK(population_std(s.x) == doctest::Approx(std::sqrt(0.4)).epsilon(0.02));
  CHECK(s.gradient_scale == 1.0);

  c.embed_mode = EmbedMode::layer_norm();
  const Embedded<double> l = embed<double>(local, table, c);
  CHECK((column_std(l.x).array() - 1.0).abs().maxCoeff() < 1e-6);

  c.embed_mode = EmbedMode::detach();
  const Embedded<double> d = embed<double>(local, table, c);
  c.embed_mode = EmbedMode::vanilla();
  const Embedded<double> v = embed<double>(local, table, c);
  CHECK(d.x == v.x);
  CHECK(d.gradient_scale == 0.1);
  CHECK(v.gradient_scale == 1.0);

  c.embed_mode = EmbedMode::scaled(2.0);
  CHECK(embed<double>(local, table, c).x == 2.0 * v.x);
  CHECK_THROWS(embed<double>(std::vector<int>{0, 99}, table, c));
}

TEST_CASE("model forward") {
  ModelConfig c = small_config();
  const auto p = init_parameters<double>(c, Initializer::MegatronSmall, RandomSource(7));
  const auto tokens = tokens_for(c, 1);
  const auto a = model_forward<double>(tokens, p, c, Mode::Eval, nullptr);
  const auto b = model_forward<double>(tokens, p, c, Mode::Eval, nullptr);
  CHECK(a.logits.rows() == 11);
  CHECK(a.logits.cols() == 4);
  CHECK(a.logits == b.logits);
  CHECK(a.cache.layers.size() == 2);

  ModelConfig c0 = c;
  c0.num_layers = 0;
  const auto p0 = init_parameters<double>(c0, Initializer::MegatronSmall, RandomSource(7));
  const auto f0 = model_forward<double>(tokens, p0, c0, Mode::Eval, nullptr);
  MatrixD expect(11, 4);
  for (int t = 0; t < 4; ++t) {
    const VectorD e = p0.embedding.row(tokens[static_cast<std::size_t>(t)]).transpose();
    expect.col(t) = p0.output.transpose() * layer_norm(e);
  }
  CHECK(max_abs(f0.logits - expect) < 1e-12);
  CHECK_THROWS(model_forward<double>(std::vector<int>{1, 2}, p, c, Mode::Eval, nullptr));
}

TEST_CASE("dropout only in training mode") {
  ModelConfig c = small_config();
  c.dropout = 0.5;
  const auto p = init_parameters<double>(c, Initializer::MegatronSmall, RandomSource(7));
  const auto tokens = tokens_for(c, 2);
  RandomSource rng(3);
  const auto tr = model_forward<double>(tokens, p, c, Mode::Train, &rng);
  const auto& mask = tr.cache.layers[0].attn_mask;
  REQUIRE(mask.size() == 32);
  CHECK(((mask.array() == 0.0) || (mask.array() == 2.0)).all());
  CHECK((mask.array() == 0.0).any());
  const auto ev = model_forward<double>(tokens, p, c, Mode::Eval, nullptr);
  CHECK(ev.cache.layers[0].attn_mask.size() == 0);
  c.dropout = 0.0;
  RandomSource rng2(3);
  const auto tr0 = model_forward<double>(tokens, p, c, Mode::Train, &rng2);
  CHECK(tr0.logits == ev.logits);
}

TEST_CASE("cross entropy") {
  const MatrixD uniform = MatrixD::Zero(256, 3);
  const std::vector<int> t = {0, 17, 255};
  CHECK(cross_entropy<double>(uniform, t).loss == doctest::Approx(std::log(256.0)).epsilon(1e-12));
  MatrixD sure = MatrixD::Constant(5, 2, -50.0);
  sure(1, 0) = 50.0;
  sure(3, 1) = 50.0;
  CHECK(cross_entropy<double>(sure, std::vector<int>{1, 3}).loss < 1e-30);

  RandomSource rng(4);
  const MatrixD z = gaussian_matrix(7, 3, 0.0, 2.0, rng);
  const std::vector<int> tg = {6, 0, 3};
  const auto r = cross_entropy<double>(z, tg);
  MatrixD fd(7, 3);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 3; ++j) {
      MatrixD zp = z, zm = z;
      zp(i, j) += 1e-5;
      zm(i, j) -= 1e-5;
      fd(i, j) = (cross_entropy<double>(zp, tg).loss - cross_entropy<double>(zm, tg).loss) / 2e-5;
    }
  CHECK(max_abs(fd - r.dlogits) < 1e-6);
}

TEST_CASE("backward: zero upstream gradient gives zero gradients") {
  ModelConfig c = small_config();
  const auto p = init_parameters<double>(c, Initializer::MegatronSmall, RandomSource(8));
  const auto fwd = model_forward<double>(tokens_for(c, 3), p, c, Mode::Eval, nullptr);
  const auto g = model_backward<double>(fwd.cache, p, c, MatrixD::Zero(11, 4));
  for_each_tensor(g, [](const std::string& name, const MatrixD& m) {
    INFO(name);
    CHECK(max_abs(m) == 0.0);
  });
  CHECK_THROWS(model_backward<double>(fwd.cache, p, c, MatrixD::Zero(10, 4)));
}

TEST_CASE("backward matches finite differences") {
  for (Activation act : {Activation::Identity, Activation::ReLU, Activation::SiLU, Activation::SwiGLU}) {
    for (NormKind norm : {NormKind::LayerNorm, NormKind::RMSNorm}) {
      for (EmbedMode e : {EmbedMode::vanilla(), EmbedMode::scaled(), EmbedMode::layer_norm(), EmbedMode::detach()}) {
        const GradCheckReport r = gradient_check(gradcheck_config(act, norm, e), 1);
        INFO(to_string(act), " ", to_string(norm), " ", to_string(e.kind), " worst ", r.worst);
        CHECK(r.passed);
        CHECK(r.max_rel_error < 1e-4);
      }
    }
  }
  ModelConfig pos = gradcheck_config(Activation::SiLU, NormKind::LayerNorm, EmbedMode::scaled());
  pos.positional = Positional::Learned;
  CHECK(gradient_check(pos, 2).passed);
}

TEST_CASE("embed detach scales only the embedding gradient") {
  ModelConfig c = small_config();
  const auto p = init_parameters<double>(c, Initializer::MegatronSmall, RandomSource(9));
  const auto tokens = tokens_for(c, 4);
  const std::vector<int> targets = tokens_for(c, 5);
  auto grads = [&](EmbedMode e) {
    c.embed_mode = e;
    const auto fwd = model_forward<double>(tokens, p, c, Mode::Eval, nullptr);
    return std::make_pair(fwd.logits, model_backward<double>(fwd.cache, p, c,
                                                            cross_entropy<double>(fwd.logits, targets).dlogits));
  };
  const auto [lv, gv] = grads(EmbedMode::vanilla());
  const auto [ld, gd] = grads(EmbedMode::detach(0.1));
  const auto [l1, g1] = grads(EmbedMode::detach(1.0));
  CHECK(lv == ld);
  CHECK(lv == l1);
  CHECK(max_abs(gd.embedding - 0.1 * gv.embedding) < 1e-15);
  CHECK(g1.embedding == gv.embedding);
  CHECK(gd.output == gv.output);
  for (std::size_t n = 0; n < gv.layers.size(); ++n) {
    CHECK(gd.layers[n].w1 == gv.layers[n].w1);
    CHECK(gd.layers[n].wq == gv.layers[n].wq);
  }
}

TEST_CASE("single precision forward tracks double precision") {
  ModelConfig c = small_config();
  const auto p = init_parameters<double>(c, Initializer::MegatronSmall, RandomSource(10));
  const auto pf = cast_parameters<float>(p);
  const auto tokens = tokens_for(c, 6);
  const auto d = model_forward<double>(tokens, p, c, Mode::Eval, nullptr);
  const auto f = model_forward<float>(tokens, pf, c, Mode::Eval, nullptr);
  CHECK(max_abs(d.logits - f.logits.cast<double>()) < 1e-5);
}

}  // TEST_SUITE
