#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "nlidb/encoding.hpp"
#include "nlidb/seq_model.hpp"

using namespace nlidb;

namespace {

using M = Mat<double>;
using V = Vec<double>;

ModelConfig small_config(int layers = 1) {
  ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.embed_dim = 6;
  cfg.type_dim = 2;
  cfg.encoder_hidden = 3;
  cfg.encoder_layers = layers;
  cfg.decoder_hidden = 4;
  cfg.attention_dim = 5;
  cfg.max_symbol_index = 2;
  return cfg;
}

TokenLayout small_layout() {
  auto l = TokenLayout::plain(12);
  // ids 5,6 = c1,c2 and 7 = v1.
  l.family[5] = 0;
  l.index[5] = 1;
  l.family[6] = 0;
  l.index[6] = 2;
  l.family[7] = 1;
  l.index[7] = 1;
  return l;
}

V sig(const V& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

// Reference GRU step written from the update equations.
V gru(const GruParams<double>& p, const V& x, const V& h) {
  const auto H = h.size();
  V gx = p.wx * x + p.b.col(0);
  V gh = p.wh * h;
  V z = sig(gx.segment(0, H) + gh.segment(0, H));
  V r = sig(gx.segment(H, H) + gh.segment(H, H));
  V hr = r.cwiseProduct(h);
  V n = (gx.segment(2 * H, H) + p.wh.block(2 * H, 0, H, H) * hr).array().tanh().matrix();
  return z.cwiseProduct(h) + (V::Ones(H) - z).cwiseProduct(n);
}

ModelParams<double> with_biases(const ModelConfig& cfg, std::uint64_t seed) {
  auto p = ModelParams<double>::random(cfg, seed, 0.4);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  p.visit([&](const std::string& name, M& m) {
    if (name.ends_with(".b") || name.ends_with("b0")) {
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = d(rng);
      }
    }
  });
  return p;
}

} // namespace

TEST_CASE("config validation") {
  auto cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.type_dim = cfg.embed_dim;
  CHECK_THROWS_AS(cfg.validate(), ModelError);
  cfg = small_config();
  cfg.encoder_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ModelError);
  auto back = config_from_json(config_to_json(small_config()));
  CHECK(back == small_config());
}

TEST_CASE("tied embedding rows for symbols are type and index halves") {
  auto cfg = small_config();
  Seq2Seq<double> model(cfg, small_layout(), ModelParams<double>::random(cfg, 1));
  const auto& p = model.params();
  const auto& phi = model.embeddings();
  CHECK(phi.row(3) == p.word_emb.row(3));
  CHECK(phi.row(6).head(2) == p.type_emb.row(0));
  CHECK(phi.row(6).tail(4) == p.index_emb.row(1));
  CHECK(phi.row(7).head(2) == p.type_emb.row(1));
  CHECK(phi.row(7).tail(4) == p.index_emb.row(0));
}

TEST_CASE("two-layer encoder matches a hand-written forward pass") {
  auto cfg = small_config(2);
  Seq2Seq<double> model(cfg, small_layout(), with_biases(cfg, 2));
  const auto& p = model.params();
  std::vector<int> src = {9, 5, 11, 7};
  auto enc = model.encode(src);

  const auto m = static_cast<Eigen::Index>(src.size());
  M x(cfg.embed_dim, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    x.col(j) = model.embeddings().row(src[static_cast<std::size_t>(j)]).transpose();
  }
  for (const auto& layer : p.encoder) {
    M out(2 * cfg.encoder_hidden, m);
    V h = V::Zero(cfg.encoder_hidden);
    for (Eigen::Index t = 0; t < m; ++t) {
      h = gru(layer.fwd, layer.w0 * x.col(t) + layer.b0.col(0), h);
      out.col(t).head(cfg.encoder_hidden) = h;
    }
    h.setZero();
    for (Eigen::Index t = m - 1; t >= 0; --t) {
      h = gru(layer.bwd, layer.w0 * x.col(t) + layer.b0.col(0), h);
      out.col(t).tail(cfg.encoder_hidden) = h;
    }
    x = out;
  }
  CHECK((enc.states - x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((enc.forward_final - x.col(m - 1).head(3)).norm() < 1e-12);
  CHECK((enc.backward_final - x.col(0).tail(3)).norm() < 1e-12);
}

TEST_CASE("decoder step matches the copy-augmented formula") {
  auto cfg = small_config();
  Seq2Seq<double> model(cfg, small_layout(), with_biases(cfg, 3));
  const auto& p = model.params();
  const auto& phi = model.embeddings();
  std::vector<int> src = {5, 9, 7, 9, 0};
  auto ctx = model.prepare(src);
  auto s0 = model.initial_state(ctx);
  auto out = model.step(s0, Vocabulary::kBos, ctx);

  const auto& H = ctx.encoder.states;
  V fb(6);
  fb << ctx.encoder.forward_final, ctx.encoder.backward_final;
  V d0 = (p.w1 * fb).array().tanh().matrix();
  CHECK((s0.hidden - d0).norm() < 1e-12);
  CHECK(s0.context.isZero());
  V x(cfg.embed_dim + 6);
  x << phi.row(Vocabulary::kBos).transpose(), V::Zero(6);
  V d1 = gru(p.decoder, x, d0);
  V e(5);
  for (int j = 0; j < 5; ++j) {
    e(j) = p.v.col(0).dot((p.w2 * H.col(j) + p.w3 * d1).array().tanh().matrix());
  }
  V a = V::Zero(5);
  double za = 0.0;
  for (int j = 0; j < 4; ++j) {  // last source id is padding
    za += std::exp(e(j));
  }
  for (int j = 0; j < 4; ++j) {
    a(j) = std::exp(e(j)) / za;
  }
  V beta = H * a;
  V o(10);
  o << d1, beta;
  V logits = phi * (p.out_proj * o);
  double z = logits.array().exp().sum();
  for (int j = 0; j < 4; ++j) {
    z += std::exp(e(j));
  }
  V probs = (logits.array().exp() / z).matrix();
  for (int j = 0; j < 4; ++j) {
    probs(src[static_cast<std::size_t>(j)]) += std::exp(e(j)) / z;
  }
  CHECK((out.state.hidden - d1).norm() < 1e-12);
  CHECK((out.attention.weights - a).norm() < 1e-12);
  CHECK((out.state.context - beta).norm() < 1e-12);
  CHECK((out.probs - probs).norm() < 1e-12);
  CHECK(out.probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.attention.weights(4) == 0.0);
}

TEST_CASE("loss is mean teacher-forced negative log-likelihood with end token") {
  auto cfg = small_config(2);
  Seq2Seq<double> model(cfg, small_layout(), with_biases(cfg, 4));
  std::vector<TrainingPair> batch = {{{5, 9, 7}, {8, 5}}, {{10, 6}, {6, 7, 11}}};
  double total = 0.0;
  int tokens = 0;
  for (const auto& pair : batch) {
    auto ctx = model.prepare(pair.source);
    auto state = model.initial_state(ctx);
    int prev = Vocabulary::kBos;
    auto target = pair.target;
    target.push_back(Vocabulary::kEos);
    for (int t : target) {
      auto out = model.step(state, prev, ctx);
      total -= std::log(out.probs(t));
      ++tokens;
      state = out.state;
      prev = t;
    }
  }
  auto stats = model.loss(batch);
  CHECK(stats.tokens == tokens);
  CHECK(stats.loss == doctest::Approx(total / tokens).epsilon(1e-12));
  auto grads = ModelParams<double>::zeros(cfg);
  CHECK(model.loss_and_grad(batch, grads).loss == doctest::Approx(stats.loss).epsilon(1e-12));
}

TEST_CASE("gradients agree with central differences on a sample of entries") {
  auto cfg = small_config(2);
  Seq2Seq<double> model(cfg, small_layout(), with_biases(cfg, 5));
  std::vector<TrainingPair> batch = {{{5, 9, 7, 5}, {5, 8, 7}}};
  auto grads = ModelParams<double>::zeros(cfg);
  model.loss_and_grad(batch, grads);
  std::vector<M*> ps;
  std::vector<const M*> gs;
  model.mutable_params().visit([&](const std::string&, M& m) { ps.push_back(&m); });
  grads.visit([&](const std::string&, const M& m) { gs.push_back(&m); });
  const double eps = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    for (Eigen::Index i = 0; i < ps[k]->size(); i += 3) {
      double& w = ps[k]->data()[i];
      const double saved = w;
      w = saved + eps;
      model.sync();
      double up = model.loss(batch).loss;
      w = saved - eps;
      model.sync();
      double down = model.loss(batch).loss;
      w = saved;
      double num = (up - down) / (2 * eps);
      double ana = gs[k]->data()[i];
      worst = std::max(worst, std::abs(num - ana) / std::max(std::abs(num) + std::abs(ana), 1e-7));
    }
  }
  model.sync();
  CHECK(worst < 1e-4);
}

TEST_CASE("non-finite losses are reported with the batch index") {
  auto cfg = small_config();
  auto params = ModelParams<double>::random(cfg, 6);
  params.out_proj(0, 0) = std::numeric_limits<double>::quiet_NaN();
  Seq2Seq<double> model(cfg, small_layout(), params);
  auto grads = ModelParams<double>::zeros(cfg);
  std::vector<TrainingPair> batch = {{{5, 9}, {5}}};
  try {
    model.loss_and_grad(batch, grads, 7);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(e.batch() == 7);
  }
}

TEST_CASE("bad inputs") {
  auto cfg = small_config();
  Seq2Seq<double> model(cfg, small_layout(), ModelParams<double>::random(cfg, 7));
  std::vector<int> empty;
  std::vector<int> outside = {3, 12};
  CHECK_THROWS_AS(model.prepare(empty), ModelError);
  CHECK_THROWS_AS(model.prepare(outside), ModelError);
  auto wrong = small_config();
  wrong.embed_dim = 8;
  CHECK_THROWS_AS(Seq2Seq<double>(cfg, small_layout(), ModelParams<double>::random(wrong, 1)), ModelError);
}

TEST_CASE("masked softmax") {
  V e(4);
  e << 1.0, 1000.0, 2.0, 3.0;
  auto w = masked_softmax<double>(e, {true, false, true, true});
  CHECK(w(1) == 0.0);
  CHECK(w.sum() == doctest::Approx(1.0));
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(w(3) == doctest::Approx(std::exp(3.0) / z));
}

TEST_CASE("global-norm clipping") {
  auto cfg = small_config();
  auto g = ModelParams<double>::random(cfg, 8, 1.0);
  double before = global_norm(g);
  CHECK(before > 5.0);
  CHECK(clip_gradients(g, 5.0) == doctest::Approx(before));
  CHECK(global_norm(g) == doctest::Approx(5.0));
  auto small = ModelParams<double>::random(cfg, 8, 1e-3);
  double n = global_norm(small);
  clip_gradients(small, 5.0);
  CHECK(global_norm(small) == doctest::Approx(n));
}

TEST_CASE("Adam follows its bias-corrected update") {
  auto cfg = small_config();
  auto params = ModelParams<double>::zeros(cfg);
  auto grads = ModelParams<double>::zeros(cfg);
  grads.w1(0, 0) = 0.5;
  grads.w1(1, 0) = -2.0;
  AdamConfig ac;
  Adam<double> opt(params, ac);
  opt.update(params, grads);
  // First step: m_hat = g, v_hat = g^2, so each entry moves by lr * g / (|g| + eps).
  CHECK(params.w1(0, 0) == doctest::Approx(-ac.learning_rate * 0.5 / (0.5 + ac.epsilon)));
  CHECK(params.w1(1, 0) == doctest::Approx(ac.learning_rate));
  CHECK(params.w1(2, 0) == 0.0);
  opt.update(params, grads);
  double m = ac.beta1 * 0.1 * 0.5 + 0.1 * 0.5;
  double v = ac.beta2 * 0.001 * 0.25 + 0.001 * 0.25;
  double step = (m / (1 - ac.beta1 * ac.beta1)) / (std::sqrt(v / (1 - ac.beta2 * ac.beta2)) + ac.epsilon);
  CHECK(params.w1(0, 0) == doctest::Approx(-ac.learning_rate * 0.5 / (0.5 + ac.epsilon) - ac.learning_rate * step));
  CHECK(opt.steps() == 2);
}

TEST_CASE("training lowers the loss on a copy task") {
  auto cfg = small_config();
  cfg.embed_dim = cfg.encoder_hidden = cfg.decoder_hidden = cfg.attention_dim = 16;
  Seq2Seq<float> model(cfg, small_layout(), ModelParams<float>::random(cfg, 9));
  std::vector<TrainingPair> pairs = {{{9, 5, 7}, {5, 7}}, {{10, 6, 7}, {6, 7}}, {{8, 7, 5}, {7}}};
  Adam<float> opt(model.params(), AdamConfig{0.02});
  std::mt19937_64 rng(1);
  double first = model.loss(pairs).loss;
  EpochStats last;
  for (int e = 1; e <= 400; ++e) {
    last = train_epoch(model, opt, pairs, 2, 5.0, rng, e);
  }
  CHECK(last.batches == 2);
  CHECK(model.loss(pairs).loss < 0.01 * first);
  for (const auto& p : pairs) {
    auto h = greedy_decode(model, p.source, 10);
    auto want = p.target;
    want.push_back(Vocabulary::kEos);
    CHECK(h.tokens == want);
  }
}

TEST_CASE("checkpoint round trip and integrity checks") {
  auto cfg = small_config(2);
  Checkpoint ck{cfg, ModelParams<double>::random(cfg, 10), 0xabc123};
  auto dir = std::filesystem::temp_directory_path() / "nlidb_unit_ckpt";
  std::filesystem::create_directories(dir);
  auto path = dir / "model.bin";
  save_checkpoint(path, ck);
  auto back = load_checkpoint(path, 0xabc123);
  CHECK(back.config == cfg);
  CHECK(back.vocab_hash == 0xabc123);
  bool same = true;
  std::vector<const M*> a;
  ck.params.visit([&](const std::string&, const M& m) { a.push_back(&m); });
  std::size_t k = 0;
  back.params.visit([&](const std::string&, const M& m) { same = same && m == *a[k++]; });
  CHECK(same);
  CHECK_THROWS_AS(load_checkpoint(path, 0x1), CheckpointError);

  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
}

TEST_CASE("parameter casts and counts") {
  auto cfg = small_config(2);
  auto p = ModelParams<double>::random(cfg, 11);
  auto f = p.cast<float>();
  CHECK(f.parameter_count() == p.parameter_count());
  CHECK(std::abs(static_cast<double>(f.w2(1, 1)) - p.w2(1, 1)) < 1e-7);
  // 3 GRUs per layer pair plus embeddings, attention and output projection.
  std::size_t expected = 12 * 6 + 3 * 2 + 2 * 4 + (3 * 6 + 3) + 2 * (9 * 3 + 9 * 3 + 9) + (3 * 6 + 3) +
                         2 * (9 * 3 + 9 * 3 + 9) + (12 * 12 + 12 * 4 + 12) + 4 * 6 + 5 * 6 + 5 * 4 + 5 + 6 * 10;
  CHECK(p.parameter_count() == expected);
}
