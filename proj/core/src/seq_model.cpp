#include "nlidb/seq_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "nlidb/encoding.hpp"

namespace nlidb {

NonFiniteLoss::NonFiniteLoss(int batch, double loss)
    : ModelError("non-finite loss " + std::to_string(loss) + " in batch " + std::to_string(batch)),
      batch_(batch) {}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw ModelError(std::string(name) + " must be positive");
    }
  };
  positive(vocab_size, "vocab_size");
  positive(embed_dim, "embed_dim");
  positive(type_dim, "type_dim");
  positive(encoder_hidden, "encoder_hidden");
  positive(encoder_layers, "encoder_layers");
  positive(decoder_hidden, "decoder_hidden");
  positive(attention_dim, "attention_dim");
  positive(max_symbol_index, "max_symbol_index");
  if (type_dim >= embed_dim) {
    throw ModelError("type_dim must be smaller than embed_dim");
  }
}

TokenLayout TokenLayout::from(const Vocabulary& vocab) {
  TokenLayout out = plain(vocab.size());
  for (int id = 0; id < vocab.size(); ++id) {
    if (auto ref = vocab.symbol(id)) {
      out.family[id] = static_cast<int>(ref->family);
      out.index[id] = ref->index;
    }
  }
  return out;
}

TokenLayout TokenLayout::plain(int vocab_size) {
  TokenLayout out;
  out.family.assign(static_cast<std::size_t>(vocab_size), -1);
  out.index.assign(static_cast<std::size_t>(vocab_size), 0);
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

template <typename S>
GruParams<S> gru_zeros(int in, int hidden) {
  return {Mat<S>::Zero(3 * hidden, in), Mat<S>::Zero(3 * hidden, hidden), Mat<S>::Zero(3 * hidden, 1)};
}

} // namespace

template <typename S>
ModelParams<S> ModelParams<S>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const int D = cfg.embed_dim;
  const int H = cfg.encoder_hidden;
  const int Hd = cfg.decoder_hidden;
  const int A = cfg.attention_dim;
  ModelParams p;
  p.word_emb = Mat<S>::Zero(cfg.vocab_size, D);
  p.type_emb = Mat<S>::Zero(3, cfg.type_dim);
  p.index_emb = Mat<S>::Zero(cfg.max_symbol_index, D - cfg.type_dim);
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    int in = l == 0 ? D : 2 * H;
    p.encoder.push_back({Mat<S>::Zero(H, in), Mat<S>::Zero(H, 1), gru_zeros<S>(H, H), gru_zeros<S>(H, H)});
  }
  p.decoder = gru_zeros<S>(D + 2 * H, Hd);
  p.w1 = Mat<S>::Zero(Hd, 2 * H);
  p.w2 = Mat<S>::Zero(A, 2 * H);
  p.w3 = Mat<S>::Zero(A, Hd);
  p.v = Mat<S>::Zero(A, 1);
  p.out_proj = Mat<S>::Zero(D, Hd + 2 * H);
  return p;
}

template <typename S>
ModelParams<S> ModelParams<S>::random(const ModelConfig& cfg, std::uint64_t seed, double scale) {
  auto p = zeros(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  p.visit([&](const std::string& name, Mat<S>& m) {
    bool bias = name.ends_with(".b") || name.ends_with("b0");
    if (bias) {
      return;
    }
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        m(i, j) = static_cast<S>(dist(rng));
      }
    }
  });
  return p;
}

template <typename S>
template <typename T>
ModelParams<T> ModelParams<S>::cast() const {
  ModelParams<T> out;
  out.word_emb = word_emb.template cast<T>();
  out.type_emb = type_emb.template cast<T>();
  out.index_emb = index_emb.template cast<T>();
  for (const auto& l : encoder) {
    out.encoder.push_back({l.w0.template cast<T>(), l.b0.template cast<T>(),
                           {l.fwd.wx.template cast<T>(), l.fwd.wh.template cast<T>(), l.fwd.b.template cast<T>()},
                           {l.bwd.wx.template cast<T>(), l.bwd.wh.template cast<T>(), l.bwd.b.template cast<T>()}});
  }
  out.decoder = {decoder.wx.template cast<T>(), decoder.wh.template cast<T>(), decoder.b.template cast<T>()};
  out.w1 = w1.template cast<T>();
  out.w2 = w2.template cast<T>();
  out.w3 = w3.template cast<T>();
  out.v = v.template cast<T>();
  out.out_proj = out_proj.template cast<T>();
  return out;
}

template <typename S>
void ModelParams<S>::set_zero() {
  visit([](const std::string&, Mat<S>& m) { m.setZero(); });
}

template <typename S>
std::size_t ModelParams<S>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Mat<S>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

template <typename S>
Vec<S> sigmoid(const Vec<S>& x) {
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

template <typename S>
struct GruCache {
  Vec<S> x;
  Vec<S> h;
  Vec<S> z;
  Vec<S> r;
  Vec<S> n;
};

// Cho et al. GRU: h' = z*h + (1-z)*n with n = tanh(Wx_n x + b_n + Wh_n (r*h)).
template <typename S>
Vec<S> gru_forward(const GruParams<S>& p, const Vec<S>& x, const Vec<S>& h, GruCache<S>* cache) {
  const Eigen::Index H = h.size();
  Vec<S> a = p.wx * x + p.b.col(0);
  Vec<S> zr = a.head(2 * H);
  zr.noalias() += p.wh.topRows(2 * H) * h;
  Vec<S> z = sigmoid<S>(zr.head(H));
  Vec<S> r = sigmoid<S>(zr.tail(H));
  Vec<S> rh = r.cwiseProduct(h);
  Vec<S> pre = a.tail(H);
  pre.noalias() += p.wh.bottomRows(H) * rh;
  Vec<S> n = pre.array().tanh().matrix();
  Vec<S> out = z.cwiseProduct(h) + (Vec<S>::Ones(H) - z).cwiseProduct(n);
  if (cache != nullptr) {
    *cache = {x, h, std::move(z), std::move(r), std::move(n)};
  }
  return out;
}

template <typename S>
void gru_backward(const GruParams<S>& p, const GruCache<S>& c, const Vec<S>& dout, GruParams<S>& g,
                  Vec<S>& dx, Vec<S>& dh) {
  const Eigen::Index H = c.h.size();
  const auto one = Vec<S>::Ones(H);
  Vec<S> dz = dout.cwiseProduct(c.h - c.n);
  Vec<S> dan = dout.cwiseProduct(one - c.z).cwiseProduct(one - c.n.cwiseProduct(c.n));
  dh = dout.cwiseProduct(c.z);
  Vec<S> rh = c.r.cwiseProduct(c.h);
  g.wh.bottomRows(H).noalias() += dan * rh.transpose();
  Vec<S> drh = p.wh.bottomRows(H).transpose() * dan;
  Vec<S> da(3 * H);
  da.head(H) = dz.cwiseProduct(c.z).cwiseProduct(one - c.z);
  da.segment(H, H) = drh.cwiseProduct(c.h).cwiseProduct(c.r).cwiseProduct(one - c.r);
  da.tail(H) = dan;
  dh += drh.cwiseProduct(c.r);
  g.wh.topRows(2 * H).noalias() += da.head(2 * H) * c.h.transpose();
  dh.noalias() += p.wh.topRows(2 * H).transpose() * da.head(2 * H);
  g.wx.noalias() += da * c.x.transpose();
  g.b.col(0) += da;
  dx.noalias() = p.wx.transpose() * da;
}

template <typename S>
struct LayerCache {
  Mat<S> input;
  std::vector<GruCache<S>> fwd;
  std::vector<GruCache<S>> bwd;
};

template <typename S>
struct StepCache {
  int prev = 0;
  GruCache<S> gru;
  Vec<S> hidden;
  Mat<S> tanh_keys;
  Vec<S> weights;
  Vec<S> output;
  Vec<S> query;
  Vec<S> dlogits;
  Vec<S> denergy_copy;
};

} // namespace

template <typename S>
Vec<S> masked_softmax(const Vec<S>& e, const std::vector<bool>& mask) {
  Vec<S> out = Vec<S>::Zero(e.size());
  S m = -std::numeric_limits<S>::infinity();
  for (Eigen::Index j = 0; j < e.size(); ++j) {
    if (mask[static_cast<std::size_t>(j)]) {
      m = std::max(m, e(j));
    }
  }
  S total = 0;
  for (Eigen::Index j = 0; j < e.size(); ++j) {
    if (mask[static_cast<std::size_t>(j)]) {
      out(j) = std::exp(e(j) - m);
      total += out(j);
    }
  }
  if (total > 0) {
    out /= total;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

template <typename S>
struct Seq2Seq<S>::Workspace {
  std::vector<LayerCache<S>> layers;
  std::vector<StepCache<S>> steps;
};

template <typename S>
Seq2Seq<S>::Seq2Seq(ModelConfig cfg, TokenLayout layout, ModelParams<S> params)
    : cfg_(cfg), layout_(std::move(layout)), params_(std::move(params)) {
  cfg_.validate();
  if (layout_.size() != cfg_.vocab_size) {
    throw ModelError("token layout has " + std::to_string(layout_.size()) + " entries, vocabulary " +
                     std::to_string(cfg_.vocab_size));
  }
  for (int id = 0; id < layout_.size(); ++id) {
    int idx = layout_.index[static_cast<std::size_t>(id)];
    if (layout_.family[static_cast<std::size_t>(id)] >= 0 && (idx < 1 || idx > cfg_.max_symbol_index)) {
      throw ModelError("symbol index " + std::to_string(idx) + " outside 1.." +
                       std::to_string(cfg_.max_symbol_index));
    }
  }
  auto expected = ModelParams<S>::zeros(cfg_);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  expected.visit([&](const std::string&, const Mat<S>& m) { shapes.emplace_back(m.rows(), m.cols()); });
  std::size_t k = 0;
  params_.visit([&](const std::string& name, const Mat<S>& m) {
    if (k >= shapes.size() || shapes[k] != std::make_pair(m.rows(), m.cols())) {
      throw ModelError("parameter " + name + " does not match the configuration");
    }
    ++k;
  });
  if (k != shapes.size()) {
    throw ModelError("parameter set does not match the configuration");
  }
  sync();
}

template <typename S>
void Seq2Seq<S>::sync() {
  phi_ = params_.word_emb;
  const int Dt = cfg_.type_dim;
  const int Di = cfg_.embed_dim - Dt;
  for (int id = 0; id < cfg_.vocab_size; ++id) {
    int fam = layout_.family[static_cast<std::size_t>(id)];
    if (fam >= 0) {
      phi_.row(id).head(Dt) = params_.type_emb.row(fam);
      phi_.row(id).tail(Di) = params_.index_emb.row(layout_.index[static_cast<std::size_t>(id)] - 1);
    }
  }
}

template <typename S>
EncoderOutput<S> Seq2Seq<S>::encode(std::span<const int> source) const {
  return prepare(source).encoder;
}

namespace {

template <typename S>
void check_ids(std::span<const int> ids, int vocab, const char* what) {
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw ModelError(std::string(what) + " id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

template <typename S>
EncoderOutput<S> run_encoder(const ModelParams<S>& p, const Mat<S>& phi, std::span<const int> source,
                             std::vector<LayerCache<S>>* caches) {
  const auto m = static_cast<Eigen::Index>(source.size());
  Mat<S> x(phi.cols(), m);
  for (Eigen::Index j = 0; j < m; ++j) {
    x.col(j) = phi.row(source[static_cast<std::size_t>(j)]).transpose();
  }
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const auto& layer = p.encoder[l];
    const Eigen::Index H = layer.w0.rows();
    Mat<S> y = layer.w0 * x;
    y.colwise() += layer.b0.col(0);
    Mat<S> out(2 * H, m);
    LayerCache<S>* cache = caches != nullptr ? &(*caches)[l] : nullptr;
    if (cache != nullptr) {
      cache->input = x;
      cache->fwd.resize(static_cast<std::size_t>(m));
      cache->bwd.resize(static_cast<std::size_t>(m));
    }
    Vec<S> h = Vec<S>::Zero(H);
    for (Eigen::Index t = 0; t < m; ++t) {
      h = gru_forward<S>(layer.fwd, y.col(t), h, cache ? &cache->fwd[static_cast<std::size_t>(t)] : nullptr);
      out.col(t).head(H) = h;
    }
    h.setZero();
    for (Eigen::Index t = m - 1; t >= 0; --t) {
      h = gru_forward<S>(layer.bwd, y.col(t), h, cache ? &cache->bwd[static_cast<std::size_t>(t)] : nullptr);
      out.col(t).tail(H) = h;
    }
    x = std::move(out);
  }
  const Eigen::Index H = x.rows() / 2;
  EncoderOutput<S> enc;
  enc.forward_final = x.col(m - 1).head(H);
  enc.backward_final = x.col(0).tail(H);
  enc.states = std::move(x);
  return enc;
}

} // namespace

template <typename S>
SourceContext<S> Seq2Seq<S>::prepare(std::span<const int> source) const {
  if (source.empty()) {
    throw ModelError("empty source sequence");
  }
  check_ids<S>(source, cfg_.vocab_size, "source");
  SourceContext<S> ctx;
  ctx.source.assign(source.begin(), source.end());
  ctx.encoder = run_encoder<S>(params_, phi_, source, nullptr);
  ctx.keys = params_.w2 * ctx.encoder.states;
  ctx.valid.resize(source.size());
  for (std::size_t j = 0; j < source.size(); ++j) {
    ctx.valid[j] = source[j] != Vocabulary::kPad;
  }
  return ctx;
}

template <typename S>
DecoderState<S> Seq2Seq<S>::initial_state(const SourceContext<S>& ctx) const {
  const auto H = ctx.encoder.forward_final.size();
  Vec<S> s(2 * H);
  s << ctx.encoder.forward_final, ctx.encoder.backward_final;
  return {(params_.w1 * s).array().tanh().matrix(), Vec<S>::Zero(2 * H)};
}

template <typename S>
Attention<S> Seq2Seq<S>::attend(const Vec<S>& hidden, const SourceContext<S>& ctx) const {
  Mat<S> t = ctx.keys;
  t.colwise() += params_.w3 * hidden;
  t = t.array().tanh().matrix();
  Attention<S> a;
  a.energies = t.transpose() * params_.v.col(0);
  a.weights = masked_softmax<S>(a.energies, ctx.valid);
  a.context = ctx.encoder.states * a.weights;
  return a;
}

namespace {

// Copy-augmented distribution from logits and energies; returns log Z.
template <typename S>
S log_partition(const Vec<S>& logits, const Vec<S>& energies, const std::vector<bool>& valid) {
  S m = logits.maxCoeff();
  for (Eigen::Index j = 0; j < energies.size(); ++j) {
    if (valid[static_cast<std::size_t>(j)]) {
      m = std::max(m, energies(j));
    }
  }
  S z = (logits.array() - m).exp().sum();
  for (Eigen::Index j = 0; j < energies.size(); ++j) {
    if (valid[static_cast<std::size_t>(j)]) {
      z += std::exp(energies(j) - m);
    }
  }
  return m + std::log(z);
}

template <typename S>
Vec<S> copy_distribution(const Vec<S>& logits, const Vec<S>& energies, const std::vector<int>& source,
                         const std::vector<bool>& valid, S log_z) {
  Vec<S> probs = (logits.array() - log_z).exp().matrix();
  for (std::size_t j = 0; j < source.size(); ++j) {
    if (valid[j]) {
      probs(source[j]) += std::exp(energies(static_cast<Eigen::Index>(j)) - log_z);
    }
  }
  return probs;
}

} // namespace

template <typename S>
StepOutput<S> Seq2Seq<S>::step(const DecoderState<S>& state, int prev_token, const SourceContext<S>& ctx) const {
  if (prev_token < 0 || prev_token >= cfg_.vocab_size) {
    throw ModelError("token id " + std::to_string(prev_token) + " outside vocabulary");
  }
  const int D = cfg_.embed_dim;
  Vec<S> x(D + state.context.size());
  x << phi_.row(prev_token).transpose(), state.context;
  StepOutput<S> out;
  out.state.hidden = gru_forward<S>(params_.decoder, x, state.hidden, nullptr);
  out.attention = attend(out.state.hidden, ctx);
  out.state.context = out.attention.context;
  Vec<S> o(out.state.hidden.size() + out.state.context.size());
  o << out.state.hidden, out.state.context;
  Vec<S> logits = phi_ * (params_.out_proj * o);
  S log_z = log_partition<S>(logits, out.attention.energies, ctx.valid);
  out.probs = copy_distribution<S>(logits, out.attention.energies, ctx.source, ctx.valid, log_z);
  return out;
}

template <typename S>
LossStats Seq2Seq<S>::loss(std::span<const TrainingPair> batch) const {
  return run(batch, nullptr, -1);
}

template <typename S>
LossStats Seq2Seq<S>::loss_and_grad(std::span<const TrainingPair> batch, ModelParams<S>& grads,
                                    int batch_index) const {
  return run(batch, &grads, batch_index);
}

template <typename S>
LossStats Seq2Seq<S>::run(std::span<const TrainingPair> batch, ModelParams<S>* grads, int batch_index) const {
  const int D = cfg_.embed_dim;
  const int Hd = cfg_.decoder_hidden;
  const int H2 = 2 * cfg_.encoder_hidden;
  const auto& p = params_;

  int total_tokens = 0;
  for (const auto& pair : batch) {
    total_tokens += static_cast<int>(pair.target.size()) + 1;
  }
  LossStats stats;
  stats.tokens = total_tokens;
  if (total_tokens == 0) {
    return stats;
  }
  const S scale = S(1) / static_cast<S>(total_tokens);

  Mat<S> dphi;
  if (grads != nullptr) {
    if (grads->word_emb.rows() != p.word_emb.rows()) {
      *grads = ModelParams<S>::zeros(cfg_);
    } else {
      grads->set_zero();
    }
    dphi = Mat<S>::Zero(phi_.rows(), phi_.cols());
  }

  double total_nll = 0.0;
  Workspace ws;
  ws.layers.resize(p.encoder.size());
  for (const auto& pair : batch) {
    if (pair.source.empty()) {
      throw ModelError("empty source sequence");
    }
    check_ids<S>(pair.source, cfg_.vocab_size, "source");
    check_ids<S>(pair.target, cfg_.vocab_size, "target");

    SourceContext<S> ctx;
    ctx.source = pair.source;
    ctx.encoder = run_encoder<S>(p, phi_, pair.source, grads ? &ws.layers : nullptr);
    ctx.keys = p.w2 * ctx.encoder.states;
    ctx.valid.resize(pair.source.size());
    for (std::size_t j = 0; j < pair.source.size(); ++j) {
      ctx.valid[j] = pair.source[j] != Vocabulary::kPad;
    }
    const auto& hs = ctx.encoder.states;
    const Eigen::Index m = hs.cols();

    Vec<S> s0(H2);
    s0 << ctx.encoder.forward_final, ctx.encoder.backward_final;
    Vec<S> d = (p.w1 * s0).array().tanh().matrix();
    const Vec<S> d0 = d;
    Vec<S> beta = Vec<S>::Zero(H2);

    const std::size_t n = pair.target.size() + 1;
    ws.steps.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& sc = ws.steps[i];
      sc.prev = i == 0 ? Vocabulary::kBos : pair.target[i - 1];
      const int gold = i < pair.target.size() ? pair.target[i] : Vocabulary::kEos;
      Vec<S> x(D + H2);
      x << phi_.row(sc.prev).transpose(), beta;
      d = gru_forward<S>(p.decoder, x, d, &sc.gru);
      sc.hidden = d;
      Mat<S> t = ctx.keys;
      t.colwise() += p.w3 * d;
      sc.tanh_keys = t.array().tanh().matrix();
      Vec<S> e = sc.tanh_keys.transpose() * p.v.col(0);
      sc.weights = masked_softmax<S>(e, ctx.valid);
      beta = hs * sc.weights;
      sc.output.resize(Hd + H2);
      sc.output << d, beta;
      sc.query = p.out_proj * sc.output;
      Vec<S> logits = phi_ * sc.query;

      const S log_z = log_partition<S>(logits, e, ctx.valid);
      // log of the gold token's unnormalized score, generated plus copied.
      S my = logits(gold);
      for (Eigen::Index j = 0; j < m; ++j) {
        if (ctx.valid[static_cast<std::size_t>(j)] && ctx.source[static_cast<std::size_t>(j)] == gold) {
          my = std::max(my, e(j));
        }
      }
      S acc = std::exp(logits(gold) - my);
      for (Eigen::Index j = 0; j < m; ++j) {
        if (ctx.valid[static_cast<std::size_t>(j)] && ctx.source[static_cast<std::size_t>(j)] == gold) {
          acc += std::exp(e(j) - my);
        }
      }
      const S log_gold = my + std::log(acc);
      total_nll += static_cast<double>(log_z - log_gold);

      Vec<S> probs = copy_distribution<S>(logits, e, ctx.source, ctx.valid, log_z);
      Eigen::Index best = 0;
      probs.maxCoeff(&best);
      if (best == gold) {
        ++stats.correct;
      }

      if (grads != nullptr) {
        sc.dlogits = (logits.array() - log_z).exp().matrix();
        sc.dlogits(gold) -= std::exp(logits(gold) - log_gold);
        sc.dlogits *= scale;
        sc.denergy_copy = Vec<S>::Zero(m);
        for (Eigen::Index j = 0; j < m; ++j) {
          if (!ctx.valid[static_cast<std::size_t>(j)]) {
            continue;
          }
          S g = std::exp(e(j) - log_z);
          if (ctx.source[static_cast<std::size_t>(j)] == gold) {
            g -= std::exp(e(j) - log_gold);
          }
          sc.denergy_copy(j) = g * scale;
        }
      }
    }

    if (grads == nullptr) {
      continue;
    }
    auto& g = *grads;

    // Decoder, last step first.
    Mat<S> dhs = Mat<S>::Zero(H2, m);
    Vec<S> dd_next = Vec<S>::Zero(Hd);
    Vec<S> dbeta_next = Vec<S>::Zero(H2);
    Mat<S> dlogit_cols(phi_.rows(), static_cast<Eigen::Index>(n));
    Mat<S> query_cols(D, static_cast<Eigen::Index>(n));
    Vec<S> dx;
    Vec<S> dh;
    for (std::size_t ii = n; ii-- > 0;) {
      const auto& sc = ws.steps[ii];
      const auto col = static_cast<Eigen::Index>(ii);
      dlogit_cols.col(col) = sc.dlogits;
      query_cols.col(col) = sc.query;
      Vec<S> dq = phi_.transpose() * sc.dlogits;
      g.out_proj.noalias() += dq * sc.output.transpose();
      Vec<S> dout = p.out_proj.transpose() * dq;
      Vec<S> ddi = dout.head(Hd) + dd_next;
      Vec<S> dbeta = dout.tail(H2) + dbeta_next;

      dhs.noalias() += dbeta * sc.weights.transpose();
      Vec<S> dalpha = hs.transpose() * dbeta;
      S dot = sc.weights.dot(dalpha);
      Vec<S> de = sc.weights.cwiseProduct((dalpha.array() - dot).matrix()) + sc.denergy_copy;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (!ctx.valid[static_cast<std::size_t>(j)]) {
          de(j) = 0;
        }
      }
      g.v.col(0).noalias() += sc.tanh_keys * de;
      Mat<S> dpre = (p.v.col(0) * de.transpose()).cwiseProduct(
          (Mat<S>::Ones(sc.tanh_keys.rows(), m) - sc.tanh_keys.cwiseProduct(sc.tanh_keys)));
      g.w2.noalias() += dpre * hs.transpose();
      dhs.noalias() += p.w2.transpose() * dpre;
      Vec<S> dw3d = dpre.rowwise().sum();
      g.w3.noalias() += dw3d * sc.hidden.transpose();
      ddi.noalias() += p.w3.transpose() * dw3d;

      gru_backward<S>(p.decoder, sc.gru, ddi, g.decoder, dx, dh);
      dphi.row(sc.prev) += dx.head(D).transpose();
      dbeta_next = dx.tail(H2);
      dd_next = dh;
    }
    dphi.noalias() += dlogit_cols * query_cols.transpose();

    // d0 = tanh(W1 [fwd_m ; bwd_1]).
    Vec<S> ds0 = dd_next.cwiseProduct((Vec<S>::Ones(Hd) - d0.cwiseProduct(d0)));
    g.w1.noalias() += ds0 * s0.transpose();
    Vec<S> ds = p.w1.transpose() * ds0;
    const Eigen::Index H = H2 / 2;
    dhs.col(m - 1).head(H) += ds.head(H);
    dhs.col(0).tail(H) += ds.tail(H);

    // Encoder, top layer first.
    for (std::size_t l = p.encoder.size(); l-- > 0;) {
      const auto& layer = p.encoder[l];
      auto& gl = g.encoder[l];
      const auto& cache = ws.layers[l];
      Mat<S> dy(H, m);
      Vec<S> carry = Vec<S>::Zero(H);
      for (Eigen::Index t = m - 1; t >= 0; --t) {
        Vec<S> dout = dhs.col(t).head(H) + carry;
        gru_backward<S>(layer.fwd, cache.fwd[static_cast<std::size_t>(t)], dout, gl.fwd, dx, dh);
        dy.col(t) = dx;
        carry = dh;
      }
      carry.setZero();
      for (Eigen::Index t = 0; t < m; ++t) {
        Vec<S> dout = dhs.col(t).tail(H) + carry;
        gru_backward<S>(layer.bwd, cache.bwd[static_cast<std::size_t>(t)], dout, gl.bwd, dx, dh);
        dy.col(t) += dx;
        carry = dh;
      }
      gl.w0.noalias() += dy * cache.input.transpose();
      gl.b0.col(0) += dy.rowwise().sum();
      dhs = layer.w0.transpose() * dy;
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      dphi.row(pair.source[static_cast<std::size_t>(j)]) += dhs.col(j).transpose();
    }
  }

  stats.loss = total_nll / total_tokens;
  if (!std::isfinite(stats.loss)) {
    throw NonFiniteLoss(batch_index, stats.loss);
  }

  if (grads != nullptr) {
    const int Dt = cfg_.type_dim;
    const int Di = D - Dt;
    for (int id = 0; id < cfg_.vocab_size; ++id) {
      int fam = layout_.family[static_cast<std::size_t>(id)];
      if (fam < 0) {
        grads->word_emb.row(id) += dphi.row(id);
      } else {
        grads->type_emb.row(fam) += dphi.row(id).head(Dt);
        grads->index_emb.row(layout_.index[static_cast<std::size_t>(id)] - 1) += dphi.row(id).tail(Di);
      }
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Optimization

template <typename S>
double global_norm(const ModelParams<S>& grads) {
  double sq = 0.0;
  grads.visit([&](const std::string&, const Mat<S>& m) { sq += static_cast<double>(m.squaredNorm()); });
  return std::sqrt(sq);
}

template <typename S>
double clip_gradients(ModelParams<S>& grads, double threshold) {
  double norm = global_norm(grads);
  if (norm > threshold) {
    const S factor = static_cast<S>(threshold / norm);
    grads.visit([&](const std::string&, Mat<S>& m) { m *= factor; });
  }
  return norm;
}

template <typename S>
Adam<S>::Adam(const ModelParams<S>& like, AdamConfig cfg) : cfg_(cfg), m_(like), v_(like) {
  m_.set_zero();
  v_.set_zero();
}

template <typename S>
void Adam<S>::update(ModelParams<S>& params, const ModelParams<S>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const S b1 = static_cast<S>(cfg_.beta1);
  const S b2 = static_cast<S>(cfg_.beta2);
  const S step = static_cast<S>(cfg_.learning_rate / c1);
  const S inv_c2 = static_cast<S>(1.0 / c2);
  const S eps = static_cast<S>(cfg_.epsilon);

  std::vector<Mat<S>*> ps;
  std::vector<const Mat<S>*> gs;
  std::vector<Mat<S>*> ms;
  std::vector<Mat<S>*> vs;
  params.visit([&](const std::string&, Mat<S>& m) { ps.push_back(&m); });
  grads.visit([&](const std::string&, const Mat<S>& m) { gs.push_back(&m); });
  m_.visit([&](const std::string&, Mat<S>& m) { ms.push_back(&m); });
  v_.visit([&](const std::string&, Mat<S>& m) { vs.push_back(&m); });
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto m = ms[k]->array();
    auto v = vs[k]->array();
    auto g = gs[k]->array();
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.square();
    ps[k]->array() -= step * m / ((v * inv_c2).sqrt() + eps);
  }
}

// ---------------------------------------------------------------------------
// Decoding

template <typename S>
Hypothesis greedy_decode(const Seq2Seq<S>& model, std::span<const int> source, int max_len) {
  auto ctx = model.prepare(source);
  auto state = model.initial_state(ctx);
  Hypothesis h;
  int prev = Vocabulary::kBos;
  for (int i = 0; i < max_len; ++i) {
    auto out = model.step(state, prev, ctx);
    Eigen::Index best = 0;
    out.probs.maxCoeff(&best);
    h.tokens.push_back(static_cast<int>(best));
    h.log_prob += std::log(static_cast<double>(out.probs(best)));
    if (best == Vocabulary::kEos) {
      h.finished = true;
      break;
    }
    prev = static_cast<int>(best);
    state = std::move(out.state);
  }
  return h;
}

template <typename S>
Hypothesis beam_search(const Seq2Seq<S>& model, std::span<const int> source, int width, int max_len) {
  if (width < 1) {
    throw ModelError("beam width must be at least 1");
  }
  auto ctx = model.prepare(source);
  struct Beam {
    Hypothesis hyp;
    DecoderState<S> state;
  };
  struct Candidate {
    double total;
    double own;
    std::size_t beam;
    int token;
  };
  std::vector<Beam> active{{Hypothesis{}, model.initial_state(ctx)}};
  std::vector<Hypothesis> finished;

  int len = 0;
  for (; len < max_len && !active.empty(); ++len) {
    std::vector<StepOutput<S>> outs;
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < active.size(); ++b) {
      int prev = active[b].hyp.tokens.empty() ? Vocabulary::kBos : active[b].hyp.tokens.back();
      outs.push_back(model.step(active[b].state, prev, ctx));
      const auto& probs = outs.back().probs;
      std::vector<int> ids(static_cast<std::size_t>(probs.size()));
      std::iota(ids.begin(), ids.end(), 0);
      auto k = std::min<std::size_t>(static_cast<std::size_t>(width), ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                        [&](int a, int c) { return probs(a) > probs(c) || (probs(a) == probs(c) && a < c); });
      for (std::size_t i = 0; i < k; ++i) {
        double own = std::log(static_cast<double>(probs(ids[i])));
        cands.push_back({active[b].hyp.log_prob + own, own, b, ids[i]});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.total != b.total) {
        return a.total > b.total;
      }
      if (a.beam != b.beam) {
        return a.beam < b.beam;
      }
      if (a.own != b.own) {
        return a.own > b.own;
      }
      return a.token < b.token;
    });
    cands.resize(std::min<std::size_t>(cands.size(), static_cast<std::size_t>(width)));

    std::vector<Beam> next;
    for (const auto& c : cands) {
      Hypothesis h = active[c.beam].hyp;
      h.tokens.push_back(c.token);
      h.log_prob = c.total;
      if (c.token == Vocabulary::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back({std::move(h), outs[c.beam].state});
      }
    }
    active = std::move(next);
    if (!finished.empty() && !active.empty()) {
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) {
        best_finished = std::max(best_finished, f.log_prob);
      }
      double best_active = -std::numeric_limits<double>::infinity();
      for (const auto& a : active) {
        best_active = std::max(best_active, a.hyp.log_prob);
      }
      if (best_finished >= best_active) {
        active.clear();
      }
    }
  }
  for (auto& a : active) {
    finished.push_back(std::move(a.hyp));
  }
  const Hypothesis* best = nullptr;
  for (const auto& f : finished) {
    if (best == nullptr || f.log_prob > best->log_prob) {
      best = &f;
    }
  }
  return best != nullptr ? *best : Hypothesis{};
}

// ---------------------------------------------------------------------------
// Training

template <typename S>
EpochStats train_epoch(Seq2Seq<S>& model, Adam<S>& opt, std::span<const TrainingPair> pairs, int batch_size,
                       double clip, std::mt19937_64& rng, int epoch) {
  if (batch_size < 1) {
    throw ModelError("batch size must be at least 1");
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  stats.epoch = epoch;
  ModelParams<S> grads = ModelParams<S>::zeros(model.config());
  double nll = 0.0;
  long tokens = 0;
  long correct = 0;
  std::vector<TrainingPair> batch;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    batch.clear();
    auto end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    for (auto i = begin; i < end; ++i) {
      batch.push_back(pairs[order[i]]);
    }
    auto s = model.loss_and_grad(batch, grads, stats.batches);
    stats.max_grad_norm = std::max(stats.max_grad_norm, clip_gradients(grads, clip));
    opt.update(model.mutable_params(), grads);
    model.sync();
    nll += s.loss * s.tokens;
    tokens += s.tokens;
    correct += s.correct;
    ++stats.batches;
  }
  if (tokens > 0) {
    stats.loss = nll / static_cast<double>(tokens);
    stats.token_accuracy = static_cast<double>(correct) / static_cast<double>(tokens);
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

// ---------------------------------------------------------------------------
// Instantiations

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template class Seq2Seq<float>;
template class Seq2Seq<double>;
template class Adam<float>;
template class Adam<double>;

#define NLIDB_INSTANTIATE(S)                                                                          \
  template Vec<S> masked_softmax<S>(const Vec<S>&, const std::vector<bool>&);                        \
  template double global_norm<S>(const ModelParams<S>&);                                              \
  template double clip_gradients<S>(ModelParams<S>&, double);                                         \
  template Hypothesis greedy_decode<S>(const Seq2Seq<S>&, std::span<const int>, int);                 \
  template Hypothesis beam_search<S>(const Seq2Seq<S>&, std::span<const int>, int, int);              \
  template EpochStats train_epoch<S>(Seq2Seq<S>&, Adam<S>&, std::span<const TrainingPair>, int, double, \
                                     std::mt19937_64&, int);

NLIDB_INSTANTIATE(float)
NLIDB_INSTANTIATE(double)

#undef NLIDB_INSTANTIATE

} // namespace nlidb
