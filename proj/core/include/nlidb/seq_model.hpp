#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlidb {

class Vocabulary;

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a batch produces a NaN or infinite loss.
class NonFiniteLoss : public ModelError {
 public:
  NonFiniteLoss(int batch, double loss);
  int batch() const { return batch_; }

 private:
  int batch_;
};

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 300;
  /// Width of the symbol-type half of a symbol embedding; the index half
  /// takes the remaining embed_dim - type_dim.
  int type_dim = 150;
  int encoder_hidden = 200;
  int encoder_layers = 2;
  int decoder_hidden = 400;
  int attention_dim = 200;
  int max_symbol_index = 25;

  /// Throws ModelError on non-positive sizes or type_dim >= embed_dim.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Which vocabulary ids are annotation symbols. family: -1 for plain tokens,
/// 0 column, 1 value, 2 header; index is 1-based.
struct TokenLayout {
  std::vector<int> family;
  std::vector<int> index;

  static TokenLayout from(const Vocabulary& vocab);
  static TokenLayout plain(int vocab_size);
  int size() const { return static_cast<int>(family.size()); }
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Gate rows are stacked [update; reset; candidate].
template <typename S>
struct GruParams {
  Mat<S> wx;
  Mat<S> wh;
  Mat<S> b;
};

template <typename S>
struct EncoderLayerParams {
  Mat<S> w0;
  Mat<S> b0;
  GruParams<S> fwd;
  GruParams<S> bwd;
};

/// Every tensor is a matrix; vectors are single-column matrices so that
/// visit() has one signature.
template <typename S>
struct ModelParams {
  Mat<S> word_emb;
  Mat<S> type_emb;
  Mat<S> index_emb;
  std::vector<EncoderLayerParams<S>> encoder;
  GruParams<S> decoder;
  Mat<S> w1;
  Mat<S> w2;
  Mat<S> w3;
  Mat<S> v;
  Mat<S> out_proj;

  static ModelParams zeros(const ModelConfig& cfg);
  /// Uniform(-scale, scale) weights, zero biases.
  static ModelParams random(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.1);

  template <typename F>
  void visit(F&& f) {
    f("word_emb", word_emb);
    f("type_emb", type_emb);
    f("index_emb", index_emb);
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      auto p = "encoder." + std::to_string(l) + ".";
      f(p + "w0", encoder[l].w0);
      f(p + "b0", encoder[l].b0);
      f(p + "fwd.wx", encoder[l].fwd.wx);
      f(p + "fwd.wh", encoder[l].fwd.wh);
      f(p + "fwd.b", encoder[l].fwd.b);
      f(p + "bwd.wx", encoder[l].bwd.wx);
      f(p + "bwd.wh", encoder[l].bwd.wh);
      f(p + "bwd.b", encoder[l].bwd.b);
    }
    f("decoder.wx", decoder.wx);
    f("decoder.wh", decoder.wh);
    f("decoder.b", decoder.b);
    f("w1", w1);
    f("w2", w2);
    f("w3", w3);
    f("v", v);
    f("out_proj", out_proj);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit(
        [&](const std::string& name, Mat<S>& m) { f(name, static_cast<const Mat<S>&>(m)); });
  }

  template <typename T>
  ModelParams<T> cast() const;

  void set_zero();
  std::size_t parameter_count() const;
};

template <typename S>
struct EncoderOutput {
  /// Column j is [forward_j ; backward_j] of the top layer.
  Mat<S> states;
  Vec<S> forward_final;
  Vec<S> backward_final;

  int length() const { return static_cast<int>(states.cols()); }
};

template <typename S>
struct DecoderState {
  Vec<S> hidden;
  Vec<S> context;
};

template <typename S>
struct Attention {
  Vec<S> energies;
  Vec<S> weights;
  Vec<S> context;
};

template <typename S>
struct StepOutput {
  DecoderState<S> state;
  Attention<S> attention;
  /// Normalized copy-augmented distribution over the vocabulary.
  Vec<S> probs;
};

/// Source-side quantities computed once per question.
template <typename S>
struct SourceContext {
  std::vector<int> source;
  EncoderOutput<S> encoder;
  Mat<S> keys;
  std::vector<bool> valid;
};

struct TrainingPair {
  std::vector<int> source;
  /// Without the trailing end token; the model appends it.
  std::vector<int> target;
};

struct LossStats {
  double loss = 0.0;
  int tokens = 0;
  int correct = 0;
};

/// Bi-GRU encoder, attentive GRU decoder and additive copy scoring. The
/// embedding table is tied between inputs and the output layer; symbol rows
/// are [type ; index] concatenations.
template <typename S>
class Seq2Seq {
 public:
  Seq2Seq(ModelConfig cfg, TokenLayout layout, ModelParams<S> params);

  const ModelConfig& config() const { return cfg_; }
  const TokenLayout& layout() const { return layout_; }
  const ModelParams<S>& params() const { return params_; }
  /// Callers that change parameters must call sync() afterwards.
  ModelParams<S>& mutable_params() { return params_; }
  void sync();

  /// Tied embedding table with symbol rows filled in.
  const Mat<S>& embeddings() const { return phi_; }

  /// Throws ModelError on empty input or out-of-range ids.
  EncoderOutput<S> encode(std::span<const int> source) const;
  SourceContext<S> prepare(std::span<const int> source) const;

  DecoderState<S> initial_state(const SourceContext<S>& ctx) const;
  Attention<S> attend(const Vec<S>& hidden, const SourceContext<S>& ctx) const;
  StepOutput<S> step(const DecoderState<S>& state, int prev_token, const SourceContext<S>& ctx) const;

  /// Mean teacher-forced negative log-likelihood over all target tokens
  /// (end token included).
  LossStats loss(std::span<const TrainingPair> batch) const;
  /// As loss(), also overwriting `grads` with d(loss)/d(params). Throws
  /// NonFiniteLoss tagged with `batch_index`.
  LossStats loss_and_grad(std::span<const TrainingPair> batch, ModelParams<S>& grads,
                          int batch_index = -1) const;

 private:
  struct Workspace;
  LossStats run(std::span<const TrainingPair> batch, ModelParams<S>* grads, int batch_index) const;

  ModelConfig cfg_;
  TokenLayout layout_;
  ModelParams<S> params_;
  Mat<S> phi_;
};

/// Softmax over entries with mask true; masked entries get weight 0.
template <typename S>
Vec<S> masked_softmax(const Vec<S>& e, const std::vector<bool>& mask);

template <typename S>
double global_norm(const ModelParams<S>& grads);
/// Rescales so the global L2 norm is at most `threshold`; returns the norm
/// before clipping.
template <typename S>
double clip_gradients(ModelParams<S>& grads, double threshold = 5.0);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename S>
class Adam {
 public:
  Adam(const ModelParams<S>& like, AdamConfig cfg = {});
  void update(ModelParams<S>& params, const ModelParams<S>& grads);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  ModelParams<S> m_;
  ModelParams<S> v_;
  long t_ = 0;
};

struct Hypothesis {
  /// Ends with the end token when the hypothesis finished.
  std::vector<int> tokens;
  double log_prob = 0.0;
  bool finished = false;
};

template <typename S>
Hypothesis greedy_decode(const Seq2Seq<S>& model, std::span<const int> source, int max_len = 40);

/// Raw log-probability ranking, no length penalty. Width 1 reproduces
/// greedy_decode exactly.
template <typename S>
Hypothesis beam_search(const Seq2Seq<S>& model, std::span<const int> source, int width = 5,
                       int max_len = 40);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double token_accuracy = 0.0;
  double max_grad_norm = 0.0;
  int batches = 0;
  double seconds = 0.0;
};

/// One shuffled pass with Adam and global-norm clipping.
template <typename S>
EpochStats train_epoch(Seq2Seq<S>& model, Adam<S>& opt, std::span<const TrainingPair> pairs,
                       int batch_size, double clip, std::mt19937_64& rng, int epoch);

struct Checkpoint {
  ModelConfig config;
  ModelParams<double> params;
  std::uint64_t vocab_hash = 0;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One JSON header line (version, vocabulary hash, config, tensor manifest)
/// followed by the tensors as little-endian float64 in manifest order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Verifies the vocabulary hash when `expected_vocab_hash` is non-zero.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash = 0);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& text);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;
extern template class Seq2Seq<float>;
extern template class Seq2Seq<double>;
extern template class Adam<float>;
extern template class Adam<double>;

} // namespace nlidb
