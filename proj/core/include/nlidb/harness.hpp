#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nlidb/encoding.hpp"
#include "nlidb/meta_knowledge.hpp"
#include "nlidb/mention_resolve.hpp"
#include "nlidb/seq_model.hpp"
#include "nlidb/sql.hpp"

namespace nlidb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Config {
  struct Data {
    std::filesystem::path tables;
    std::filesystem::path train;
    std::filesystem::path dev;
    std::filesystem::path test;
    std::filesystem::path lexicon;
    /// Optional files of bracketed parses, one per split line; blank = none.
    std::filesystem::path train_trees;
    std::filesystem::path dev_trees;
    std::filesystem::path test_trees;
    std::filesystem::path embeddings;
    /// Use only the first N training examples; 0 keeps all.
    int max_train_examples = 0;
  } data;

  AnnotateOptions annotation;

  struct Encoding {
    EncodingMode mode = EncodingMode::Stack;
    bool headers = true;
    int min_count = 1;
  } encoding;

  struct Model {
    int embed_dim = 300;
    int type_dim = 150;
    int encoder_hidden = 200;
    int encoder_layers = 2;
    int decoder_hidden = 400;
    int attention_dim = 200;
    double init_scale = 0.1;
    bool pretrained_embeddings = true;
  } model;

  struct Training {
    int epochs = 50;
    int batch_size = 64;
    AdamConfig adam;
    double clip = 5.0;
    std::uint64_t seed = 1;
    /// Early stopping on dev query-match accuracy; 0 disables.
    int patience = 5;
    /// Evaluate every N epochs (dev, or train when no dev split is set).
    int eval_every = 1;
    /// Stop once the evaluated accuracy reaches this value; 0 disables.
    double target_accuracy = 0.0;
  } training;

  struct Inference {
    int beam_width = 5;
    int max_len = 40;
  } inference;

  std::filesystem::path output_dir = "runs/default";

  /// Relative paths resolve against the config file's directory.
  static Config load(const std::filesystem::path& path);
  static Config from_json(const std::string& text, const std::filesystem::path& base = {});
  std::string to_json() const;
  ModelConfig model_config(int vocab_size) const;
};

struct Example {
  std::string question;
  std::string table_id;
  ConcreteSql gold;
  std::optional<std::string> tree;
};

/// Joins a WikiSQL-format split to its tables. Throws LoadError listing
/// unknown table ids.
std::vector<Example> load_wikisql(const std::filesystem::path& split,
                                  const std::map<std::string, Table>& tables);
/// Fills Example::tree from a file aligned line by line with the split.
void attach_trees(std::vector<Example>& examples, const std::filesystem::path& trees);
/// Gold SQL from a WikiSQL `sql` object {sel, agg, conds}.
ConcreteSql parse_wikisql_sql(const std::string& json_text);

struct Resources {
  std::map<std::string, Table> tables;
  std::map<std::string, ValueStats> stats;
  PhraseLexicon lexicon;
  EmbeddingStore embeddings;

  static Resources load(const Config& cfg);
  const Table& table(const std::string& id) const;
};

struct PreparedExample {
  Example example;
  Annotation annotation;
  std::vector<AnnotatedToken> source;
  std::optional<AnnotatedSqlAst> target;
  std::string alignment_failure;
};

PreparedExample prepare_example(const Example& ex, const Resources& res, const Config& cfg);
std::vector<PreparedExample> prepare_examples(const std::vector<Example>& examples, const Resources& res,
                                              const Config& cfg);

Vocabulary build_vocabulary(const std::vector<PreparedExample>& train, const Config& cfg);

struct CoverageReport {
  int total = 0;
  int aligned = 0;
  std::map<std::string, int> failures;

  double coverage() const { return total == 0 ? 0.0 : static_cast<double>(aligned) / total; }
  double failure_rate() const { return total == 0 ? 0.0 : static_cast<double>(total - aligned) / total; }
};

struct TrainingSet {
  std::vector<TrainingPair> pairs;
  /// Index into the prepared examples for each pair.
  std::vector<std::size_t> origin;
  CoverageReport coverage;
};

TrainingSet build_training_pairs(const std::vector<PreparedExample>& prepared, const Vocabulary& vocab);

bool acc_lf(const std::optional<ConcreteSql>& pred, const ConcreteSql& gold, const TableSchema& schema);
bool acc_qm(const std::optional<ConcreteSql>& pred, const ConcreteSql& gold, const TableSchema& schema);
bool acc_ex(const std::optional<ConcreteSql>& pred, const ConcreteSql& gold, const Table& table);

struct MetricOutcome {
  bool lf = false;
  bool qm = false;
  bool ex = false;
};

MetricOutcome score_prediction(const std::optional<ConcreteSql>& pred, const ConcreteSql& gold,
                               const Table& table);

struct EvalReport {
  int total = 0;
  int lf = 0;
  int qm = 0;
  int ex = 0;
  int parse_failures = 0;
  CoverageReport coverage;

  double acc_lf() const { return total == 0 ? 0.0 : static_cast<double>(lf) / total; }
  double acc_qm() const { return total == 0 ? 0.0 : static_cast<double>(qm) / total; }
  double acc_ex() const { return total == 0 ? 0.0 : static_cast<double>(ex) / total; }
  std::string to_json(const Config* cfg = nullptr) const;
};

struct Translation {
  Annotation annotation;
  std::vector<AnnotatedToken> source;
  std::vector<std::string> sketch;
  double log_prob = 0.0;
  std::optional<ConcreteSql> sql;
  std::string sql_text;
  std::optional<ResultSet> result;
  std::string error;

  std::string to_json(const TableSchema& schema) const;
};

/// Vocabulary plus model for inference.
class Translator {
 public:
  Translator(Config cfg, std::shared_ptr<const Resources> res, Vocabulary vocab, Seq2Seq<float> model);
  /// Loads <dir>/vocab.txt and the checkpoint, verifying the vocabulary hash.
  static Translator load(const Config& cfg, std::shared_ptr<const Resources> res,
                         const std::filesystem::path& checkpoint);

  Translation translate(const std::string& question, const std::string& table_id,
                        const std::optional<std::string>& tree = std::nullopt) const;
  Translation translate(const PreparedExample& ex) const;
  EvalReport evaluate(const std::vector<PreparedExample>& examples) const;

  const Vocabulary& vocabulary() const { return vocab_; }
  const Seq2Seq<float>& model() const { return model_; }
  const Resources& resources() const { return *res_; }

 private:
  Translation decode(Translation t, const TableSchema& schema) const;

  Config cfg_;
  std::shared_ptr<const Resources> res_;
  Vocabulary vocab_;
  Seq2Seq<float> model_;
};

struct TrainSummary {
  int epochs_run = 0;
  double final_loss = 0.0;
  double best_accuracy = 0.0;
  CoverageReport coverage;
  std::filesystem::path checkpoint;
  double seconds = 0.0;
};

/// Writes vocab.txt, config.json, train_log.jsonl (one JSON line per epoch)
/// and checkpoint.bin under cfg.output_dir. Progress lines go to `log`.
TrainSummary run_train(const Config& cfg, std::ostream* log = nullptr);
/// Trains on an already prepared set; used by run_train and the smoke tests.
TrainSummary train_on(const Config& cfg, std::shared_ptr<const Resources> res,
                      const std::vector<PreparedExample>& train, const std::vector<PreparedExample>* dev,
                      std::ostream* log = nullptr);

EvalReport run_eval(const Config& cfg, const std::filesystem::path& checkpoint, const std::string& split);

/// Reads "table_id<TAB>question" lines and writes one JSON object per line.
void run_repl(const Translator& translator, std::istream& in, std::ostream& out);

} // namespace nlidb
