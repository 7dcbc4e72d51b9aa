#include "nlidb/harness.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "nlidb/constituency_tree.hpp"
#include "nlidb/text.hpp"

namespace nlidb {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

std::filesystem::path resolve(const json& j, const char* key, const std::filesystem::path& base,
                              const std::filesystem::path& fallback) {
  if (!j.contains(key) || j.at(key).is_null()) {
    return fallback;
  }
  std::filesystem::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) {
    return p;
  }
  return base / p;
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key) && !j.at(key).is_null()) {
    into = j.at(key).get<T>();
  }
}

std::string mode_name(EncodingMode m) { return m == EncodingMode::Stack ? "stack" : "substitute"; }

} // namespace

Config Config::from_json(const std::string& text, const std::filesystem::path& base) {
  Config c;
  try {
    auto j = json::parse(text);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.data.tables = resolve(d, "tables", base, c.data.tables);
      c.data.train = resolve(d, "train", base, c.data.train);
      c.data.dev = resolve(d, "dev", base, c.data.dev);
      c.data.test = resolve(d, "test", base, c.data.test);
      c.data.lexicon = resolve(d, "lexicon", base, c.data.lexicon);
      c.data.train_trees = resolve(d, "train_trees", base, c.data.train_trees);
      c.data.dev_trees = resolve(d, "dev_trees", base, c.data.dev_trees);
      c.data.test_trees = resolve(d, "test_trees", base, c.data.test_trees);
      c.data.embeddings = resolve(d, "embeddings", base, c.data.embeddings);
      read(d, "max_train_examples", c.data.max_train_examples);
    }
    if (j.contains("annotation")) {
      const auto& a = j.at("annotation");
      read(a, "tau_ed", c.annotation.thresholds.edit);
      read(a, "tau_sim", c.annotation.thresholds.semantic);
      read(a, "value_threshold", c.annotation.thresholds.value);
      read(a, "max_value_span", c.annotation.thresholds.max_value_span);
      read(a, "max_slot_tokens", c.annotation.thresholds.max_slot_tokens);
      read(a, "max_index", c.annotation.max_index);
    }
    if (j.contains("encoding")) {
      const auto& e = j.at("encoding");
      std::string mode = mode_name(c.encoding.mode);
      read(e, "mode", mode);
      if (mode == "stack") {
        c.encoding.mode = EncodingMode::Stack;
      } else if (mode == "substitute") {
        c.encoding.mode = EncodingMode::Substitute;
      } else {
        throw ConfigError("encoding.mode must be \"stack\" or \"substitute\", got \"" + mode + "\"");
      }
      read(e, "headers", c.encoding.headers);
      read(e, "min_count", c.encoding.min_count);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      read(m, "embed_dim", c.model.embed_dim);
      read(m, "type_dim", c.model.type_dim);
      read(m, "encoder_hidden", c.model.encoder_hidden);
      read(m, "encoder_layers", c.model.encoder_layers);
      read(m, "decoder_hidden", c.model.decoder_hidden);
      read(m, "attention_dim", c.model.attention_dim);
      read(m, "init_scale", c.model.init_scale);
      read(m, "pretrained_embeddings", c.model.pretrained_embeddings);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      read(t, "epochs", c.training.epochs);
      read(t, "batch_size", c.training.batch_size);
      read(t, "learning_rate", c.training.adam.learning_rate);
      read(t, "beta1", c.training.adam.beta1);
      read(t, "beta2", c.training.adam.beta2);
      read(t, "epsilon", c.training.adam.epsilon);
      read(t, "clip", c.training.clip);
      read(t, "seed", c.training.seed);
      read(t, "patience", c.training.patience);
      read(t, "eval_every", c.training.eval_every);
      read(t, "target_accuracy", c.training.target_accuracy);
    }
    if (j.contains("inference")) {
      const auto& i = j.at("inference");
      read(i, "beam_width", c.inference.beam_width);
      read(i, "max_len", c.inference.max_len);
    }
    c.output_dir = resolve(j, "output_dir", base, c.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  if (c.training.batch_size < 1 || c.training.epochs < 0 || c.training.eval_every < 1 ||
      c.inference.beam_width < 1 || c.inference.max_len < 1) {
    throw ConfigError("training and inference sizes must be positive");
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), path.parent_path());
}

std::string Config::to_json() const {
  json j;
  j["data"] = {{"tables", data.tables.string()},
               {"train", data.train.string()},
               {"dev", data.dev.string()},
               {"test", data.test.string()},
               {"lexicon", data.lexicon.string()},
               {"train_trees", data.train_trees.string()},
               {"dev_trees", data.dev_trees.string()},
               {"test_trees", data.test_trees.string()},
               {"embeddings", data.embeddings.string()},
               {"max_train_examples", data.max_train_examples}};
  j["annotation"] = {{"tau_ed", annotation.thresholds.edit},
                     {"tau_sim", annotation.thresholds.semantic},
                     {"value_threshold", annotation.thresholds.value},
                     {"max_value_span", annotation.thresholds.max_value_span},
                     {"max_slot_tokens", annotation.thresholds.max_slot_tokens},
                     {"max_index", annotation.max_index}};
  j["encoding"] = {{"mode", mode_name(encoding.mode)},
                   {"headers", encoding.headers},
                   {"min_count", encoding.min_count}};
  j["model"] = {{"embed_dim", model.embed_dim},
                {"type_dim", model.type_dim},
                {"encoder_hidden", model.encoder_hidden},
                {"encoder_layers", model.encoder_layers},
                {"decoder_hidden", model.decoder_hidden},
                {"attention_dim", model.attention_dim},
                {"init_scale", model.init_scale},
                {"pretrained_embeddings", model.pretrained_embeddings}};
  j["training"] = {{"epochs", training.epochs},
                   {"batch_size", training.batch_size},
                   {"learning_rate", training.adam.learning_rate},
                   {"beta1", training.adam.beta1},
                   {"beta2", training.adam.beta2},
                   {"epsilon", training.adam.epsilon},
                   {"clip", training.clip},
                   {"seed", training.seed},
                   {"patience", training.patience},
                   {"eval_every", training.eval_every},
                   {"target_accuracy", training.target_accuracy}};
  j["inference"] = {{"beam_width", inference.beam_width}, {"max_len", inference.max_len}};
  j["output_dir"] = output_dir.string();
  return j.dump(2);
}

ModelConfig Config::model_config(int vocab_size) const {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.embed_dim = model.embed_dim;
  m.type_dim = model.type_dim;
  m.encoder_hidden = model.encoder_hidden;
  m.encoder_layers = model.encoder_layers;
  m.decoder_hidden = model.decoder_hidden;
  m.attention_dim = model.attention_dim;
  m.max_symbol_index = annotation.max_index;
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Data

namespace {

std::string literal_of(const json& v) {
  if (v.is_string()) {
    return v.get<std::string>();
  }
  if (v.is_number()) {
    return format_number(v.get<double>());
  }
  return v.dump();
}

ConcreteSql sql_of(const json& j) {
  ConcreteSql sql;
  sql.select = j.at("sel").get<int>();
  sql.agg = aggregate_from_wikisql(j.at("agg").get<int>());
  for (const auto& c : j.at("conds")) {
    sql.conditions.push_back({c.at(0).get<int>(), cond_op_from_wikisql(c.at(1).get<int>()), literal_of(c.at(2))});
  }
  return sql;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoadError("cannot open " + path.string());
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

} // namespace

ConcreteSql parse_wikisql_sql(const std::string& json_text) {
  try {
    return sql_of(json::parse(json_text));
  } catch (const json::exception& e) {
    throw SqlError(std::string("bad WikiSQL sql object: ") + e.what());
  }
}

std::vector<Example> load_wikisql(const std::filesystem::path& split, const std::map<std::string, Table>& tables) {
  std::vector<Example> out;
  std::set<std::string> missing;
  auto lines = read_lines(split);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) {
      continue;
    }
    Example ex;
    try {
      auto j = json::parse(lines[i]);
      ex.question = j.at("question").get<std::string>();
      ex.table_id = j.at("table_id").get<std::string>();
      ex.gold = sql_of(j.at("sql"));
    } catch (const std::exception& e) {
      throw LoadError(split.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    auto t = tables.find(ex.table_id);
    if (t == tables.end()) {
      missing.insert(ex.table_id);
      continue;
    }
    int ncols = static_cast<int>(t->second.schema.columns.size());
    bool in_range = ex.gold.select >= 0 && ex.gold.select < ncols;
    for (const auto& c : ex.gold.conditions) {
      in_range = in_range && c.column >= 0 && c.column < ncols;
    }
    if (!in_range) {
      throw LoadError(split.string() + ":" + std::to_string(i + 1) + ": column index outside table " + ex.table_id);
    }
    out.push_back(std::move(ex));
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& m : missing) {
      ids += (ids.empty() ? "" : ", ") + m;
    }
    throw LoadError(split.string() + ": unknown table ids: " + ids);
  }
  return out;
}

void attach_trees(std::vector<Example>& examples, const std::filesystem::path& trees) {
  auto lines = read_lines(trees);
  while (!lines.empty() && lines.size() > examples.size() && trim(lines.back()).empty()) {
    lines.pop_back();
  }
  if (lines.size() != examples.size()) {
    throw LoadError(trees.string() + ": " + std::to_string(lines.size()) + " trees for " +
                    std::to_string(examples.size()) + " examples");
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto t = trim(lines[i]);
    examples[i].tree = t.empty() ? std::nullopt : std::optional<std::string>(t);
  }
}

Resources Resources::load(const Config& cfg) {
  Resources r;
  for (auto& t : load_tables(cfg.data.tables)) {
    auto id = t.schema.table_id;
    r.stats.emplace(id, build_value_stats(t));
    r.tables.emplace(id, std::move(t));
  }
  if (!cfg.data.lexicon.empty()) {
    r.lexicon = load_phrase_lexicon(cfg.data.lexicon);
  }
  if (!cfg.data.embeddings.empty()) {
    r.embeddings = load_embeddings(cfg.data.embeddings);
  }
  return r;
}

const Table& Resources::table(const std::string& id) const {
  auto it = tables.find(id);
  if (it == tables.end()) {
    throw LoadError("unknown table id " + id);
  }
  return it->second;
}

PreparedExample prepare_example(const Example& ex, const Resources& res, const Config& cfg) {
  PreparedExample p;
  p.example = ex;
  const auto& table = res.table(ex.table_id);
  std::optional<ConstituencyTree> tree;
  if (ex.tree) {
    try {
      tree = ConstituencyTree::parse(*ex.tree);
    } catch (const std::invalid_argument&) {
      tree.reset();
    }
  }
  p.annotation = annotate(ex.question, table.schema, res.stats.at(ex.table_id), res.lexicon, res.embeddings,
                          tree ? &*tree : nullptr, cfg.annotation);
  p.source = encode_question(p.annotation, table.schema, cfg.encoding.mode, cfg.encoding.headers);
  auto aligned = align_gold_sql(ex.gold, p.annotation, table.schema);
  if (auto* f = std::get_if<AlignmentFailure>(&aligned)) {
    p.alignment_failure = f->reason;
    return p;
  }
  auto& ast = std::get<AnnotatedSqlAst>(aligned);
  bool uses_header = ast.select.family == SymbolFamily::Header;
  for (const auto& c : ast.conditions) {
    uses_header = uses_header || c.column.family == SymbolFamily::Header;
  }
  if (uses_header && !cfg.encoding.headers) {
    p.alignment_failure = "column not mentioned: headers disabled";
    return p;
  }
  p.target = ast;
  return p;
}

std::vector<PreparedExample> prepare_examples(const std::vector<Example>& examples, const Resources& res,
                                              const Config& cfg) {
  std::vector<PreparedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back(prepare_example(ex, res, cfg));
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<PreparedExample>& train, const Config& cfg) {
  std::vector<std::vector<std::string>> sources;
  std::vector<std::vector<std::string>> targets;
  for (const auto& p : train) {
    sources.push_back(source_keys(p.source));
    if (p.target) {
      targets.push_back(sketch_keys(*p.target));
    }
  }
  return Vocabulary::build(sources, targets, cfg.encoding.min_count, cfg.annotation.max_index);
}

TrainingSet build_training_pairs(const std::vector<PreparedExample>& prepared, const Vocabulary& vocab) {
  TrainingSet set;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const auto& p = prepared[i];
    ++set.coverage.total;
    if (!p.target) {
      auto reason = p.alignment_failure.substr(0, p.alignment_failure.find(':'));
      ++set.coverage.failures[reason];
      continue;
    }
    ++set.coverage.aligned;
    auto src = source_keys(p.source);
    auto tgt = sketch_keys(*p.target);
    set.pairs.push_back({vocab.encode(src), vocab.encode(tgt)});
    set.origin.push_back(i);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Metrics

bool acc_lf(const std::optional<ConcreteSql>& pred, const ConcreteSql& gold, const TableSchema& schema) {
  try {
    return pred && serialize(*pred, schema) == serialize(gold, schema);
  } catch (const SqlError&) {
    return false;
  }
}

bool acc_qm(const std::optional<ConcreteSql>& pred, const ConcreteSql& gold, const TableSchema& schema) {
  try {
    return pred && canonicalize(*pred, schema) == canonicalize(gold, schema);
  } catch (const SqlError&) {
    return false;
  }
}

bool acc_ex(const std::optional<ConcreteSql>& pred, const ConcreteSql& gold, const Table& table) {
  try {
    return pred && results_equal(execute(*pred, table), execute(gold, table));
  } catch (const SqlError&) {
    return false;
  }
}

MetricOutcome score_prediction(const std::optional<ConcreteSql>& pred, const ConcreteSql& gold,
                               const Table& table) {
  return {acc_lf(pred, gold, table.schema), acc_qm(pred, gold, table.schema), acc_ex(pred, gold, table)};
}

std::string EvalReport::to_json(const Config* cfg) const {
  json failures = json::object();
  for (const auto& [reason, n] : coverage.failures) {
    failures[reason] = n;
  }
  json j = {{"total", total},
            {"counts", {{"lf", lf}, {"qm", qm}, {"ex", ex}, {"parse_failures", parse_failures}}},
            {"acc_lf", acc_lf()},
            {"acc_qm", acc_qm()},
            {"acc_ex", acc_ex()},
            {"alignment", {{"aligned", coverage.aligned},
                           {"coverage", coverage.coverage()},
                           {"failure_rate", coverage.failure_rate()},
                           {"failures", failures}}}};
  if (cfg != nullptr) {
    j["config"] = json::parse(cfg->to_json());
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Translation

namespace {

json cell_json(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) {
    return *d;
  }
  return std::get<std::string>(c);
}

} // namespace

std::string Translation::to_json(const TableSchema& schema) const {
  json symbols = json::object();
  for (const auto& [i, b] : annotation.symbols.columns) {
    symbols["c" + std::to_string(i)] = schema.columns.at(static_cast<std::size_t>(b.column)).name;
  }
  for (const auto& [i, b] : annotation.symbols.values) {
    symbols["v" + std::to_string(i)] = {{"value", b.surface},
                                        {"column", schema.columns.at(static_cast<std::size_t>(b.column)).name}};
  }
  json j = {{"question", annotation.question},
            {"table_id", schema.table_id},
            {"annotated", render(source)},
            {"symbols", symbols},
            {"sketch", join(sketch)},
            {"log_prob", log_prob}};
  j["sql"] = sql ? json(sql_text) : json(nullptr);
  if (result) {
    json values = json::array();
    for (const auto& c : result->values) {
      values.push_back(cell_json(c));
    }
    j["result"] = values;
    if (result->type_error) {
      j["type_error"] = true;
    }
  } else {
    j["result"] = nullptr;
  }
  if (!error.empty()) {
    j["error"] = error;
  }
  return j.dump();
}

Translator::Translator(Config cfg, std::shared_ptr<const Resources> res, Vocabulary vocab, Seq2Seq<float> model)
    : cfg_(std::move(cfg)), res_(std::move(res)), vocab_(std::move(vocab)), model_(std::move(model)) {}

Translator Translator::load(const Config& cfg, std::shared_ptr<const Resources> res,
                            const std::filesystem::path& checkpoint) {
  auto vocab_path = checkpoint.parent_path() / "vocab.txt";
  auto vocab = Vocabulary::load(vocab_path);
  auto ckpt = load_checkpoint(checkpoint, vocab.hash());
  if (ckpt.config.vocab_size != vocab.size()) {
    throw CheckpointError(checkpoint.string() + ": vocabulary size differs from " + vocab_path.string());
  }
  Seq2Seq<float> model(ckpt.config, TokenLayout::from(vocab), ckpt.params.cast<float>());
  return Translator(cfg, std::move(res), std::move(vocab), std::move(model));
}

Translation Translator::translate(const std::string& question, const std::string& table_id,
                                  const std::optional<std::string>& tree) const {
  Example ex{question, table_id, {}, tree};
  const auto& table = res_->table(table_id);
  std::optional<ConstituencyTree> parsed;
  if (tree) {
    try {
      parsed = ConstituencyTree::parse(*tree);
    } catch (const std::invalid_argument&) {
      parsed.reset();
    }
  }
  Translation t;
  t.annotation = annotate(question, table.schema, res_->stats.at(table_id), res_->lexicon, res_->embeddings,
                          parsed ? &*parsed : nullptr, cfg_.annotation);
  t.source = encode_question(t.annotation, table.schema, cfg_.encoding.mode, cfg_.encoding.headers);
  return decode(std::move(t), table.schema);
}

Translation Translator::translate(const PreparedExample& ex) const {
  Translation t;
  t.annotation = ex.annotation;
  t.source = ex.source;
  return decode(std::move(t), res_->table(ex.example.table_id).schema);
}

Translation Translator::decode(Translation t, const TableSchema& schema) const {
  auto ids = vocab_.encode(source_keys(t.source));
  if (ids.empty()) {
    t.error = "empty question";
    return t;
  }
  auto hyp = beam_search(model_, ids, cfg_.inference.beam_width, cfg_.inference.max_len);
  t.log_prob = hyp.log_prob;
  for (int id : hyp.tokens) {
    if (id == Vocabulary::kEos) {
      break;
    }
    t.sketch.push_back(vocab_.display(id));
  }
  try {
    auto ast = parse_annotated_sql(t.sketch);
    t.sql = resolve_symbols(ast, t.annotation.symbols, schema);
    t.sql_text = serialize(*t.sql, schema);
    t.result = execute(*t.sql, res_->table(schema.table_id));
  } catch (const SqlError& e) {
    t.sql.reset();
    t.error = e.what();
  }
  return t;
}

EvalReport Translator::evaluate(const std::vector<PreparedExample>& examples) const {
  EvalReport r;
  for (const auto& ex : examples) {
    ++r.total;
    ++r.coverage.total;
    if (ex.target) {
      ++r.coverage.aligned;
    } else {
      ++r.coverage.failures[ex.alignment_failure.substr(0, ex.alignment_failure.find(':'))];
    }
    auto t = translate(ex);
    if (!t.sql) {
      ++r.parse_failures;
    }
    auto m = score_prediction(t.sql, ex.example.gold, res_->table(ex.example.table_id));
    r.lf += m.lf ? 1 : 0;
    r.qm += m.qm ? 1 : 0;
    r.ex += m.ex ? 1 : 0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training and evaluation drivers

namespace {

std::vector<Example> load_split(const std::filesystem::path& split, const std::filesystem::path& trees,
                                const Resources& res) {
  auto examples = load_wikisql(split, res.tables);
  if (!trees.empty()) {
    attach_trees(examples, trees);
  }
  return examples;
}

void init_pretrained(ModelParams<float>& params, const Vocabulary& vocab, const EmbeddingStore& emb) {
  if (emb.empty() || emb.dimension() != params.word_emb.cols()) {
    return;
  }
  for (int id = 0; id < vocab.size(); ++id) {
    if (vocab.symbol(id)) {
      continue;
    }
    if (auto v = emb.lookup(vocab.token(id))) {
      for (std::size_t k = 0; k < v->size(); ++k) {
        params.word_emb(id, static_cast<Eigen::Index>(k)) = (*v)[k];
      }
    }
  }
}

} // namespace

TrainSummary train_on(const Config& cfg, std::shared_ptr<const Resources> res,
                      const std::vector<PreparedExample>& train, const std::vector<PreparedExample>* dev,
                      std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  auto vocab = build_vocabulary(train, cfg);
  auto set = build_training_pairs(train, vocab);
  TrainSummary summary;
  summary.coverage = set.coverage;
  if (set.pairs.empty()) {
    throw ModelError("no aligned training examples");
  }

  auto mcfg = cfg.model_config(vocab.size());
  auto params = ModelParams<float>::random(mcfg, cfg.training.seed, cfg.model.init_scale);
  if (cfg.model.pretrained_embeddings) {
    init_pretrained(params, vocab, res->embeddings);
  }
  Seq2Seq<float> model(mcfg, TokenLayout::from(vocab), std::move(params));
  Adam<float> opt(model.params(), cfg.training.adam);
  std::mt19937_64 rng(cfg.training.seed);

  std::filesystem::create_directories(cfg.output_dir);
  vocab.save(cfg.output_dir / "vocab.txt");
  {
    std::ofstream c(cfg.output_dir / "config.json");
    c << cfg.to_json() << '\n';
  }
  std::ofstream train_log(cfg.output_dir / "train_log.jsonl");
  summary.checkpoint = cfg.output_dir / "checkpoint.bin";
  auto save = [&]() { save_checkpoint(summary.checkpoint, {mcfg, model.params().cast<double>(), vocab.hash()}); };

  // Without a dev split, progress is measured on the aligned training examples.
  std::vector<PreparedExample> train_aligned;
  if (dev == nullptr) {
    for (auto i : set.origin) {
      train_aligned.push_back(train[i]);
    }
  }
  const auto& eval_set = dev != nullptr ? *dev : train_aligned;

  summary.best_accuracy = -1.0;
  int since_best = 0;
  bool saved = false;
  for (int epoch = 1; epoch <= cfg.training.epochs; ++epoch) {
    auto stats = train_epoch(model, opt, set.pairs, cfg.training.batch_size, cfg.training.clip, rng, epoch);
    summary.epochs_run = epoch;
    summary.final_loss = stats.loss;
    json line = {{"epoch", epoch},
                 {"loss", stats.loss},
                 {"token_accuracy", stats.token_accuracy},
                 {"max_grad_norm", stats.max_grad_norm},
                 {"seconds", stats.seconds},
                 {"seed", cfg.training.seed}};
    bool stop = false;
    if (epoch % cfg.training.eval_every == 0 || epoch == cfg.training.epochs) {
      Translator tr(cfg, res, vocab, model);
      auto report = tr.evaluate(eval_set);
      double acc = dev != nullptr ? report.acc_qm() : report.acc_lf();
      line[dev != nullptr ? "dev_acc_qm" : "train_acc_lf"] = acc;
      if (acc > summary.best_accuracy) {
        summary.best_accuracy = acc;
        since_best = 0;
        save();
        saved = true;
      } else {
        ++since_best;
      }
      if (cfg.training.target_accuracy > 0 && acc >= cfg.training.target_accuracy) {
        stop = true;
      }
      if (dev != nullptr && cfg.training.patience > 0 && since_best >= cfg.training.patience) {
        stop = true;
      }
    }
    train_log << line.dump() << '\n';
    train_log.flush();
    if (log != nullptr) {
      *log << line.dump() << '\n';
    }
    if (stop) {
      break;
    }
  }
  if (!saved) {
    save();
  }
  summary.best_accuracy = std::max(summary.best_accuracy, 0.0);
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

TrainSummary run_train(const Config& cfg, std::ostream* log) {
  auto res = std::make_shared<const Resources>(Resources::load(cfg));
  auto train_ex = load_split(cfg.data.train, cfg.data.train_trees, *res);
  if (cfg.data.max_train_examples > 0 && static_cast<int>(train_ex.size()) > cfg.data.max_train_examples) {
    train_ex.resize(static_cast<std::size_t>(cfg.data.max_train_examples));
  }
  auto train = prepare_examples(train_ex, *res, cfg);
  std::optional<std::vector<PreparedExample>> dev;
  if (!cfg.data.dev.empty()) {
    dev = prepare_examples(load_split(cfg.data.dev, cfg.data.dev_trees, *res), *res, cfg);
  }
  return train_on(cfg, res, train, dev ? &*dev : nullptr, log);
}

EvalReport run_eval(const Config& cfg, const std::filesystem::path& checkpoint, const std::string& split) {
  auto res = std::make_shared<const Resources>(Resources::load(cfg));
  std::filesystem::path path = split;
  std::filesystem::path trees;
  if (split == "train") {
    path = cfg.data.train;
    trees = cfg.data.train_trees;
  } else if (split == "dev") {
    path = cfg.data.dev;
    trees = cfg.data.dev_trees;
  } else if (split == "test") {
    path = cfg.data.test;
    trees = cfg.data.test_trees;
  }
  auto tr = Translator::load(cfg, res, checkpoint);
  auto examples = prepare_examples(load_split(path, trees, *res), *res, cfg);
  return tr.evaluate(examples);
}

void run_repl(const Translator& translator, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out << json{{"error", "expected table_id<TAB>question"}}.dump() << std::endl;
      continue;
    }
    auto table_id = trim(line.substr(0, tab));
    auto question = trim(line.substr(tab + 1));
    try {
      auto t = translator.translate(question, table_id);
      out << t.to_json(translator.resources().table(table_id).schema) << std::endl;
    } catch (const std::exception& e) {
      out << json{{"table_id", table_id}, {"question", question}, {"error", e.what()}}.dump() << std::endl;
    }
  }
}

} // namespace nlidb
