// Command-line front end: annotate, train, eval, translate, repl.

#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "nlidb/constituency_tree.hpp"
#include "nlidb/harness.hpp"
#include "nlidb/text.hpp"

using nlohmann::json;
using namespace nlidb;

namespace {

std::string kind_name(MentionKind k) { return k == MentionKind::Column ? "column" : "value"; }

std::string source_name(MentionSource s) {
  switch (s) {
    case MentionSource::Coverage:
      return "coverage";
    case MentionSource::Lexicon:
      return "lexicon";
    case MentionSource::ExactValue:
      return "exact_value";
    case MentionSource::AffinityValue:
      return "affinity_value";
  }
  return "";
}

json annotation_json(const PreparedExample& p, const TableSchema& schema) {
  const auto& a = p.annotation;
  json mentions = json::array();
  for (const auto& m : a.mentions) {
    mentions.push_back({{"symbol", m.symbol().display()},
                        {"kind", kind_name(m.kind)},
                        {"column", schema.columns.at(static_cast<std::size_t>(m.column)).name},
                        {"span", {m.span.start, m.span.end}},
                        {"surface", a.surface(m.span)},
                        {"score", m.score},
                        {"source", source_name(m.source)}});
  }
  json symbols = json::object();
  for (const auto& [i, b] : a.symbols.columns) {
    symbols["c" + std::to_string(i)] = schema.columns.at(static_cast<std::size_t>(b.column)).name;
  }
  for (const auto& [i, b] : a.symbols.values) {
    symbols["v" + std::to_string(i)] = {{"value", b.surface},
                                        {"column", schema.columns.at(static_cast<std::size_t>(b.column)).name}};
  }
  json out = {{"question", a.question},
              {"table_id", schema.table_id},
              {"annotated", render(p.source)},
              {"mentions", mentions},
              {"symbols", symbols}};
  if (p.target) {
    out["sketch"] = to_string(*p.target);
  } else {
    out["alignment_failure"] = p.alignment_failure;
  }
  return out;
}

std::ostream& sink(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") {
    return std::cout;
  }
  file.open(path);
  if (!file) {
    throw std::runtime_error("cannot write " + path);
  }
  return file;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annotated sequence-to-sequence translation of questions to SQL"};
  app.require_subcommand(1);

  std::string tables, lexicon, trees, in_path, out_path, embeddings, config_path, checkpoint, split, question,
      table_id, tree;

  auto* annotate_cmd = app.add_subcommand("annotate", "Annotate questions against their tables");
  annotate_cmd->add_option("--tables", tables, "WikiSQL tables JSONL")->required();
  annotate_cmd->add_option("--lexicon", lexicon, "Phrase lexicon")->required();
  annotate_cmd->add_option("--trees", trees, "Bracketed parses, one per input line");
  annotate_cmd->add_option("--in", in_path, "WikiSQL-format questions JSONL")->required();
  annotate_cmd->add_option("--out", out_path, "Output JSONL (default stdout)");
  annotate_cmd->add_option("--embeddings", embeddings, "Word vectors in text format");
  annotate_cmd->add_option("--config", config_path, "Config supplying thresholds and encoding");

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config_path)->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval_cmd->add_option("--config", config_path)->required();
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--split", split, "train, dev, test or a path")->required();
  eval_cmd->add_option("--out", out_path, "Report path (default stdout)");

  auto* translate_cmd = app.add_subcommand("translate", "Translate one question");
  translate_cmd->add_option("--config", config_path)->required();
  translate_cmd->add_option("--checkpoint", checkpoint)->required();
  translate_cmd->add_option("--question", question)->required();
  translate_cmd->add_option("--table", table_id)->required();
  translate_cmd->add_option("--tree", tree, "Bracketed parse of the question");

  auto* repl_cmd = app.add_subcommand("repl", "Translate \"table_id<TAB>question\" lines from stdin");
  repl_cmd->add_option("--config", config_path)->required();
  repl_cmd->add_option("--checkpoint", checkpoint)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (annotate_cmd->parsed()) {
      Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
      cfg.data.tables = tables;
      cfg.data.lexicon = lexicon;
      cfg.data.embeddings = embeddings;
      auto res = Resources::load(cfg);
      auto examples = load_wikisql(in_path, res.tables);
      if (!trees.empty()) {
        attach_trees(examples, trees);
      }
      std::ofstream file;
      auto& out = sink(out_path, file);
      for (const auto& ex : examples) {
        auto p = prepare_example(ex, res, cfg);
        out << annotation_json(p, res.table(ex.table_id).schema).dump() << '\n';
      }
      return 0;
    }
    auto cfg = Config::load(config_path);
    if (train_cmd->parsed()) {
      auto summary = run_train(cfg, &std::cerr);
      json out = {{"epochs", summary.epochs_run},
                  {"final_loss", summary.final_loss},
                  {"best_accuracy", summary.best_accuracy},
                  {"alignment_coverage", summary.coverage.coverage()},
                  {"aligned", summary.coverage.aligned},
                  {"examples", summary.coverage.total},
                  {"checkpoint", summary.checkpoint.string()},
                  {"seconds", summary.seconds}};
      std::cout << out.dump(2) << '\n';
      return 0;
    }
    if (eval_cmd->parsed()) {
      auto report = run_eval(cfg, checkpoint, split);
      std::ofstream file;
      sink(out_path, file) << report.to_json(&cfg) << '\n';
      return 0;
    }
    auto res = std::make_shared<const Resources>(Resources::load(cfg));
    auto translator = Translator::load(cfg, res, checkpoint);
    if (translate_cmd->parsed()) {
      auto t = translator.translate(question, table_id,
                                    tree.empty() ? std::nullopt : std::optional<std::string>(tree));
      std::cout << t.to_json(res->table(table_id).schema) << '\n';
      return t.error.empty() ? 0 : 2;
    }
    if (repl_cmd->parsed()) {
      run_repl(translator, std::cin, std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
