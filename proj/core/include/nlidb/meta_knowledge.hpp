#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace nlidb {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ColumnType { Text, Real };

struct ColumnMeta {
  std::string name;
  ColumnType type = ColumnType::Text;
  int position = 0;

  /// Case-folded name tokens, e.g. "English_Name" -> {"english", "name"}.
  std::vector<std::string> tokens() const;
};

struct TableSchema {
  std::string table_id;
  std::vector<ColumnMeta> columns;

  /// Case-insensitive lookup on the normalized name.
  const ColumnMeta* find(std::string_view name) const;
};

/// Materialized rows of one table. Cells are kept as strings; numeric JSON
/// cells are formatted with `format_number`.
struct Table {
  TableSchema schema;
  std::vector<std::vector<std::string>> rows;
};

struct ColumnStats {
  /// Normalized (tokenized, case-folded) distinct cell strings.
  std::set<std::string> distinct;
  /// Defined for real columns with at least one numeric cell.
  std::optional<std::pair<double, double>> range;
  std::map<std::string, int> token_counts;

  bool operator==(const ColumnStats&) const = default;
};

struct ValueStats {
  std::vector<ColumnStats> columns;

  bool operator==(const ValueStats&) const = default;
};

/// One phrase pattern. A template with a slot matches `prefix`, then 1..4
/// arbitrary tokens, then `suffix`.
struct PhraseTemplate {
  std::vector<std::string> prefix;
  bool has_slot = false;
  std::vector<std::string> suffix;

  auto operator<=>(const PhraseTemplate&) const = default;
  std::string to_string() const;
};

struct PhraseLexicon {
  /// Keyed by normalized column name.
  std::map<std::string, std::set<PhraseTemplate>> entries;

  const std::set<PhraseTemplate>* find(const ColumnMeta& column) const;
  std::size_t size() const { return entries.size(); }
};

class EmbeddingStore {
 public:
  static constexpr int kDefaultDimension = 300;

  EmbeddingStore() = default;
  explicit EmbeddingStore(int dimension) : dimension_(dimension) {}

  int dimension() const { return dimension_; }
  std::size_t size() const { return vectors_.size(); }
  bool empty() const { return vectors_.empty(); }

  /// Throws std::invalid_argument on dimension mismatch.
  void insert(std::string word, std::vector<float> vec);
  /// nullopt for absent words; never fabricates a vector.
  std::optional<std::span<const float>> lookup(std::string_view word) const;
  /// Unweighted mean of the present words' vectors; nullopt when none present.
  std::optional<std::vector<double>> mean(std::span<const std::string> words) const;

 private:
  int dimension_ = kDefaultDimension;
  std::unordered_map<std::string, std::vector<float>> vectors_;
};

double cosine(std::span<const double> a, std::span<const double> b);

std::vector<Table> load_tables(const std::filesystem::path& path);
/// Parses one WikiSQL table object (fields id, header, types, rows).
Table parse_table_json(std::string_view json_line);

ValueStats build_value_stats(const Table& table);

/// File format: `column<TAB>phrase1|phrase2...`; `⟨slot⟩` (or `<slot>`) marks
/// the wildcard. Blank lines and lines starting with '#' are skipped.
PhraseLexicon load_phrase_lexicon(const std::filesystem::path& path);
PhraseTemplate parse_phrase_template(std::string_view phrase);
/// Lexicon keys that match no column of any schema (entries are kept).
std::vector<std::string> lexicon_warnings(const PhraseLexicon& lexicon,
                                          std::span<const TableSchema> schemas);

EmbeddingStore load_embeddings(const std::filesystem::path& path);

/// How likely `term` is a value of `column`, in [0,1].
double value_affinity(std::span<const std::string> term, const ColumnMeta& column,
                      const ValueStats& stats, const EmbeddingStore& emb);

} // namespace nlidb
