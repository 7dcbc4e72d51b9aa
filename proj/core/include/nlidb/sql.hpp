#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nlidb/meta_knowledge.hpp"
#include "nlidb/mention_resolve.hpp"

namespace nlidb {

/// Thrown for unparseable sketches and unbound symbols. Metrics treat it as a
/// wrong prediction.
class SqlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Aggregate { None, Count, Max, Min, Sum, Avg };
enum class CondOp { Eq, Gt, Lt };

std::string to_string(Aggregate a);
std::string to_string(CondOp op);
std::optional<Aggregate> aggregate_from_string(std::string_view s);
std::optional<CondOp> cond_op_from_string(std::string_view s);
/// WikiSQL integer codes: agg ['', MAX, MIN, COUNT, SUM, AVG], ops [=, >, <].
Aggregate aggregate_from_wikisql(int code);
int aggregate_to_wikisql(Aggregate a);
CondOp cond_op_from_wikisql(int code);
int cond_op_to_wikisql(CondOp op);

struct AnnotatedCondition {
  SymbolRef column;
  CondOp op = CondOp::Eq;
  SymbolRef value;

  bool operator==(const AnnotatedCondition&) const = default;
};

struct AnnotatedSqlAst {
  Aggregate agg = Aggregate::None;
  SymbolRef select;
  std::vector<AnnotatedCondition> conditions;

  bool operator==(const AnnotatedSqlAst&) const = default;
};

/// Grammar: [AGG] SELECT (c|g) [WHERE (c|g) op v (AND (c|g) op v)*].
/// Symbols may be bare ("c1") or bracketed ("<c1>"). Throws SqlError.
AnnotatedSqlAst parse_annotated_sql(const std::vector<std::string>& tokens);
AnnotatedSqlAst parse_annotated_sql(std::string_view text);
/// Display tokens, e.g. {"SELECT", "c1", "WHERE", ...}.
std::vector<std::string> sketch_tokens(const AnnotatedSqlAst& ast);
/// Vocabulary keys: as sketch_tokens but symbols bracketed ("<c1>").
std::vector<std::string> sketch_keys(const AnnotatedSqlAst& ast);
std::string to_string(const AnnotatedSqlAst& ast);

struct ConcreteCondition {
  int column = 0;
  CondOp op = CondOp::Eq;
  std::string value;

  bool operator==(const ConcreteCondition&) const = default;
};

struct ConcreteSql {
  Aggregate agg = Aggregate::None;
  int select = 0;
  std::vector<ConcreteCondition> conditions;

  bool operator==(const ConcreteSql&) const = default;
};

/// `SELECT [AGG(]col[)] FROM <table_id> [WHERE col op 'val' AND ...]`.
std::string serialize(const ConcreteSql& sql, const TableSchema& schema);

/// Throws SqlError for unbound symbols or header indices past the schema.
ConcreteSql resolve_symbols(const AnnotatedSqlAst& ast, const SymbolTable& symbols,
                            const TableSchema& schema);

struct CanonicalCondition {
  std::string column;
  std::string op;
  std::string value;

  auto operator<=>(const CanonicalCondition&) const = default;
};

struct CanonicalSql {
  std::string agg;
  std::string select;
  std::vector<CanonicalCondition> conditions;

  bool operator==(const CanonicalSql&) const = default;
  std::string to_string() const;
};

/// Case-folded identifiers, normalized literals, conditions sorted.
CanonicalSql canonicalize(const ConcreteSql& sql, const TableSchema& schema);
/// Canonical form of an already canonical query is itself.
CanonicalSql canonicalize(const CanonicalSql& sql);
std::string normalize_literal(std::string_view value);

using Cell = std::variant<double, std::string>;

struct ResultSet {
  std::vector<Cell> values;
  /// Set when the query compares text with < or > or aggregates text numerically.
  bool type_error = false;

  bool operator==(const ResultSet&) const = default;
};

/// Literals and text cells compare by normalize_literal, so trimming, case and
/// number formatting never change a result. Real columns compare numerically.
ResultSet execute(const ConcreteSql& sql, const Table& table);
/// Order-insensitive comparison with absolute numeric tolerance.
bool results_equal(const ResultSet& a, const ResultSet& b, double tolerance = 1e-9);

struct AlignmentFailure {
  std::string reason;
};

/// Rewrites a gold query over the annotation's symbols, preferring c_i/v_i
/// bindings and falling back to g_i for columns without one.
std::variant<AnnotatedSqlAst, AlignmentFailure> align_gold_sql(const ConcreteSql& gold,
                                                               const Annotation& annotation,
                                                               const TableSchema& schema);

} // namespace nlidb
