#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nlidb/constituency_tree.hpp"
#include "nlidb/mention_detect.hpp"

namespace nlidb {

/// Structural closeness between two spans: the maximum LCA depth over word
/// pairs when a tree is present, otherwise -|i-j| maximized over pairs.
class StructuralCloseness {
 public:
  enum class Mode { None, TokenDistance, Tree };

  static StructuralCloseness none() { return StructuralCloseness(Mode::None, nullptr); }
  static StructuralCloseness token_distance() { return StructuralCloseness(Mode::TokenDistance, nullptr); }
  static StructuralCloseness tree(const ConstituencyTree& t) { return StructuralCloseness(Mode::Tree, &t); }

  Mode mode() const { return mode_; }
  bool prunes() const { return mode_ != Mode::None; }
  double operator()(Span a, Span b) const;

 private:
  StructuralCloseness(Mode mode, const ConstituencyTree* tree) : mode_(mode), tree_(tree) {}
  Mode mode_;
  const ConstituencyTree* tree_;
};

int lca_depth(const ConstituencyTree& tree, int i, int j);
int structural_closeness(const CandidateMention& v, const CandidateMention& c,
                         const ConstituencyTree& tree);

struct ValueVertex {
  Span span;
  /// Candidate column positions, ascending.
  std::vector<int> columns;
  double score = 0.0;
  MentionSource source = MentionSource::ExactValue;
};

struct ColumnVertex {
  int column = 0;
  /// Absent for synthetic vertices standing in for unmentioned columns.
  std::optional<Span> span;
  double score = 0.0;
  MentionSource source = MentionSource::Coverage;

  bool synthetic() const { return !span.has_value(); }
};

struct MatchEdge {
  int value = 0;
  int column = 0;
  /// Structural closeness; 0 for synthetic edges and when pruning is off.
  double closeness = 0.0;

  auto operator<=>(const MatchEdge&) const = default;
};

struct MatchGraph {
  std::vector<ValueVertex> values;
  std::vector<ColumnVertex> columns;
  std::vector<MatchEdge> edges;

  bool has_edge(int v, int c) const;
  int degree_of_column(int c) const;
};

/// Value mentions sharing a span collapse into one value vertex. Edges to
/// mentioned columns keep only the structurally closest ones (ties kept);
/// candidate columns never mentioned get a shared synthetic vertex.
MatchGraph build_match_graph(const std::vector<CandidateMention>& values,
                             const std::vector<CandidateMention>& columns,
                             const StructuralCloseness& closeness);

/// Maximum-cardinality matching as (value vertex, column vertex) pairs, sorted.
/// Augmenting paths start from values in (score desc, position asc) order and
/// try mentioned columns by closeness before synthetic ones.
std::vector<std::pair<int, int>> max_bipartite_matching(const MatchGraph& g);

enum class SymbolFamily { Column, Value, Header };

struct SymbolRef {
  SymbolFamily family = SymbolFamily::Column;
  int index = 1;

  auto operator<=>(const SymbolRef&) const = default;
  /// "c1", "v2", "g5".
  std::string display() const;
  static std::optional<SymbolRef> from_display(std::string_view s);
};

struct ColumnBinding {
  int column = 0;
  /// nullopt when the column was inferred from its value and never mentioned.
  std::optional<Span> span;
};

struct ValueBinding {
  std::string surface;
  int column = 0;
  Span span;
};

struct SymbolTable {
  std::map<int, ColumnBinding> columns;
  std::map<int, ValueBinding> values;

  bool empty() const { return columns.empty() && values.empty(); }
  /// Earliest question position of the index's mentions, or nullopt if the
  /// index is unknown.
  std::optional<int> earliest(int index) const;
};

struct AcceptedMention {
  Span span;
  MentionKind kind = MentionKind::Column;
  int column = 0;
  int index = 1;
  double score = 0.0;
  MentionSource source = MentionSource::Coverage;

  SymbolRef symbol() const {
    return {kind == MentionKind::Column ? SymbolFamily::Column : SymbolFamily::Value, index};
  }
};

struct Annotation {
  std::string question;
  std::vector<Token> tokens;
  /// Non-overlapping, sorted by span start.
  std::vector<AcceptedMention> mentions;
  SymbolTable symbols;

  std::vector<std::string> words() const;
  std::string surface(Span span) const;
};

/// Turns a matching into indexed symbols. Matched pairs share an index;
/// unmatched mentioned columns get their own. Overlaps are settled by score,
/// then span length, then position. Indices follow earliest mention.
Annotation assign_indices(const MatchGraph& g, const std::vector<std::pair<int, int>>& matching,
                          const std::vector<Token>& tokens, std::string_view question,
                          int max_index = 25);

struct AnnotateOptions {
  Thresholds thresholds;
  int max_index = 25;
};

/// Detection, structural pruning, matching and indexing. Falls back to token
/// distance when no tree is given or its leaves do not align with the tokens.
Annotation annotate(std::string_view question, const TableSchema& schema, const ValueStats& stats,
                    const PhraseLexicon& lexicon, const EmbeddingStore& emb,
                    const ConstituencyTree* tree, const AnnotateOptions& options = {});

} // namespace nlidb
