#include "nlidb/mention_resolve.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <tuple>

namespace nlidb {

double StructuralCloseness::operator()(Span a, Span b) const {
  double best = -std::numeric_limits<double>::infinity();
  for (int i = a.start; i < a.end; ++i) {
    for (int j = b.start; j < b.end; ++j) {
      double c = 0.0;
      switch (mode_) {
        case Mode::Tree:
          c = tree_->lca_depth(i, j);
          break;
        case Mode::TokenDistance:
          c = -std::abs(i - j);
          break;
        case Mode::None:
          c = 0.0;
          break;
      }
      best = std::max(best, c);
    }
  }
  return best;
}

int lca_depth(const ConstituencyTree& tree, int i, int j) { return tree.lca_depth(i, j); }

int structural_closeness(const CandidateMention& v, const CandidateMention& c,
                         const ConstituencyTree& tree) {
  return static_cast<int>(StructuralCloseness::tree(tree)(v.span, c.span));
}

bool MatchGraph::has_edge(int v, int c) const {
  return std::any_of(edges.begin(), edges.end(),
                     [&](const MatchEdge& e) { return e.value == v && e.column == c; });
}

int MatchGraph::degree_of_column(int c) const {
  return static_cast<int>(
      std::count_if(edges.begin(), edges.end(), [&](const MatchEdge& e) { return e.column == c; }));
}

MatchGraph build_match_graph(const std::vector<CandidateMention>& values,
                             const std::vector<CandidateMention>& columns,
                             const StructuralCloseness& closeness) {
  MatchGraph g;
  std::map<Span, std::size_t> by_span;
  for (const auto& m : values) {
    auto [it, inserted] = by_span.try_emplace(m.span, g.values.size());
    if (inserted) {
      g.values.push_back(ValueVertex{m.span, {}, m.score, m.source});
    }
    auto& v = g.values[it->second];
    if (std::find(v.columns.begin(), v.columns.end(), m.column) == v.columns.end()) {
      v.columns.push_back(m.column);
    }
    if (m.score > v.score) {
      v.score = m.score;
      v.source = m.source;
    }
  }
  for (auto& v : g.values) {
    std::sort(v.columns.begin(), v.columns.end());
  }

  for (const auto& m : columns) {
    g.columns.push_back(ColumnVertex{m.column, m.span, m.score, m.source});
  }
  const int mentioned = static_cast<int>(g.columns.size());
  std::map<int, int> synthetic;

  for (int vi = 0; vi < static_cast<int>(g.values.size()); ++vi) {
    const auto& v = g.values[static_cast<std::size_t>(vi)];
    std::vector<MatchEdge> local;
    for (int ci = 0; ci < mentioned; ++ci) {
      const auto& c = g.columns[static_cast<std::size_t>(ci)];
      if (std::binary_search(v.columns.begin(), v.columns.end(), c.column)) {
        double score = closeness.prunes() ? closeness(v.span, *c.span) : 0.0;
        local.push_back(MatchEdge{vi, ci, score});
      }
    }
    if (!local.empty()) {
      double best = std::max_element(local.begin(), local.end(), [](const auto& a, const auto& b) {
                      return a.closeness < b.closeness;
                    })->closeness;
      for (const auto& e : local) {
        if (e.closeness == best) {
          g.edges.push_back(e);
        }
      }
    }
    for (int col : v.columns) {
      bool is_mentioned = std::any_of(g.columns.begin(), g.columns.begin() + mentioned,
                                      [&](const ColumnVertex& c) { return c.column == col; });
      if (is_mentioned) {
        continue;
      }
      auto [it, inserted] = synthetic.try_emplace(col, static_cast<int>(g.columns.size()));
      if (inserted) {
        g.columns.push_back(ColumnVertex{col, std::nullopt, 0.0, MentionSource::Coverage});
      }
      g.edges.push_back(MatchEdge{vi, it->second, 0.0});
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

std::vector<std::pair<int, int>> max_bipartite_matching(const MatchGraph& g) {
  const int nv = static_cast<int>(g.values.size());
  const int nc = static_cast<int>(g.columns.size());
  auto column_key = [&](int c) {
    const auto& col = g.columns[static_cast<std::size_t>(c)];
    return col.span ? col.span->start : std::numeric_limits<int>::max() - 1024 + col.column;
  };

  std::vector<std::vector<const MatchEdge*>> adj(static_cast<std::size_t>(nv));
  for (const auto& e : g.edges) {
    adj[static_cast<std::size_t>(e.value)].push_back(&e);
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end(), [&](const MatchEdge* a, const MatchEdge* b) {
      bool sa = g.columns[static_cast<std::size_t>(a->column)].synthetic();
      bool sb = g.columns[static_cast<std::size_t>(b->column)].synthetic();
      return std::make_tuple(sa, -a->closeness, column_key(a->column), a->column) <
             std::make_tuple(sb, -b->closeness, column_key(b->column), b->column);
    });
  }

  std::vector<int> order(static_cast<std::size_t>(nv));
  for (int i = 0; i < nv; ++i) {
    order[static_cast<std::size_t>(i)] = i;
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& va = g.values[static_cast<std::size_t>(a)];
    const auto& vb = g.values[static_cast<std::size_t>(b)];
    return std::make_tuple(-va.score, va.span.start, va.span.end) <
           std::make_tuple(-vb.score, vb.span.start, vb.span.end);
  });

  std::vector<int> match_of_column(static_cast<std::size_t>(nc), -1);
  std::vector<char> visited;
  std::function<bool(int)> augment = [&](int v) -> bool {
    for (const auto* e : adj[static_cast<std::size_t>(v)]) {
      auto c = static_cast<std::size_t>(e->column);
      if (visited[c] != 0) {
        continue;
      }
      visited[c] = 1;
      if (match_of_column[c] < 0 || augment(match_of_column[c])) {
        match_of_column[c] = v;
        return true;
      }
    }
    return false;
  };
  for (int v : order) {
    visited.assign(static_cast<std::size_t>(nc), 0);
    augment(v);
  }

  std::vector<std::pair<int, int>> out;
  for (int c = 0; c < nc; ++c) {
    if (match_of_column[static_cast<std::size_t>(c)] >= 0) {
      out.emplace_back(match_of_column[static_cast<std::size_t>(c)], c);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string SymbolRef::display() const {
  char prefix = family == SymbolFamily::Column ? 'c' : family == SymbolFamily::Value ? 'v' : 'g';
  return prefix + std::to_string(index);
}

std::optional<SymbolRef> SymbolRef::from_display(std::string_view s) {
  if (s.size() >= 3 && s.front() == '<' && s.back() == '>') {
    s = s.substr(1, s.size() - 2);
  }
  if (s.size() < 2) {
    return std::nullopt;
  }
  SymbolRef ref;
  switch (s[0]) {
    case 'c':
      ref.family = SymbolFamily::Column;
      break;
    case 'v':
      ref.family = SymbolFamily::Value;
      break;
    case 'g':
      ref.family = SymbolFamily::Header;
      break;
    default:
      return std::nullopt;
  }
  if (s[1] == '0') {
    return std::nullopt;
  }
  int index = 0;
  for (char ch : s.substr(1)) {
    if (ch < '0' || ch > '9' || index > 100000) {
      return std::nullopt;
    }
    index = index * 10 + (ch - '0');
  }
  ref.index = index;
  return ref;
}

std::optional<int> SymbolTable::earliest(int index) const {
  std::optional<int> best;
  if (auto it = columns.find(index); it != columns.end() && it->second.span) {
    best = it->second.span->start;
  }
  if (auto it = values.find(index); it != values.end()) {
    best = best ? std::min(*best, it->second.span.start) : it->second.span.start;
  }
  if (!best && columns.contains(index)) {
    return -1;
  }
  return best;
}

std::vector<std::string> Annotation::words() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    out.push_back(t.text);
  }
  return out;
}

std::string Annotation::surface(Span span) const {
  if (span.start < 0 || span.end > static_cast<int>(tokens.size()) || span.start >= span.end) {
    return {};
  }
  const auto& first = tokens[static_cast<std::size_t>(span.start)];
  const auto& last = tokens[static_cast<std::size_t>(span.end - 1)];
  if (last.end <= question.size() && first.begin < last.end) {
    return question.substr(first.begin, last.end - first.begin);
  }
  std::vector<std::string> words;
  for (int i = span.start; i < span.end; ++i) {
    words.push_back(tokens[static_cast<std::size_t>(i)].text);
  }
  return join(words);
}

Annotation assign_indices(const MatchGraph& g, const std::vector<std::pair<int, int>>& matching,
                          const std::vector<Token>& tokens, std::string_view question,
                          int max_index) {
  Annotation out;
  out.question = std::string(question);
  out.tokens = tokens;

  // A group becomes one index: a (value, column) pair or a lone mentioned column.
  struct Group {
    std::optional<int> value;       // value vertex
    std::optional<int> column;      // column vertex (mentioned, possibly dropped later)
    int column_position = 0;
    bool keep_value = true;
    bool keep_column = true;
  };
  std::vector<Group> groups;
  std::vector<char> column_matched(g.columns.size(), 0);
  for (auto [v, c] : matching) {
    column_matched[static_cast<std::size_t>(c)] = 1;
    const auto& col = g.columns[static_cast<std::size_t>(c)];
    Group grp;
    grp.value = v;
    grp.column_position = col.column;
    if (!col.synthetic()) {
      grp.column = c;
    }
    groups.push_back(grp);
  }
  for (int c = 0; c < static_cast<int>(g.columns.size()); ++c) {
    const auto& col = g.columns[static_cast<std::size_t>(c)];
    if (column_matched[static_cast<std::size_t>(c)] == 0 && !col.synthetic()) {
      Group grp;
      grp.column = c;
      grp.column_position = col.column;
      groups.push_back(grp);
    }
  }

  // Settle overlaps: higher score, then longer, then earlier wins.
  struct Item {
    Span span;
    double score;
    std::size_t group;
    bool is_value;
  };
  std::vector<Item> items;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& grp = groups[k];
    if (grp.value) {
      const auto& v = g.values[static_cast<std::size_t>(*grp.value)];
      items.push_back(Item{v.span, v.score, k, true});
    }
    if (grp.column) {
      const auto& c = g.columns[static_cast<std::size_t>(*grp.column)];
      items.push_back(Item{*c.span, c.score, k, false});
    }
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return std::make_tuple(-a.score, -a.span.length(), a.span.start, a.is_value, a.group) <
           std::make_tuple(-b.score, -b.span.length(), b.span.start, b.is_value, b.group);
  });
  std::vector<Span> taken;
  for (const auto& item : items) {
    bool clash = std::any_of(taken.begin(), taken.end(), [&](Span s) { return s.overlaps(item.span); });
    if (clash) {
      (item.is_value ? groups[item.group].keep_value : groups[item.group].keep_column) = false;
    } else {
      taken.push_back(item.span);
    }
  }

  struct Final {
    int position;
    int column_position;
    std::optional<Span> column_span;
    std::optional<ValueVertex> value;
    MentionSource column_source;
    double column_score;
  };
  std::vector<Final> finals;
  for (const auto& grp : groups) {
    bool has_value = grp.value && grp.keep_value;
    bool has_column = grp.column && grp.keep_column;
    if (!has_value && !has_column) {
      continue;
    }
    Final f{};
    f.column_position = grp.column_position;
    f.position = std::numeric_limits<int>::max();
    if (has_column) {
      const auto& c = g.columns[static_cast<std::size_t>(*grp.column)];
      f.column_span = c.span;
      f.column_source = c.source;
      f.column_score = c.score;
      f.position = c.span->start;
    }
    if (has_value) {
      f.value = g.values[static_cast<std::size_t>(*grp.value)];
      f.position = std::min(f.position, f.value->span.start);
    }
    finals.push_back(std::move(f));
  }
  std::sort(finals.begin(), finals.end(), [](const Final& a, const Final& b) {
    return std::make_tuple(a.position, a.column_position) < std::make_tuple(b.position, b.column_position);
  });
  if (static_cast<int>(finals.size()) > max_index) {
    finals.resize(static_cast<std::size_t>(max_index));
  }

  for (std::size_t k = 0; k < finals.size(); ++k) {
    const auto& f = finals[k];
    int index = static_cast<int>(k) + 1;
    out.symbols.columns[index] = ColumnBinding{f.column_position, f.column_span};
    if (f.column_span) {
      out.mentions.push_back(AcceptedMention{*f.column_span, MentionKind::Column, f.column_position,
                                             index, f.column_score, f.column_source});
    }
    if (f.value) {
      out.symbols.values[index] = ValueBinding{out.surface(f.value->span), f.column_position, f.value->span};
      out.mentions.push_back(AcceptedMention{f.value->span, MentionKind::Value, f.column_position, index,
                                             f.value->score, f.value->source});
    }
  }
  std::sort(out.mentions.begin(), out.mentions.end(),
            [](const AcceptedMention& a, const AcceptedMention& b) { return a.span < b.span; });
  return out;
}

Annotation annotate(std::string_view question, const TableSchema& schema, const ValueStats& stats,
                    const PhraseLexicon& lexicon, const EmbeddingStore& emb,
                    const ConstituencyTree* tree, const AnnotateOptions& options) {
  auto tokens = tokenize(question);
  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) {
    words.push_back(t.text);
  }
  auto columns = detect_column_mentions(words, schema, lexicon, emb, options.thresholds);
  auto values = detect_value_mentions(words, schema, stats, emb, options.thresholds, columns);
  bool tree_usable = tree != nullptr && tree->leaf_count() == static_cast<int>(tokens.size());
  auto closeness = tree_usable ? StructuralCloseness::tree(*tree) : StructuralCloseness::token_distance();
  auto graph = build_match_graph(values, columns, closeness);
  auto matching = max_bipartite_matching(graph);
  return assign_indices(graph, matching, tokens, question, options.max_index);
}

} // namespace nlidb
