#include "nlidb/mention_detect.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace nlidb {

double edit_closeness(std::string_view x, std::string_view y) {
  const std::size_t n = x.size();
  const std::size_t m = y.size();
  if (n == 0 && m == 0) {
    return 0.0;
  }
  std::vector<std::size_t> prev(m + 1);
  std::vector<std::size_t> cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) {
    prev[j] = j;
  }
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

std::optional<double> embedding_closeness(std::string_view x, std::string_view y,
                                          const EmbeddingStore& emb) {
  auto vx = emb.lookup(x);
  auto vy = emb.lookup(y);
  if (!vx || !vy) {
    return std::nullopt;
  }
  double dot = 0.0;
  double nx = 0.0;
  double ny = 0.0;
  for (std::size_t k = 0; k < vx->size(); ++k) {
    dot += static_cast<double>((*vx)[k]) * (*vy)[k];
    nx += static_cast<double>((*vx)[k]) * (*vx)[k];
    ny += static_cast<double>((*vy)[k]) * (*vy)[k];
  }
  if (nx == 0.0 || ny == 0.0) {
    return std::nullopt;
  }
  double cos = std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0);
  return 0.5 * (1.0 - cos);
}

bool words_close(std::string_view x, std::string_view y, const EmbeddingStore& emb,
                 const Thresholds& thr) {
  if (x.empty() || y.empty()) {
    return false;
  }
  if (edit_closeness(x, y) < thr.edit) {
    return true;
  }
  auto sem = embedding_closeness(x, y, emb);
  return sem && *sem < thr.semantic;
}

namespace {

std::vector<int> pair_counts(std::span<const std::string> question,
                             std::span<const std::string> column_tokens, const EmbeddingStore& emb,
                             const Thresholds& thr) {
  std::vector<int> counts(question.size(), 0);
  for (std::size_t i = 0; i < question.size(); ++i) {
    if (is_function_token(question[i])) {
      continue;
    }
    for (const auto& y : column_tokens) {
      if (!is_function_token(y) && words_close(question[i], y, emb, thr)) {
        ++counts[i];
      }
    }
  }
  return counts;
}

int content_size(std::span<const std::string> tokens) {
  return static_cast<int>(
      std::count_if(tokens.begin(), tokens.end(), [](const auto& t) { return !is_function_token(t); }));
}

bool dominated(const CandidateMention& a, const CandidateMention& b) {
  // b beats a: higher score, then longer span.
  return std::make_tuple(b.score, b.span.length()) > std::make_tuple(a.score, a.span.length());
}

void sort_mentions(std::vector<CandidateMention>& out) {
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.span, a.column, static_cast<int>(a.source)) <
           std::make_tuple(b.span, b.column, static_cast<int>(b.source));
  });
}

} // namespace

int coverage_count(Span span, std::span<const std::string> question,
                   std::span<const std::string> column_tokens, const EmbeddingStore& emb,
                   const Thresholds& thr) {
  int total = 0;
  for (int i = std::max(span.start, 0); i < span.end && i < static_cast<int>(question.size()); ++i) {
    if (is_function_token(question[i])) {
      continue;
    }
    for (const auto& y : column_tokens) {
      if (!is_function_token(y) && words_close(question[i], y, emb, thr)) {
        ++total;
      }
    }
  }
  return total;
}

int coverage_count(Span span, std::span<const std::string> question, const ColumnMeta& column,
                   const EmbeddingStore& emb, const Thresholds& thr) {
  auto tokens = column.tokens();
  return coverage_count(span, question, tokens, emb, thr);
}

std::vector<Span> maximal_coverage_spans(std::span<const std::string> question,
                                         std::span<const std::string> column_tokens,
                                         const EmbeddingStore& emb, const Thresholds& thr) {
  auto counts = pair_counts(question, column_tokens, emb, thr);
  // Coverage only grows with the span, so rule (1) forces the span to reach
  // the whole-question count and rule (2) forces both ends onto covering
  // tokens. That leaves exactly one span: first to last covering token.
  auto first = std::find_if(counts.begin(), counts.end(), [](int c) { return c > 0; });
  if (first == counts.end()) {
    return {};
  }
  auto last = std::find_if(counts.rbegin(), counts.rend(), [](int c) { return c > 0; });
  int a = static_cast<int>(first - counts.begin());
  int b = static_cast<int>(counts.rend() - last);
  return {Span{a, b}};
}

std::vector<Span> match_template(const PhraseTemplate& t, std::span<const std::string> question,
                                 int max_slot_tokens) {
  std::vector<Span> out;
  const int n = static_cast<int>(question.size());
  const int np = static_cast<int>(t.prefix.size());
  const int ns = static_cast<int>(t.suffix.size());
  auto matches_at = [&](const std::vector<std::string>& words, int pos) {
    if (pos < 0 || pos + static_cast<int>(words.size()) > n) {
      return false;
    }
    for (std::size_t k = 0; k < words.size(); ++k) {
      if (question[pos + static_cast<int>(k)] != words[k]) {
        return false;
      }
    }
    return true;
  };
  for (int s = 0; s < n; ++s) {
    if (!matches_at(t.prefix, s)) {
      continue;
    }
    if (!t.has_slot) {
      out.push_back(Span{s, s + np});
      continue;
    }
    // Shortest slot fill that lets the suffix match.
    for (int fill = 1; fill <= max_slot_tokens; ++fill) {
      int slot_end = s + np + fill;
      if (slot_end > n) {
        break;
      }
      if (matches_at(t.suffix, slot_end)) {
        Span span = np > 0 ? Span{s, s + np} : Span{slot_end, slot_end + ns};
        // A leading slot reaches the same suffix from several starts.
        if (out.empty() || out.back() != span) {
          out.push_back(span);
        }
        break;
      }
    }
  }
  return out;
}

std::vector<CandidateMention> detect_column_mentions(std::span<const std::string> question,
                                                     const TableSchema& schema,
                                                     const PhraseLexicon& lexicon,
                                                     const EmbeddingStore& emb,
                                                     const Thresholds& thr) {
  std::vector<CandidateMention> out;
  for (const auto& column : schema.columns) {
    std::vector<CandidateMention> lex_mentions;
    if (const auto* templates = lexicon.find(column)) {
      for (const auto& t : *templates) {
        for (auto span : match_template(t, question, thr.max_slot_tokens)) {
          lex_mentions.push_back(
              CandidateMention{span, MentionKind::Column, column.position, 1.0, MentionSource::Lexicon});
        }
      }
    }
    // Keep only lexicon spans not strictly inside another one; drop duplicates.
    std::vector<CandidateMention> kept;
    for (const auto& m : lex_mentions) {
      bool inner = std::any_of(lex_mentions.begin(), lex_mentions.end(), [&](const auto& o) {
        return o.span != m.span && o.span.contains(m.span);
      });
      bool dup = std::any_of(kept.begin(), kept.end(), [&](const auto& o) { return o.span == m.span; });
      if (!inner && !dup) {
        kept.push_back(m);
      }
    }

    auto col_tokens = column.tokens();
    int denom = content_size(col_tokens);
    if (denom > 0) {
      for (auto span : maximal_coverage_spans(question, col_tokens, emb, thr)) {
        bool shadowed = std::any_of(kept.begin(), kept.end(),
                                    [&](const auto& o) { return o.span.overlaps(span); });
        if (shadowed) {
          continue;
        }
        int pairs = coverage_count(span, question, col_tokens, emb, thr);
        double score = std::min(1.0, static_cast<double>(pairs) / denom);
        kept.push_back(
            CandidateMention{span, MentionKind::Column, column.position, score, MentionSource::Coverage});
      }
    }
    out.insert(out.end(), kept.begin(), kept.end());
  }
  sort_mentions(out);
  return out;
}

std::vector<CandidateMention> detect_value_mentions(std::span<const std::string> question,
                                                    const TableSchema& schema,
                                                    const ValueStats& stats,
                                                    const EmbeddingStore& emb,
                                                    const Thresholds& thr,
                                                    std::span<const CandidateMention> column_mentions) {
  const int n = static_cast<int>(question.size());
  std::vector<std::vector<CandidateMention>> per_column(schema.columns.size());
  for (int start = 0; start < n; ++start) {
    for (int len = 1; len <= thr.max_value_span && start + len <= n; ++len) {
      Span span{start, start + len};
      auto words = question.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(len));
      if (std::all_of(words.begin(), words.end(), [](const auto& w) { return is_function_token(w); })) {
        continue;
      }
      bool masked = std::any_of(column_mentions.begin(), column_mentions.end(),
                                [&](const auto& m) { return m.span.contains(span); });
      if (masked) {
        continue;
      }
      bool clean_edges = !is_function_token(words.front()) && !is_function_token(words.back());
      std::vector<std::string> term(words.begin(), words.end());
      auto key = join(term);
      for (const auto& column : schema.columns) {
        const auto& col_stats = stats.columns.at(static_cast<std::size_t>(column.position));
        bool exact = col_stats.distinct.contains(key);
        if (!exact && !clean_edges) {
          continue;
        }
        double aff = exact ? 1.0 : value_affinity(term, column, stats, emb);
        if (aff > thr.value) {
          per_column[static_cast<std::size_t>(column.position)].push_back(CandidateMention{
              span, MentionKind::Value, column.position, aff,
              exact ? MentionSource::ExactValue : MentionSource::AffinityValue});
        }
      }
    }
  }
  std::vector<CandidateMention> out;
  for (const auto& mentions : per_column) {
    for (const auto& m : mentions) {
      bool beaten = std::any_of(mentions.begin(), mentions.end(), [&](const auto& o) {
        return o.span != m.span && o.span.overlaps(m.span) && dominated(m, o);
      });
      if (!beaten) {
        out.push_back(m);
      }
    }
  }
  sort_mentions(out);
  return out;
}

} // namespace nlidb
