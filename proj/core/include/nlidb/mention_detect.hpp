#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlidb/meta_knowledge.hpp"
#include "nlidb/text.hpp"

namespace nlidb {

/// Half-open token range [start, end).
struct Span {
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  bool contains(const Span& o) const { return start <= o.start && o.end <= end; }
  bool overlaps(const Span& o) const { return start < o.end && o.start < end; }
  auto operator<=>(const Span&) const = default;
};

enum class MentionKind { Column, Value };
enum class MentionSource { Coverage, Lexicon, ExactValue, AffinityValue };

struct CandidateMention {
  Span span;
  MentionKind kind = MentionKind::Column;
  /// Position of the mentioned column (for values: the column it likely belongs to).
  int column = 0;
  double score = 0.0;
  MentionSource source = MentionSource::Coverage;

  bool operator==(const CandidateMention&) const = default;
};

struct Thresholds {
  double edit = 0.5;
  double semantic = 0.15;
  /// A value mention needs affinity strictly above this.
  double value = 0.6;
  int max_value_span = 6;
  int max_slot_tokens = 4;
};

/// Levenshtein distance over bytes divided by the longer length.
double edit_closeness(std::string_view x, std::string_view y);
/// 0.5 * (1 - cos); nullopt when either word lacks a vector.
std::optional<double> embedding_closeness(std::string_view x, std::string_view y,
                                          const EmbeddingStore& emb);
bool words_close(std::string_view x, std::string_view y, const EmbeddingStore& emb,
                 const Thresholds& thr);

/// Number of close (question word, column word) pairs; stop words and
/// punctuation never pair.
int coverage_count(Span span, std::span<const std::string> question,
                   std::span<const std::string> column_tokens, const EmbeddingStore& emb,
                   const Thresholds& thr);
int coverage_count(Span span, std::span<const std::string> question, const ColumnMeta& column,
                   const EmbeddingStore& emb, const Thresholds& thr);

/// Spans satisfying both maximality rules for one column's name tokens: no
/// larger containing span covers more pairs, and no smaller contained span
/// covers as many. Empty when nothing is covered.
std::vector<Span> maximal_coverage_spans(std::span<const std::string> question,
                                         std::span<const std::string> column_tokens,
                                         const EmbeddingStore& emb, const Thresholds& thr);

/// Phrase-template matches of `t` in `question`; each returned span covers the
/// literal run before the slot (or after it when the template opens with the slot).
std::vector<Span> match_template(const PhraseTemplate& t, std::span<const std::string> question,
                                 int max_slot_tokens);

std::vector<CandidateMention> detect_column_mentions(std::span<const std::string> question,
                                                     const TableSchema& schema,
                                                     const PhraseLexicon& lexicon,
                                                     const EmbeddingStore& emb,
                                                     const Thresholds& thr);

/// `column_mentions` masks spans lying fully inside an accepted column mention.
std::vector<CandidateMention> detect_value_mentions(
    std::span<const std::string> question, const TableSchema& schema, const ValueStats& stats,
    const EmbeddingStore& emb, const Thresholds& thr,
    std::span<const CandidateMention> column_mentions = {});

} // namespace nlidb
