#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlidb/mention_resolve.hpp"

namespace nlidb {

struct AnnotatedToken {
  enum class Kind { Word, ColSym, ValSym, HeaderSym, Separator };

  Kind kind = Kind::Word;
  int index = 0;
  std::string surface;

  static AnnotatedToken word(std::string w) { return {Kind::Word, 0, std::move(w)}; }
  static AnnotatedToken symbol(SymbolRef ref);
  static AnnotatedToken separator() { return {Kind::Separator, 0, "|"}; }

  bool is_symbol() const { return kind == Kind::ColSym || kind == Kind::ValSym || kind == Kind::HeaderSym; }
  std::optional<SymbolRef> symbol_ref() const;
  /// Vocabulary key: words as-is, symbols as "<c1>", the separator as "<sep>".
  std::string key() const;

  bool operator==(const AnnotatedToken&) const = default;
};

enum class EncodingMode { Substitute, Stack };

/// Substitute replaces each accepted span by its symbol; Stack puts the symbol
/// right before the span and keeps the words. With `headers`, a separator and
/// g1..g|C| follow, each header symbol trailed by its column words in Stack mode.
std::vector<AnnotatedToken> encode_question(const Annotation& a, const TableSchema& schema,
                                            EncodingMode mode, bool headers);

std::vector<std::string> keys_of(std::span<const AnnotatedToken> tokens);
/// Space-joined surfaces, e.g. "what c1 did the c2 v2 play ?".
std::string render(std::span<const AnnotatedToken> tokens);

/// Shared source/target vocabulary. Layout: specials, symbol families c/v/g
/// for indices 1..max_index, SQL keywords, then words by frequency.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSep = 4;

  static const std::vector<std::string>& sql_keywords();

  /// Throws std::invalid_argument when both corpora are empty.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sources,
                          const std::vector<std::vector<std::string>>& targets, int min_count,
                          int max_symbol_index = 25);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int max_symbol_index() const { return max_symbol_index_; }
  int id(std::string_view key) const;
  bool contains(std::string_view key) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  /// Like token() but symbols print bare ("c1") and the separator as "|".
  std::string display(int id) const;
  std::optional<SymbolRef> symbol(int id) const;
  int symbol_id(SymbolRef ref) const;

  std::vector<int> encode(std::span<const std::string> keys) const;
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void index_tokens();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int max_symbol_index_ = 25;
};

std::vector<std::string> source_keys(std::span<const AnnotatedToken> tokens);

/// [type ; index] concatenation for a symbol token. Throws
/// std::invalid_argument when the parts do not add up to `dim`.
std::vector<double> symbol_embedding(std::span<const double> type_emb, std::span<const double> index_emb,
                                     int dim = 300);

} // namespace nlidb
