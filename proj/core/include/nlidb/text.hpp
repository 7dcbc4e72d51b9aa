#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nlidb {

/// A token of a question or cell string. `text` is case-folded; `begin`/`end`
/// are byte offsets into the original string so surfaces can be recovered.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Token&) const = default;
};

std::string casefold(std::string_view s);
std::string trim(std::string_view s);

/// Splits on whitespace and underscores; every other ASCII punctuation mark is
/// its own token. Digit runs keep interior '.' and ',' so "1,225.5" stays whole.
std::vector<Token> tokenize(std::string_view s);
std::vector<std::string> tokenize_words(std::string_view s);

/// Tokenized, case-folded form joined by single spaces.
std::string normalize_phrase(std::string_view s);
std::string join(const std::vector<std::string>& words, std::string_view sep = " ");

/// Parses a plain decimal number after stripping thousands separators.
std::optional<double> parse_number(std::string_view s);
bool is_numeric(std::string_view s);

/// Shortest round-trip decimal form; integral values print without a fraction.
std::string format_number(double v);

bool is_stop_word(std::string_view word);
bool is_punctuation(std::string_view word);
/// Stop words and punctuation carry no column or value evidence.
inline bool is_function_token(std::string_view w) { return is_stop_word(w) || is_punctuation(w); }

} // namespace nlidb
