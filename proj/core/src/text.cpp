#include "nlidb/text.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace nlidb {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

bool is_separator(unsigned char c) { return std::isspace(c) != 0 || c == '_'; }

constexpr std::array kStopWords = {
    "a",    "an",   "and",  "are",   "as",    "at",    "be",    "been", "by",    "did",
    "do",   "does", "for",  "from",  "had",   "has",   "have",  "her",  "his",   "how",
    "in",   "is",   "it",   "its",   "of",    "on",    "or",    "than", "that",  "the",
    "their", "there", "this", "to",  "was",   "were",  "what",  "when", "where", "which",
    "who",  "whom", "whose", "with",
};

} // namespace

std::string casefold(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  auto at = [&](std::size_t k) -> unsigned char { return k < n ? static_cast<unsigned char>(s[k]) : 0; };
  while (i < n) {
    unsigned char c = at(i);
    if (is_separator(c)) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (is_word_byte(c)) {
      while (i < n) {
        unsigned char d = at(i);
        if (is_word_byte(d)) {
          ++i;
        } else if ((d == '.' || d == ',') && std::isdigit(at(i + 1)) && i > start &&
                   std::isdigit(at(i - 1))) {
          ++i;
        } else if (d == '\'' && std::isalpha(at(i + 1)) && i > start && std::isalpha(at(i - 1))) {
          ++i;
        } else {
          break;
        }
      }
    } else if (c == '.' && std::isdigit(at(i + 1))) {
      // ".5"
      ++i;
      while (i < n && (std::isdigit(at(i)) != 0)) {
        ++i;
      }
    } else {
      ++i;
    }
    out.push_back(Token{casefold(s.substr(start, i - start)), start, i});
  }
  return out;
}

std::vector<std::string> tokenize_words(std::string_view s) {
  std::vector<std::string> out;
  for (auto& t : tokenize(s)) {
    out.push_back(std::move(t.text));
  }
  return out;
}

std::string join(const std::vector<std::string>& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i != 0) {
      out += sep;
    }
    out += words[i];
  }
  return out;
}

std::string normalize_phrase(std::string_view s) { return join(tokenize_words(s)); }

std::optional<double> parse_number(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (char c : trim(s)) {
    if (c != ',') {
      cleaned.push_back(c);
    }
  }
  if (cleaned.empty()) {
    return std::nullopt;
  }
  // from_chars would accept "inf"/"nan"; require a digit up front.
  std::size_t k = (cleaned[0] == '-' || cleaned[0] == '+') ? 1 : 0;
  if (k < cleaned.size() && cleaned[k] == '.') {
    ++k;
  }
  if (k >= cleaned.size() || std::isdigit(static_cast<unsigned char>(cleaned[k])) == 0) {
    return std::nullopt;
  }
  const char* first = cleaned.data() + (cleaned[0] == '+' ? 1 : 0);
  const char* last = cleaned.data() + cleaned.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    return std::nullopt;
  }
  return value;
}

bool is_numeric(std::string_view s) { return parse_number(s).has_value(); }

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

bool is_stop_word(std::string_view word) {
  return std::find(kStopWords.begin(), kStopWords.end(), word) != kStopWords.end();
}

bool is_punctuation(std::string_view word) {
  return !word.empty() && std::all_of(word.begin(), word.end(), [](unsigned char c) {
    return std::ispunct(c) != 0;
  });
}

} // namespace nlidb
