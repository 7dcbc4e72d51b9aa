#include "nlidb/encoding.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace nlidb {

AnnotatedToken AnnotatedToken::symbol(SymbolRef ref) {
  Kind kind = ref.family == SymbolFamily::Column  ? Kind::ColSym
              : ref.family == SymbolFamily::Value ? Kind::ValSym
                                                  : Kind::HeaderSym;
  return {kind, ref.index, ref.display()};
}

std::optional<SymbolRef> AnnotatedToken::symbol_ref() const {
  switch (kind) {
    case Kind::ColSym:
      return SymbolRef{SymbolFamily::Column, index};
    case Kind::ValSym:
      return SymbolRef{SymbolFamily::Value, index};
    case Kind::HeaderSym:
      return SymbolRef{SymbolFamily::Header, index};
    default:
      return std::nullopt;
  }
}

std::string AnnotatedToken::key() const {
  if (is_symbol()) {
    return "<" + symbol_ref()->display() + ">";
  }
  if (kind == Kind::Separator) {
    return "<sep>";
  }
  return surface;
}

std::vector<AnnotatedToken> encode_question(const Annotation& a, const TableSchema& schema,
                                            EncodingMode mode, bool headers) {
  std::vector<AnnotatedToken> out;
  std::map<int, const AcceptedMention*> starts;
  for (const auto& m : a.mentions) {
    starts[m.span.start] = &m;
  }
  const int n = static_cast<int>(a.tokens.size());
  for (int i = 0; i < n;) {
    auto it = starts.find(i);
    if (it == starts.end()) {
      out.push_back(AnnotatedToken::word(a.tokens[static_cast<std::size_t>(i)].text));
      ++i;
      continue;
    }
    const auto& m = *it->second;
    out.push_back(AnnotatedToken::symbol(m.symbol()));
    if (mode == EncodingMode::Stack) {
      for (int k = m.span.start; k < m.span.end; ++k) {
        out.push_back(AnnotatedToken::word(a.tokens[static_cast<std::size_t>(k)].text));
      }
    }
    i = m.span.end;
  }
  if (headers) {
    out.push_back(AnnotatedToken::separator());
    for (const auto& col : schema.columns) {
      out.push_back(AnnotatedToken::symbol(SymbolRef{SymbolFamily::Header, col.position + 1}));
      if (mode == EncodingMode::Stack) {
        for (auto& w : col.tokens()) {
          out.push_back(AnnotatedToken::word(std::move(w)));
        }
      }
    }
  }
  return out;
}

std::vector<std::string> keys_of(std::span<const AnnotatedToken> tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    out.push_back(t.key());
  }
  return out;
}

std::vector<std::string> source_keys(std::span<const AnnotatedToken> tokens) { return keys_of(tokens); }

std::string render(std::span<const AnnotatedToken> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) {
      out += ' ';
    }
    out += t.surface;
  }
  return out;
}

const std::vector<std::string>& Vocabulary::sql_keywords() {
  static const std::vector<std::string> kKeywords = {"SELECT", "WHERE", "AND", "=",   ">",  "<",
                                                     "COUNT",  "MAX",   "MIN", "SUM", "AVG"};
  return kKeywords;
}

void Vocabulary::index_tokens() {
  ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sources,
                             const std::vector<std::vector<std::string>>& targets, int min_count,
                             int max_symbol_index) {
  if (sources.empty() && targets.empty()) {
    throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  }
  Vocabulary v;
  v.max_symbol_index_ = max_symbol_index;
  v.tokens_ = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"};
  for (char family : {'c', 'v', 'g'}) {
    for (int i = 1; i <= max_symbol_index; ++i) {
      v.tokens_.push_back("<" + std::string(1, family) + std::to_string(i) + ">");
    }
  }
  for (const auto& kw : sql_keywords()) {
    v.tokens_.push_back(kw);
  }
  std::set<std::string> reserved(v.tokens_.begin(), v.tokens_.end());
  std::map<std::string, int> counts;
  for (const auto* corpus : {&sources, &targets}) {
    for (const auto& seq : *corpus) {
      for (const auto& key : seq) {
        if (!reserved.contains(key)) {
          ++counts[key];
        }
      }
    }
  }
  std::vector<std::pair<std::string, int>> words;
  for (auto& [w, c] : counts) {
    if (c >= min_count) {
      words.emplace_back(w, c);
    }
  }
  std::stable_sort(words.begin(), words.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [w, _] : words) {
    v.tokens_.push_back(w);
  }
  v.index_tokens();
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open vocabulary " + path.string());
  }
  Vocabulary v;
  std::string line;
  int max_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.size() >= 3 && line.front() == '<' && line.back() == '>') {
      if (auto ref = SymbolRef::from_display(line)) {
        max_index = std::max(max_index, ref->index);
      }
    }
    v.tokens_.push_back(line);
  }
  if (v.tokens_.size() < 5 || v.tokens_[0] != "<pad>" || v.tokens_[3] != "<eos>") {
    throw std::runtime_error("vocabulary " + path.string() + " lacks the special tokens");
  }
  v.max_symbol_index_ = max_index;
  v.index_tokens();
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write vocabulary " + path.string());
  }
  for (const auto& t : tokens_) {
    out << t << '\n';
  }
}

int Vocabulary::id(std::string_view key) const {
  auto it = ids_.find(std::string(key));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view key) const { return ids_.contains(std::string(key)); }

std::optional<SymbolRef> Vocabulary::symbol(int id) const {
  if (id < 0 || id >= size()) {
    return std::nullopt;
  }
  const auto& t = tokens_[static_cast<std::size_t>(id)];
  if (t.size() < 3 || t.front() != '<' || t.back() != '>') {
    return std::nullopt;
  }
  return SymbolRef::from_display(t);
}

int Vocabulary::symbol_id(SymbolRef ref) const { return id("<" + ref.display() + ">"); }

std::string Vocabulary::display(int id) const {
  if (auto ref = symbol(id)) {
    return ref->display();
  }
  if (id == kSep) {
    return "|";
  }
  return token(id);
}

std::vector<int> Vocabulary::encode(std::span<const std::string> keys) const {
  std::vector<int> out;
  out.reserve(keys.size());
  for (const auto& k : keys) {
    out.push_back(id(k));
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  // FNV-1a over newline-terminated entries.
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h = (h ^ c) * 1099511628211ULL;
    }
    h = (h ^ static_cast<unsigned char>('\n')) * 1099511628211ULL;
  }
  return h;
}

std::vector<double> symbol_embedding(std::span<const double> type_emb, std::span<const double> index_emb,
                                     int dim) {
  if (static_cast<int>(type_emb.size() + index_emb.size()) != dim) {
    throw std::invalid_argument("symbol embedding parts " + std::to_string(type_emb.size()) + "+" +
                                std::to_string(index_emb.size()) + " != " + std::to_string(dim));
  }
  std::vector<double> out(type_emb.begin(), type_emb.end());
  out.insert(out.end(), index_emb.begin(), index_emb.end());
  return out;
}

} // namespace nlidb
