#include "nlidb/meta_knowledge.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nlidb/text.hpp"

namespace nlidb {

using nlohmann::json;

std::vector<std::string> ColumnMeta::tokens() const { return tokenize_words(name); }

const ColumnMeta* TableSchema::find(std::string_view name) const {
  auto key = normalize_phrase(name);
  for (const auto& c : columns) {
    if (normalize_phrase(c.name) == key) {
      return &c;
    }
  }
  return nullptr;
}

std::string PhraseTemplate::to_string() const {
  std::vector<std::string> parts = prefix;
  if (has_slot) {
    parts.emplace_back("<slot>");
  }
  parts.insert(parts.end(), suffix.begin(), suffix.end());
  return join(parts);
}

const std::set<PhraseTemplate>* PhraseLexicon::find(const ColumnMeta& column) const {
  auto it = entries.find(normalize_phrase(column.name));
  return it == entries.end() ? nullptr : &it->second;
}

void EmbeddingStore::insert(std::string word, std::vector<float> vec) {
  if (static_cast<int>(vec.size()) != dimension_) {
    throw std::invalid_argument("embedding for '" + word + "' has dimension " +
                                std::to_string(vec.size()) + ", store expects " +
                                std::to_string(dimension_));
  }
  vectors_.insert_or_assign(std::move(word), std::move(vec));
}

std::optional<std::span<const float>> EmbeddingStore::lookup(std::string_view word) const {
  auto it = vectors_.find(std::string(word));
  if (it == vectors_.end()) {
    return std::nullopt;
  }
  return std::span<const float>(it->second);
}

std::optional<std::vector<double>> EmbeddingStore::mean(std::span<const std::string> words) const {
  std::vector<double> acc(static_cast<std::size_t>(dimension_), 0.0);
  int found = 0;
  for (const auto& w : words) {
    auto v = lookup(w);
    if (!v) {
      continue;
    }
    for (std::size_t k = 0; k < acc.size(); ++k) {
      acc[k] += (*v)[k];
    }
    ++found;
  }
  if (found == 0) {
    return std::nullopt;
  }
  for (auto& x : acc) {
    x /= found;
  }
  return acc;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t k = 0; k < a.size() && k < b.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) {
    return 0.0;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

std::string cell_to_string(const json& cell) {
  if (cell.is_string()) {
    return cell.get<std::string>();
  }
  if (cell.is_number()) {
    return format_number(cell.get<double>());
  }
  if (cell.is_null()) {
    return {};
  }
  return cell.dump();
}

} // namespace

Table parse_table_json(std::string_view json_line) {
  json obj = json::parse(json_line);
  Table table;
  table.schema.table_id = obj.at("id").get<std::string>();
  const auto& header = obj.at("header");
  const auto& types = obj.at("types");
  if (!header.is_array() || header.empty()) {
    throw LoadError("table " + table.schema.table_id + ": header must be a non-empty list");
  }
  if (types.size() != header.size()) {
    throw LoadError("table " + table.schema.table_id + ": types/header length mismatch");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < header.size(); ++i) {
    ColumnMeta col;
    col.name = header[i].get<std::string>();
    auto type = casefold(types[i].get<std::string>());
    col.type = type == "real" ? ColumnType::Real : ColumnType::Text;
    col.position = static_cast<int>(i);
    auto key = normalize_phrase(col.name);
    if (key.empty()) {
      throw LoadError("table " + table.schema.table_id + ": column " + std::to_string(i) +
                      " has an empty name");
    }
    if (!seen.insert(key).second) {
      throw LoadError("table " + table.schema.table_id + ": duplicate header name '" + col.name +
                      "'");
    }
    table.schema.columns.push_back(std::move(col));
  }
  if (obj.contains("rows")) {
    for (const auto& row : obj.at("rows")) {
      if (row.size() != header.size()) {
        throw LoadError("table " + table.schema.table_id + ": row arity " +
                        std::to_string(row.size()) + " != " + std::to_string(header.size()));
      }
      std::vector<std::string> cells;
      cells.reserve(row.size());
      for (const auto& cell : row) {
        cells.push_back(cell_to_string(cell));
      }
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

std::vector<Table> load_tables(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoadError("cannot open tables file " + path.string());
  }
  std::vector<Table> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    try {
      out.push_back(parse_table_json(line));
    } catch (const LoadError&) {
      throw;
    } catch (const std::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": malformed table: " +
                      e.what());
    }
  }
  return out;
}

ValueStats build_value_stats(const Table& table) {
  ValueStats stats;
  stats.columns.resize(table.schema.columns.size());
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size() && c < stats.columns.size(); ++c) {
      auto& col = stats.columns[c];
      auto words = tokenize_words(row[c]);
      if (words.empty()) {
        continue;
      }
      col.distinct.insert(join(words));
      for (auto& w : words) {
        ++col.token_counts[w];
      }
      if (table.schema.columns[c].type == ColumnType::Real) {
        if (auto v = parse_number(row[c])) {
          if (!col.range) {
            col.range = std::make_pair(*v, *v);
          } else {
            col.range->first = std::min(col.range->first, *v);
            col.range->second = std::max(col.range->second, *v);
          }
        }
      }
    }
  }
  return stats;
}

PhraseTemplate parse_phrase_template(std::string_view phrase) {
  PhraseTemplate t;
  std::string text(phrase);
  std::size_t slot_begin = std::string::npos;
  std::size_t slot_end = std::string::npos;
  // "⟨" is E2 9F A8 and "⟩" is E2 9F A9 in UTF-8.
  if (auto open = text.find("\xE2\x9F\xA8"); open != std::string::npos) {
    auto close = text.find("\xE2\x9F\xA9", open);
    if (close != std::string::npos) {
      slot_begin = open;
      slot_end = close + 3;
    }
  } else if (auto lt = text.find('<'); lt != std::string::npos) {
    auto gt = text.find('>', lt);
    if (gt != std::string::npos) {
      slot_begin = lt;
      slot_end = gt + 1;
    }
  }
  if (slot_begin == std::string::npos) {
    t.prefix = tokenize_words(text);
  } else {
    t.has_slot = true;
    t.prefix = tokenize_words(text.substr(0, slot_begin));
    auto rest = text.substr(slot_end);
    if (rest.find("\xE2\x9F\xA8") != std::string::npos ||
        (rest.find('<') != std::string::npos && rest.find('>') != std::string::npos)) {
      throw LoadError("phrase '" + text + "' has more than one slot");
    }
    t.suffix = tokenize_words(rest);
  }
  if (t.prefix.empty() && t.suffix.empty()) {
    throw LoadError("phrase '" + text + "' has no literal words");
  }
  return t;
}

PhraseLexicon load_phrase_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoadError("cannot open lexicon file " + path.string());
  }
  PhraseLexicon lex;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') {
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) +
                      ": expected column<TAB>phrases");
    }
    auto key = normalize_phrase(line.substr(0, tab));
    if (key.empty()) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": empty column name");
    }
    auto& templates = lex.entries[key];
    std::stringstream phrases(line.substr(tab + 1));
    std::string phrase;
    while (std::getline(phrases, phrase, '|')) {
      if (trim(phrase).empty()) {
        continue;
      }
      try {
        templates.insert(parse_phrase_template(phrase));
      } catch (const LoadError& e) {
        throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  return lex;
}

std::vector<std::string> lexicon_warnings(const PhraseLexicon& lexicon,
                                          std::span<const TableSchema> schemas) {
  std::set<std::string> known;
  for (const auto& s : schemas) {
    for (const auto& c : s.columns) {
      known.insert(normalize_phrase(c.name));
    }
  }
  std::vector<std::string> warnings;
  for (const auto& [key, _] : lexicon.entries) {
    if (!known.contains(key)) {
      warnings.push_back("lexicon entry '" + key + "' matches no known column");
    }
  }
  return warnings;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoadError("cannot open embeddings file " + path.string());
  }
  std::optional<EmbeddingStore> store;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) {
      continue;
    }
    std::vector<float> vec;
    std::string field;
    while (ss >> field) {
      try {
        vec.push_back(std::stof(field));
      } catch (const std::exception&) {
        throw LoadError(path.string() + ":" + std::to_string(line_no) + ": bad float '" + field +
                        "'");
      }
    }
    if (!store) {
      if (vec.empty()) {
        throw LoadError(path.string() + ":" + std::to_string(line_no) + ": no vector components");
      }
      store.emplace(static_cast<int>(vec.size()));
    }
    if (static_cast<int>(vec.size()) != store->dimension()) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": dimension " +
                      std::to_string(vec.size()) + " != " + std::to_string(store->dimension()));
    }
    store->insert(std::move(word), std::move(vec));
  }
  return store ? std::move(*store) : EmbeddingStore{};
}

double value_affinity(std::span<const std::string> term, const ColumnMeta& column,
                      const ValueStats& stats, const EmbeddingStore& emb) {
  if (term.empty() || column.position < 0 ||
      static_cast<std::size_t>(column.position) >= stats.columns.size()) {
    return 0.0;
  }
  std::vector<std::string> words;
  words.reserve(term.size());
  for (const auto& t : term) {
    words.push_back(casefold(t));
  }
  const auto& col = stats.columns[static_cast<std::size_t>(column.position)];
  if (col.distinct.contains(join(words))) {
    return 1.0;
  }
  if (column.type == ColumnType::Real) {
    if (words.size() == 1) {
      if (auto v = parse_number(words[0]); v && col.range) {
        return (*v >= col.range->first && *v <= col.range->second) ? 1.0 : 0.0;
      }
    }
    return 0.0;
  }
  if (emb.empty()) {
    return 0.0;
  }
  auto term_vec = emb.mean(words);
  if (!term_vec) {
    return 0.0;
  }
  double best = -1.0;
  bool any = false;
  for (const auto& cell : col.distinct) {
    auto cell_words = tokenize_words(cell);
    auto cell_vec = emb.mean(cell_words);
    if (!cell_vec) {
      continue;
    }
    best = std::max(best, cosine(*term_vec, *cell_vec));
    any = true;
  }
  if (!any) {
    return 0.0;
  }
  // Same scale as the word-closeness metric: 1 - 0.5 * (1 - cos).
  return std::clamp(0.5 * (1.0 + best), 0.0, 1.0);
}

} // namespace nlidb
