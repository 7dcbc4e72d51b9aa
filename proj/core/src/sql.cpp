#include "nlidb/sql.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nlidb/text.hpp"

namespace nlidb {

std::string to_string(Aggregate a) {
  switch (a) {
    case Aggregate::None:
      return "";
    case Aggregate::Count:
      return "COUNT";
    case Aggregate::Max:
      return "MAX";
    case Aggregate::Min:
      return "MIN";
    case Aggregate::Sum:
      return "SUM";
    case Aggregate::Avg:
      return "AVG";
  }
  return "";
}

std::string to_string(CondOp op) {
  switch (op) {
    case CondOp::Eq:
      return "=";
    case CondOp::Gt:
      return ">";
    case CondOp::Lt:
      return "<";
  }
  return "=";
}

std::optional<Aggregate> aggregate_from_string(std::string_view s) {
  auto up = std::string(s);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto a : {Aggregate::Count, Aggregate::Max, Aggregate::Min, Aggregate::Sum, Aggregate::Avg}) {
    if (to_string(a) == up) {
      return a;
    }
  }
  return std::nullopt;
}

std::optional<CondOp> cond_op_from_string(std::string_view s) {
  if (s == "=") {
    return CondOp::Eq;
  }
  if (s == ">") {
    return CondOp::Gt;
  }
  if (s == "<") {
    return CondOp::Lt;
  }
  return std::nullopt;
}

Aggregate aggregate_from_wikisql(int code) {
  static constexpr Aggregate kCodes[] = {Aggregate::None, Aggregate::Max, Aggregate::Min,
                                         Aggregate::Count, Aggregate::Sum, Aggregate::Avg};
  if (code < 0 || code >= 6) {
    throw SqlError("unknown WikiSQL aggregate code " + std::to_string(code));
  }
  return kCodes[code];
}

int aggregate_to_wikisql(Aggregate a) {
  switch (a) {
    case Aggregate::None:
      return 0;
    case Aggregate::Max:
      return 1;
    case Aggregate::Min:
      return 2;
    case Aggregate::Count:
      return 3;
    case Aggregate::Sum:
      return 4;
    case Aggregate::Avg:
      return 5;
  }
  return 0;
}

CondOp cond_op_from_wikisql(int code) {
  switch (code) {
    case 0:
      return CondOp::Eq;
    case 1:
      return CondOp::Gt;
    case 2:
      return CondOp::Lt;
    default:
      throw SqlError("unsupported WikiSQL condition operator " + std::to_string(code));
  }
}

int cond_op_to_wikisql(CondOp op) { return op == CondOp::Eq ? 0 : op == CondOp::Gt ? 1 : 2; }

AnnotatedSqlAst parse_annotated_sql(const std::vector<std::string>& tokens) {
  AnnotatedSqlAst ast;
  std::size_t k = 0;
  auto peek = [&]() -> std::string_view { return k < tokens.size() ? std::string_view(tokens[k]) : ""; };
  auto fail = [&](const std::string& what) -> SqlError {
    return SqlError("sketch parse error at token " + std::to_string(k) + ": " + what);
  };
  auto expect_keyword = [&](std::string_view kw) {
    if (casefold(peek()) != casefold(kw)) {
      throw fail("expected " + std::string(kw) + ", got '" + std::string(peek()) + "'");
    }
    ++k;
  };
  auto column_symbol = [&]() {
    auto ref = SymbolRef::from_display(peek());
    if (!ref || ref->family == SymbolFamily::Value) {
      throw fail("expected a column symbol, got '" + std::string(peek()) + "'");
    }
    ++k;
    return *ref;
  };

  if (auto agg = aggregate_from_string(peek())) {
    ast.agg = *agg;
    ++k;
  }
  expect_keyword("SELECT");
  ast.select = column_symbol();
  if (k == tokens.size()) {
    return ast;
  }
  expect_keyword("WHERE");
  while (true) {
    AnnotatedCondition cond;
    cond.column = column_symbol();
    auto op = cond_op_from_string(peek());
    if (!op) {
      throw fail("expected an operator, got '" + std::string(peek()) + "'");
    }
    cond.op = *op;
    ++k;
    auto value = SymbolRef::from_display(peek());
    if (!value || value->family != SymbolFamily::Value) {
      throw fail("expected a value symbol, got '" + std::string(peek()) + "'");
    }
    cond.value = *value;
    ++k;
    ast.conditions.push_back(cond);
    if (k == tokens.size()) {
      return ast;
    }
    expect_keyword("AND");
  }
}

AnnotatedSqlAst parse_annotated_sql(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) != 0) {
      ++i;
    }
    std::size_t start = i;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) == 0) {
      ++i;
    }
    if (i > start) {
      tokens.emplace_back(text.substr(start, i - start));
    }
  }
  return parse_annotated_sql(tokens);
}

namespace {

std::vector<std::string> sketch_impl(const AnnotatedSqlAst& ast, bool bracket) {
  auto sym = [&](SymbolRef r) { return bracket ? "<" + r.display() + ">" : r.display(); };
  std::vector<std::string> out;
  if (ast.agg != Aggregate::None) {
    out.push_back(to_string(ast.agg));
  }
  out.emplace_back("SELECT");
  out.push_back(sym(ast.select));
  for (std::size_t i = 0; i < ast.conditions.size(); ++i) {
    out.emplace_back(i == 0 ? "WHERE" : "AND");
    out.push_back(sym(ast.conditions[i].column));
    out.push_back(to_string(ast.conditions[i].op));
    out.push_back(sym(ast.conditions[i].value));
  }
  return out;
}

const ColumnMeta& column_at(const TableSchema& schema, int position) {
  if (position < 0 || position >= static_cast<int>(schema.columns.size())) {
    throw SqlError("column " + std::to_string(position) + " outside table " + schema.table_id);
  }
  return schema.columns[static_cast<std::size_t>(position)];
}

std::string quote(std::string_view v) {
  std::string out = "'";
  for (char c : v) {
    out += c;
    if (c == '\'') {
      out += '\'';
    }
  }
  out += '\'';
  return out;
}

} // namespace

std::vector<std::string> sketch_tokens(const AnnotatedSqlAst& ast) { return sketch_impl(ast, false); }
std::vector<std::string> sketch_keys(const AnnotatedSqlAst& ast) { return sketch_impl(ast, true); }
std::string to_string(const AnnotatedSqlAst& ast) { return join(sketch_tokens(ast)); }

std::string serialize(const ConcreteSql& sql, const TableSchema& schema) {
  std::string out = "SELECT ";
  const auto& sel = column_at(schema, sql.select).name;
  out += sql.agg == Aggregate::None ? sel : to_string(sql.agg) + "(" + sel + ")";
  out += " FROM " + schema.table_id;
  for (std::size_t i = 0; i < sql.conditions.size(); ++i) {
    const auto& c = sql.conditions[i];
    out += i == 0 ? " WHERE " : " AND ";
    out += column_at(schema, c.column).name + " " + to_string(c.op) + " " + quote(c.value);
  }
  return out;
}

ConcreteSql resolve_symbols(const AnnotatedSqlAst& ast, const SymbolTable& symbols,
                            const TableSchema& schema) {
  auto column_of = [&](SymbolRef ref) -> int {
    if (ref.family == SymbolFamily::Header) {
      if (ref.index < 1 || ref.index > static_cast<int>(schema.columns.size())) {
        throw SqlError("header symbol " + ref.display() + " outside table " + schema.table_id);
      }
      return ref.index - 1;
    }
    auto it = symbols.columns.find(ref.index);
    if (ref.family != SymbolFamily::Column || it == symbols.columns.end()) {
      throw SqlError("unbound column symbol " + ref.display());
    }
    return it->second.column;
  };
  ConcreteSql out;
  out.agg = ast.agg;
  out.select = column_of(ast.select);
  for (const auto& c : ast.conditions) {
    auto it = symbols.values.find(c.value.index);
    if (c.value.family != SymbolFamily::Value || it == symbols.values.end()) {
      throw SqlError("unbound value symbol " + c.value.display());
    }
    out.conditions.push_back(ConcreteCondition{column_of(c.column), c.op, it->second.surface});
  }
  return out;
}

std::string normalize_literal(std::string_view value) {
  if (auto v = parse_number(value)) {
    return format_number(*v);
  }
  return normalize_phrase(value);
}

std::string CanonicalSql::to_string() const {
  std::string out = "select " + (agg.empty() ? select : agg + "(" + select + ")");
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    const auto& c = conditions[i];
    out += (i == 0 ? " where " : " and ") + c.column + " " + c.op + " '" + c.value + "'";
  }
  return out;
}

CanonicalSql canonicalize(const ConcreteSql& sql, const TableSchema& schema) {
  CanonicalSql out;
  out.agg = casefold(to_string(sql.agg));
  out.select = normalize_phrase(column_at(schema, sql.select).name);
  for (const auto& c : sql.conditions) {
    out.conditions.push_back(CanonicalCondition{normalize_phrase(column_at(schema, c.column).name),
                                                to_string(c.op), normalize_literal(c.value)});
  }
  std::sort(out.conditions.begin(), out.conditions.end());
  return out;
}

CanonicalSql canonicalize(const CanonicalSql& sql) {
  CanonicalSql out;
  out.agg = casefold(sql.agg);
  out.select = normalize_phrase(sql.select);
  for (const auto& c : sql.conditions) {
    out.conditions.push_back(
        CanonicalCondition{normalize_phrase(c.column), c.op, normalize_literal(c.value)});
  }
  std::sort(out.conditions.begin(), out.conditions.end());
  return out;
}


ResultSet execute(const ConcreteSql& sql, const Table& table) {
  const auto& schema = table.schema;
  ResultSet out;
  const auto& sel = column_at(schema, sql.select);
  struct Filter {
    int column;
    CondOp op;
    std::string literal;
    std::optional<double> number;
    bool numeric;
  };
  std::vector<Filter> filters;
  for (const auto& c : sql.conditions) {
    const auto& col = column_at(schema, c.column);
    auto literal = normalize_literal(c.value);
    auto number = parse_number(literal);
    bool numeric = col.type == ColumnType::Real && number.has_value();
    if (c.op != CondOp::Eq && !numeric) {
      out.type_error = true;
      return out;
    }
    filters.push_back(Filter{c.column, c.op, literal, number, numeric});
  }

  std::vector<std::string> selected;
  for (const auto& row : table.rows) {
    bool keep = true;
    for (const auto& f : filters) {
      const auto& cell = row[static_cast<std::size_t>(f.column)];
      if (f.numeric) {
        auto v = parse_number(cell);
        if (!v) {
          keep = false;
        } else if (f.op == CondOp::Eq) {
          keep = *v == *f.number;
        } else if (f.op == CondOp::Gt) {
          keep = *v > *f.number;
        } else {
          keep = *v < *f.number;
        }
      } else {
        keep = normalize_literal(cell) == f.literal;
      }
      if (!keep) {
        break;
      }
    }
    if (keep) {
      selected.push_back(row[static_cast<std::size_t>(sql.select)]);
    }
  }

  auto as_cell = [&](const std::string& raw) -> Cell {
    if (sel.type == ColumnType::Real) {
      if (auto v = parse_number(raw)) {
        return *v;
      }
    }
    return raw;
  };

  switch (sql.agg) {
    case Aggregate::None:
      for (const auto& raw : selected) {
        out.values.push_back(as_cell(raw));
      }
      return out;
    case Aggregate::Count:
      out.values.emplace_back(static_cast<double>(selected.size()));
      return out;
    default:
      break;
  }
  if (selected.empty()) {
    return out;
  }
  std::vector<double> numbers;
  bool all_numeric = true;
  for (const auto& raw : selected) {
    auto v = parse_number(raw);
    if (!v) {
      all_numeric = false;
      break;
    }
    numbers.push_back(*v);
  }
  if (!all_numeric) {
    if (sql.agg == Aggregate::Max || sql.agg == Aggregate::Min) {
      auto cmp = [](const std::string& a, const std::string& b) { return casefold(a) < casefold(b); };
      auto it = sql.agg == Aggregate::Max ? std::max_element(selected.begin(), selected.end(), cmp)
                                          : std::min_element(selected.begin(), selected.end(), cmp);
      out.values.emplace_back(*it);
      return out;
    }
    out.type_error = true;
    return out;
  }
  double result = 0.0;
  switch (sql.agg) {
    case Aggregate::Max:
      result = *std::max_element(numbers.begin(), numbers.end());
      break;
    case Aggregate::Min:
      result = *std::min_element(numbers.begin(), numbers.end());
      break;
    case Aggregate::Sum:
    case Aggregate::Avg:
      for (double v : numbers) {
        result += v;
      }
      if (sql.agg == Aggregate::Avg) {
        result /= static_cast<double>(numbers.size());
      }
      break;
    default:
      break;
  }
  out.values.emplace_back(result);
  return out;
}

bool results_equal(const ResultSet& a, const ResultSet& b, double tolerance) {
  if (a.type_error || b.type_error || a.values.size() != b.values.size()) {
    return false;
  }
  auto split = [](const ResultSet& r) {
    std::vector<double> nums;
    std::vector<std::string> strs;
    for (const auto& c : r.values) {
      if (const auto* d = std::get_if<double>(&c)) {
        nums.push_back(*d);
      } else {
        strs.push_back(casefold(trim(std::get<std::string>(c))));
      }
    }
    std::sort(nums.begin(), nums.end());
    std::sort(strs.begin(), strs.end());
    return std::make_pair(nums, strs);
  };
  auto [na, sa] = split(a);
  auto [nb, sb] = split(b);
  if (na.size() != nb.size() || sa != sb) {
    return false;
  }
  for (std::size_t i = 0; i < na.size(); ++i) {
    if (std::fabs(na[i] - nb[i]) > tolerance) {
      return false;
    }
  }
  return true;
}

std::variant<AnnotatedSqlAst, AlignmentFailure> align_gold_sql(const ConcreteSql& gold,
                                                               const Annotation& annotation,
                                                               const TableSchema& schema) {
  const auto& symbols = annotation.symbols;
  if (gold.select < 0 || gold.select >= static_cast<int>(schema.columns.size())) {
    return AlignmentFailure{"column outside table: " + std::to_string(gold.select)};
  }
  std::set<int> used_columns;
  auto column_symbol = [&](int column) {
    std::optional<int> fallback;
    for (const auto& [index, binding] : symbols.columns) {
      if (binding.column != column) {
        continue;
      }
      if (!used_columns.contains(index)) {
        return SymbolRef{SymbolFamily::Column, index};
      }
      if (!fallback) {
        fallback = index;
      }
    }
    if (fallback) {
      return SymbolRef{SymbolFamily::Column, *fallback};
    }
    return SymbolRef{SymbolFamily::Header, column + 1};
  };

  AnnotatedSqlAst ast;
  ast.agg = gold.agg;
  std::set<int> used_values;
  std::vector<AnnotatedCondition> conditions;
  for (const auto& cond : gold.conditions) {
    auto wanted = normalize_literal(cond.value);
    std::optional<int> pick;
    for (int pass = 0; pass < 3 && !pick; ++pass) {
      for (const auto& [index, binding] : symbols.values) {
        if (normalize_literal(binding.surface) != wanted) {
          continue;
        }
        bool same_column = binding.column == cond.column;
        bool fresh = !used_values.contains(index);
        if ((pass == 0 && same_column && fresh) || (pass == 1 && fresh) || pass == 2) {
          pick = index;
          break;
        }
      }
    }
    if (!pick) {
      return AlignmentFailure{"value not annotated: '" + cond.value + "'"};
    }
    used_values.insert(*pick);
    SymbolRef col;
    if (symbols.values.at(*pick).column == cond.column && symbols.columns.contains(*pick)) {
      col = SymbolRef{SymbolFamily::Column, *pick};
    } else {
      col = column_symbol(cond.column);
    }
    if (col.family == SymbolFamily::Column) {
      used_columns.insert(col.index);
    }
    conditions.push_back(AnnotatedCondition{col, cond.op, SymbolRef{SymbolFamily::Value, *pick}});
  }
  ast.select = column_symbol(gold.select);
  ast.conditions = std::move(conditions);
  return ast;
}

} // namespace nlidb
