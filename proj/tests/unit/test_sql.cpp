#include <doctest.h>

#include "nlidb/sql.hpp"

using namespace nlidb;

namespace {

SymbolRef c(int i) { return {SymbolFamily::Column, i}; }
SymbolRef v(int i) { return {SymbolFamily::Value, i}; }
SymbolRef g(int i) { return {SymbolFamily::Header, i}; }

Table towns() {
  Table t;
  t.schema.table_id = "towns";
  t.schema.columns = {{"County", ColumnType::Text, 0},
                      {"English_Name", ColumnType::Text, 1},
                      {"Population", ColumnType::Real, 2},
                      {"Speakers", ColumnType::Text, 3}};
  t.rows = {{"Mayo", "Carrowteige", "356", "64%"},
            {"Galway", "Aran Islands", "1,225", "79%"},
            {"Mayo", "Belmullet", "1000", "n/a"},
            {"Kerry", "Dingle", "n/a", "50%"}};
  return t;
}

Annotation towns_annotation() {
  Annotation a;
  a.question = "how many people live in mayo which has the english name carrowteige ?";
  a.tokens = tokenize(a.question);
  a.symbols.columns[1] = {2, Span{0, 5}};
  a.symbols.columns[2] = {0, std::nullopt};
  a.symbols.columns[3] = {1, Span{9, 11}};
  a.symbols.values[2] = {"Mayo", 0, Span{5, 6}};
  a.symbols.values[3] = {"Carrowteige", 1, Span{11, 12}};
  return a;
}

} // namespace

TEST_CASE("codes and names") {
  CHECK(aggregate_from_wikisql(0) == Aggregate::None);
  CHECK(aggregate_from_wikisql(1) == Aggregate::Max);
  CHECK(aggregate_from_wikisql(3) == Aggregate::Count);
  CHECK(aggregate_from_wikisql(5) == Aggregate::Avg);
  for (int k = 0; k < 6; ++k) {
    CHECK(aggregate_to_wikisql(aggregate_from_wikisql(k)) == k);
  }
  for (int k = 0; k < 3; ++k) {
    CHECK(cond_op_to_wikisql(cond_op_from_wikisql(k)) == k);
  }
  CHECK(cond_op_from_wikisql(2) == CondOp::Lt);
  CHECK(aggregate_from_string("count") == Aggregate::Count);
  CHECK_FALSE(aggregate_from_string("median"));
  CHECK(cond_op_from_string(">") == CondOp::Gt);
}

TEST_CASE("sketch parsing") {
  auto ast = parse_annotated_sql("SELECT c1 WHERE c2 = v2 AND c3 = v3");
  CHECK(ast.agg == Aggregate::None);
  CHECK(ast.select == c(1));
  REQUIRE(ast.conditions.size() == 2);
  CHECK(ast.conditions[1] == AnnotatedCondition{c(3), CondOp::Eq, v(3)});
  CHECK(to_string(ast) == "SELECT c1 WHERE c2 = v2 AND c3 = v3");

  auto agg = parse_annotated_sql(std::vector<std::string>{"COUNT", "SELECT", "<g2>", "WHERE", "<g3>", ">", "<v1>"});
  CHECK(agg.agg == Aggregate::Count);
  CHECK(agg.select == g(2));
  CHECK(agg.conditions[0].op == CondOp::Gt);
  CHECK(sketch_keys(agg) == std::vector<std::string>{"COUNT", "SELECT", "<g2>", "WHERE", "<g3>", ">", "<v1>"});
  CHECK(parse_annotated_sql("max select c1") == parse_annotated_sql("MAX SELECT c1"));

  for (const char* bad : {"", "SELECT", "SELECT v1", "SELECT c1 WHERE", "SELECT c1 WHERE c2 = c3",
                          "SELECT c1 WHERE c2 = v1 AND", "SELECT c1 c2", "WHERE c1 = v1"}) {
    CHECK_THROWS_AS(parse_annotated_sql(bad), SqlError);
  }
}

TEST_CASE("resolution and serialization") {
  auto t = towns();
  auto a = towns_annotation();
  auto sql = resolve_symbols(parse_annotated_sql("SELECT c1 WHERE c2 = v2 AND c3 = v3"), a.symbols, t.schema);
  CHECK(sql.select == 2);
  CHECK(sql.conditions[0] == ConcreteCondition{0, CondOp::Eq, "Mayo"});
  CHECK(serialize(sql, t.schema) ==
        "SELECT Population FROM towns WHERE County = 'Mayo' AND English_Name = 'Carrowteige'");
  auto header = resolve_symbols(parse_annotated_sql("AVG SELECT g3"), a.symbols, t.schema);
  CHECK(header.select == 2);
  CHECK(serialize(header, t.schema) == "SELECT AVG(Population) FROM towns");
  CHECK_THROWS_AS(resolve_symbols(parse_annotated_sql("SELECT c9"), a.symbols, t.schema), SqlError);
  CHECK_THROWS_AS(resolve_symbols(parse_annotated_sql("SELECT c1 WHERE c1 = v1"), a.symbols, t.schema), SqlError);
  CHECK_THROWS_AS(resolve_symbols(parse_annotated_sql("SELECT g5"), a.symbols, t.schema), SqlError);

  ConcreteSql quoted{Aggregate::None, 0, {{1, CondOp::Eq, "O'Brien"}}};
  CHECK(serialize(quoted, t.schema) == "SELECT County FROM towns WHERE English_Name = 'O''Brien'");
}

TEST_CASE("canonical form ignores condition order, case and number format") {
  auto t = towns();
  ConcreteSql a{Aggregate::Count, 1, {{0, CondOp::Eq, "MAYO "}, {2, CondOp::Gt, "1000.0"}}};
  ConcreteSql b{Aggregate::Count, 1, {{2, CondOp::Gt, "1,000"}, {0, CondOp::Eq, "mayo"}}};
  CHECK(canonicalize(a, t.schema) == canonicalize(b, t.schema));
  CHECK(serialize(a, t.schema) != serialize(b, t.schema));
  ConcreteSql other_op{Aggregate::Count, 1, {{2, CondOp::Lt, "1000"}, {0, CondOp::Eq, "mayo"}}};
  CHECK_FALSE(canonicalize(a, t.schema) == canonicalize(other_op, t.schema));
  auto canon = canonicalize(a, t.schema);
  CHECK(canonicalize(canon) == canon);
  CHECK(canon.to_string() == "select count(english name) where county = 'mayo' and population > '1000'");
  CHECK(normalize_literal(" 1,225 ") == "1225");
  CHECK(normalize_literal("Aran  ISLANDS") == "aran islands");
}

TEST_CASE("execution") {
  auto t = towns();
  auto run = [&](ConcreteSql q) { return execute(q, t); };
  auto pop = run({Aggregate::None, 2, {{0, CondOp::Eq, "mayo"}, {1, CondOp::Eq, "carrowteige"}}});
  CHECK(pop.values == std::vector<Cell>{356.0});
  CHECK(run({Aggregate::None, 1, {{2, CondOp::Gt, "999"}}}).values ==
        std::vector<Cell>{std::string("Aran Islands"), std::string("Belmullet")});
  CHECK(run({Aggregate::Count, 0, {{0, CondOp::Eq, "Mayo"}}}).values == std::vector<Cell>{2.0});
  CHECK(run({Aggregate::Count, 0, {{0, CondOp::Eq, "Cork"}}}).values == std::vector<Cell>{0.0});
  CHECK(run({Aggregate::Max, 2, {{0, CondOp::Eq, "Cork"}}}).values.empty());
  CHECK(run({Aggregate::Sum, 2, {{0, CondOp::Eq, "mayo"}}}).values == std::vector<Cell>{1356.0});
  CHECK(run({Aggregate::Avg, 2, {{0, CondOp::Eq, "mayo"}}}).values == std::vector<Cell>{678.0});
  CHECK(run({Aggregate::Min, 2, {{2, CondOp::Lt, "2000"}}}).values == std::vector<Cell>{356.0});
  // Text aggregates: MIN/MAX are lexicographic, SUM/AVG are type errors.
  CHECK(run({Aggregate::Max, 0, {}}).values == std::vector<Cell>{std::string("Mayo")});
  CHECK(run({Aggregate::Sum, 0, {}}).type_error);
  CHECK(run({Aggregate::None, 0, {{0, CondOp::Gt, "a"}}}).type_error);
  CHECK(run({Aggregate::None, 0, {{2, CondOp::Gt, "many"}}}).type_error);
  // A missing number never satisfies a numeric comparison.
  CHECK(run({Aggregate::Count, 0, {{2, CondOp::Lt, "100000"}}}).values == std::vector<Cell>{3.0});
  CHECK(run({Aggregate::None, 2, {{0, CondOp::Eq, "Kerry"}}}).values == std::vector<Cell>{std::string("n/a")});
}

TEST_CASE("result comparison") {
  ResultSet a{{1.0, std::string("X")}, false};
  ResultSet b{{std::string(" x"), 1.0 + 1e-12}, false};
  CHECK(results_equal(a, b));
  CHECK_FALSE(results_equal(a, ResultSet{{1.0}, false}));
  CHECK_FALSE(results_equal(a, ResultSet{{1.1, std::string("x")}, false}));
  ResultSet err{{}, true};
  CHECK_FALSE(results_equal(err, err));
  CHECK(results_equal(ResultSet{}, ResultSet{}));
}

TEST_CASE("gold alignment over annotation symbols") {
  auto t = towns();
  auto a = towns_annotation();
  ConcreteSql gold{Aggregate::None, 2, {{0, CondOp::Eq, "Mayo"}, {1, CondOp::Eq, "Carrowteige"}}};
  auto aligned = align_gold_sql(gold, a, t.schema);
  REQUIRE(std::holds_alternative<AnnotatedSqlAst>(aligned));
  CHECK(to_string(std::get<AnnotatedSqlAst>(aligned)) == "SELECT c1 WHERE c2 = v2 AND c3 = v3");
  CHECK(resolve_symbols(std::get<AnnotatedSqlAst>(aligned), a.symbols, t.schema) == gold);

  ConcreteSql unmentioned{Aggregate::Count, 3, {{0, CondOp::Eq, "mayo"}}};
  auto h = align_gold_sql(unmentioned, a, t.schema);
  REQUIRE(std::holds_alternative<AnnotatedSqlAst>(h));
  CHECK(to_string(std::get<AnnotatedSqlAst>(h)) == "COUNT SELECT g4 WHERE c2 = v2");

  ConcreteSql missing{Aggregate::None, 2, {{0, CondOp::Eq, "Galway"}}};
  auto f = align_gold_sql(missing, a, t.schema);
  REQUIRE(std::holds_alternative<AlignmentFailure>(f));
  CHECK(std::get<AlignmentFailure>(f).reason.starts_with("value not annotated"));
}
