#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nlidb/meta_knowledge.hpp"

using namespace nlidb;
namespace fs = std::filesystem;

namespace {

const fs::path kData = NLIDB_DATA_DIR;

fs::path write_temp(const std::string& name, const std::string& content) {
  auto dir = fs::temp_directory_path() / "nlidb_unit_meta";
  fs::create_directories(dir);
  auto path = dir / name;
  std::ofstream(path) << content;
  return path;
}

const Table& find_table(const std::vector<Table>& tables, const std::string& id) {
  for (const auto& t : tables) {
    if (t.schema.table_id == id) {
      return t;
    }
  }
  FAIL("missing table " << id);
  return tables.front();
}

} // namespace

TEST_CASE("fixture tables load with types and formatted numbers") {
  auto tables = load_tables(kData / "fixtures/tables.jsonl");
  REQUIRE(tables.size() == 3);
  const auto& b = find_table(tables, "towns");
  CHECK(b.schema.columns.size() == 5);
  CHECK(b.schema.columns[3].type == ColumnType::Real);
  CHECK(b.schema.columns[0].type == ColumnType::Text);
  CHECK(b.rows[0][3] == "356");
  CHECK(b.schema.columns[1].tokens() == std::vector<std::string>{"english", "name"});
  REQUIRE(b.schema.find("english name") != nullptr);
  CHECK(b.schema.find("ENGLISH_NAME")->position == 1);
  CHECK(b.schema.find("missing") == nullptr);
}

TEST_CASE("malformed tables are rejected") {
  CHECK_THROWS_AS(parse_table_json(R"({"id":"x","header":["A","a"],"types":["text","text"],"rows":[]})"),
                  LoadError);
  CHECK_THROWS_AS(parse_table_json(R"({"id":"x","header":["A B","a_b"],"types":["text","text"],"rows":[]})"),
                  LoadError);
  CHECK_THROWS_AS(parse_table_json(R"({"id":"x","header":["A"],"types":["text","real"],"rows":[]})"), LoadError);
  CHECK_THROWS_AS(parse_table_json(R"({"id":"x","header":["A","B"],"types":["text","text"],"rows":[["1"]]})"),
                  LoadError);
  auto bad = write_temp("bad_tables.jsonl", "{\"id\": \"x\", \"header\": [\n");
  CHECK_THROWS_AS(load_tables(bad), LoadError);
  CHECK_THROWS_AS(load_tables(kData / "no_such_file.jsonl"), LoadError);
}

TEST_CASE("value statistics") {
  auto tables = load_tables(kData / "fixtures/tables.jsonl");
  auto stats = build_value_stats(find_table(tables, "towns"));
  REQUIRE(stats.columns.size() == 5);
  CHECK(stats.columns[1].distinct.contains("carrowteige"));
  CHECK(stats.columns[2].distinct.contains("ceathru thaidhg"));
  REQUIRE(stats.columns[3].range);
  CHECK(stats.columns[3].range->first == 356.0);
  CHECK(stats.columns[3].range->second == 1225.0);
  CHECK_FALSE(stats.columns[0].range);
  CHECK(stats.columns[2].token_counts.at("oileain") == 1);
}

TEST_CASE("phrase templates") {
  auto t = parse_phrase_template("how many people live in ⟨slot⟩");
  CHECK(t.has_slot);
  CHECK(t.prefix == std::vector<std::string>{"how", "many", "people", "live", "in"});
  CHECK(t.suffix.empty());
  auto ascii = parse_phrase_template("population of <slot>");
  CHECK(ascii.has_slot);
  auto plain = parse_phrase_template("Directed By");
  CHECK_FALSE(plain.has_slot);
  CHECK(plain.prefix == std::vector<std::string>{"directed", "by"});
  CHECK_THROWS_AS(parse_phrase_template("<slot> and <slot>"), LoadError);
  CHECK_THROWS_AS(parse_phrase_template("<slot>"), LoadError);
}

TEST_CASE("lexicon file and warnings") {
  auto lex = load_phrase_lexicon(kData / "fixtures/lexicon.tsv");
  CHECK(lex.size() == 3);
  ColumnMeta pop{"Population", ColumnType::Real, 3};
  REQUIRE(lex.find(pop) != nullptr);
  CHECK(lex.find(pop)->size() == 3);
  ColumnMeta other{"County", ColumnType::Text, 0};
  CHECK(lex.find(other) == nullptr);

  auto tables = load_tables(kData / "fixtures/tables.jsonl");
  std::vector<TableSchema> only_b = {find_table(tables, "towns").schema};
  auto warnings = lexicon_warnings(lex, only_b);
  CHECK(warnings.size() == 2);

  auto bad = write_temp("bad_lexicon.tsv", "Director\n");
  CHECK_THROWS_AS(load_phrase_lexicon(bad), LoadError);
}

TEST_CASE("embeddings load, average and never invent vectors") {
  auto emb = load_embeddings(kData / "fixtures/toy_embeddings.txt");
  CHECK(emb.dimension() == 16);
  CHECK(emb.size() == 16);
  CHECK(emb.lookup("actress"));
  CHECK_FALSE(emb.lookup("zebra"));
  std::vector<std::string> none = {"zebra", "quokka"};
  CHECK_FALSE(emb.mean(none));

  EmbeddingStore small(2);
  small.insert("a", {1.0f, 0.0f});
  small.insert("b", {0.0f, 3.0f});
  std::vector<std::string> ab = {"a", "b", "zebra"};
  auto m = small.mean(ab);
  REQUIRE(m);
  CHECK((*m)[0] == doctest::Approx(0.5));
  CHECK((*m)[1] == doctest::Approx(1.5));
  CHECK_THROWS_AS(small.insert("c", {1.0f}), std::invalid_argument);

  auto ragged = write_temp("ragged.txt", "a 1 2\nb 1\n");
  CHECK_THROWS_AS(load_embeddings(ragged), LoadError);
}

TEST_CASE("cosine") {
  std::vector<double> a = {1, 0}, b = {0, 1}, c = {2, 0}, z = {0, 0};
  CHECK(cosine(a, b) == doctest::Approx(0.0));
  CHECK(cosine(a, c) == doctest::Approx(1.0));
  CHECK(cosine(a, z) == 0.0);
}

TEST_CASE("value affinity") {
  auto tables = load_tables(kData / "fixtures/tables.jsonl");
  const auto& b = find_table(tables, "towns");
  auto stats = build_value_stats(b);
  EmbeddingStore none;
  std::vector<std::string> mayo = {"Mayo"};
  std::vector<std::string> num = {"500"};
  std::vector<std::string> big = {"5000"};
  std::vector<std::string> galway_city = {"galway", "city"};
  CHECK(value_affinity(mayo, b.schema.columns[0], stats, none) == 1.0);
  CHECK(value_affinity(num, b.schema.columns[3], stats, none) == 1.0);
  CHECK(value_affinity(big, b.schema.columns[3], stats, none) == 0.0);
  CHECK(value_affinity(mayo, b.schema.columns[3], stats, none) == 0.0);
  CHECK(value_affinity(galway_city, b.schema.columns[0], stats, none) == 0.0);

  // With vectors the score is the best (1 + cos) / 2 against any distinct cell.
  EmbeddingStore emb(2);
  emb.insert("galway", {1.0f, 0.0f});
  emb.insert("city", {0.0f, 1.0f});
  emb.insert("mayo", {0.0f, 1.0f});
  double expected = 0.5 * (1.0 + 1.0 / std::sqrt(2.0));
  CHECK(value_affinity(galway_city, b.schema.columns[0], stats, emb) == doctest::Approx(expected));
}
