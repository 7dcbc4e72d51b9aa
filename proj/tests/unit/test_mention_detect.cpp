#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <random>

#include "nlidb/mention_detect.hpp"

using namespace nlidb;

namespace {

const std::filesystem::path kData = NLIDB_DATA_DIR;

// Plain recursive edit distance with memoization.
int levenshtein(const std::string& a, const std::string& b) {
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  std::function<int(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> int {
    if (i == 0) {
      return static_cast<int>(j);
    }
    if (j == 0) {
      return static_cast<int>(i);
    }
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) {
      return it->second;
    }
    int best = std::min({d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1)});
    memo[key] = best;
    return best;
  };
  return d(a.size(), b.size());
}

std::string random_word(std::mt19937& rng) {
  int len = std::uniform_int_distribution<int>(0, 7)(rng);
  std::string w;
  for (int i = 0; i < len; ++i) {
    w.push_back(static_cast<char>('a' + std::uniform_int_distribution<int>(0, 3)(rng)));
  }
  return w;
}

// Every span, filtered by the two maximality rules stated directly.
std::vector<Span> brute_maximal(const std::vector<std::string>& q, const std::vector<std::string>& col,
                                const EmbeddingStore& emb, const Thresholds& thr) {
  const int n = static_cast<int>(q.size());
  std::vector<Span> out;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b <= n; ++b) {
      Span s{a, b};
      int cov = coverage_count(s, q, col, emb, thr);
      if (cov == 0) {
        continue;
      }
      bool ok = true;
      for (int x = 0; x < n && ok; ++x) {
        for (int y = x + 1; y <= n && ok; ++y) {
          Span o{x, y};
          if (o == s) {
            continue;
          }
          int oc = coverage_count(o, q, col, emb, thr);
          if (o.contains(s) && oc > cov) {
            ok = false;
          }
          if (s.contains(o) && oc >= cov) {
            ok = false;
          }
        }
      }
      if (ok) {
        out.push_back(s);
      }
    }
  }
  return out;
}

} // namespace

TEST_CASE("edit closeness matches a recursive edit distance") {
  CHECK(edit_closeness("kitten", "sitting") == doctest::Approx(3.0 / 7.0));
  CHECK(edit_closeness("", "") == 0.0);
  CHECK(edit_closeness("abc", "") == 1.0);
  std::mt19937 rng(1);
  for (int i = 0; i < 500; ++i) {
    auto a = random_word(rng);
    auto b = random_word(rng);
    if (a.empty() && b.empty()) {
      continue;
    }
    double expected = static_cast<double>(levenshtein(a, b)) / static_cast<double>(std::max(a.size(), b.size()));
    CHECK(edit_closeness(a, b) == doctest::Approx(expected));
  }
}

TEST_CASE("word closeness uses edit distance, then embeddings") {
  auto emb = load_embeddings(kData / "fixtures/toy_embeddings.txt");
  Thresholds thr;
  CHECK(words_close("directors", "director", emb, thr));
  CHECK_FALSE(words_close("film", "county", emb, thr));
  auto sem = embedding_closeness("actress", "actor", emb);
  REQUIRE(sem);
  CHECK(*sem < thr.semantic);
  CHECK_FALSE(embedding_closeness("actress", "zebra", emb));
  // Edit alone would not pair these two words.
  CHECK(edit_closeness("best", "year") >= thr.edit);
}

TEST_CASE("coverage ignores function words") {
  EmbeddingStore emb;
  Thresholds thr;
  std::vector<std::string> q = {"the", "english", "name", "of", "mayo"};
  std::vector<std::string> col = {"english", "name"};
  CHECK(coverage_count(Span{0, 5}, q, col, emb, thr) == 2);
  CHECK(coverage_count(Span{0, 2}, q, col, emb, thr) == 1);
  std::vector<std::string> with_stop = {"name", "of", "the", "county"};
  std::vector<std::string> q2 = {"of", "the"};
  CHECK(coverage_count(Span{0, 2}, q2, with_stop, emb, thr) == 0);
}

TEST_CASE("maximal spans agree with exhaustive rule checking") {
  EmbeddingStore emb;
  Thresholds thr;
  std::mt19937 rng(2);
  const std::vector<std::string> pool = {"film", "name", "the", "of", "date", "dates", "nomination", "?", "who"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> q;
    int n = std::uniform_int_distribution<int>(1, 8)(rng);
    for (int i = 0; i < n; ++i) {
      q.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
    }
    std::vector<std::string> col = {"nomination", "date"};
    CHECK(maximal_coverage_spans(q, col, emb, thr) == brute_maximal(q, col, emb, thr));
  }
}

TEST_CASE("templates match with bounded slots") {
  auto t = parse_phrase_template("how many people live in ⟨slot⟩");
  auto q = tokenize_words("How many people live in Mayo ?");
  CHECK(match_template(t, q, 4) == std::vector<Span>{{0, 5}});

  auto mid = parse_phrase_template("size of <slot> county");
  auto q2 = tokenize_words("size of the big old wide region county");
  CHECK(match_template(mid, q2, 4).empty());
  CHECK(match_template(mid, q2, 6) == std::vector<Span>{{0, 2}});

  auto lead = parse_phrase_template("<slot> was born");
  auto q3 = tokenize_words("where smith was born");
  CHECK(match_template(lead, q3, 4) == std::vector<Span>{{2, 4}});

  auto plain = parse_phrase_template("directed by");
  CHECK(match_template(plain, tokenize_words("a film directed by x directed by y"), 4) ==
        std::vector<Span>{{2, 4}, {5, 7}});
}

TEST_CASE("column mentions from lexicon and coverage") {
  auto tables = load_tables(kData / "fixtures/tables.jsonl");
  auto lex = load_phrase_lexicon(kData / "fixtures/lexicon.tsv");
  EmbeddingStore emb;
  Thresholds thr;
  const auto& schema = tables[0].schema;
  auto q = tokenize_words("Which film directed by Jerzy Antczak did Piotr Adamczyk star in?");
  auto mentions = detect_column_mentions(q, schema, lex, emb, thr);
  auto has = [&](int column, Span span, MentionSource src) {
    return std::any_of(mentions.begin(), mentions.end(), [&](const CandidateMention& m) {
      return m.column == column && m.span == span && m.source == src;
    });
  };
  CHECK(has(2, Span{1, 2}, MentionSource::Coverage));
  CHECK(has(3, Span{2, 4}, MentionSource::Lexicon));
  CHECK(has(1, Span{9, 11}, MentionSource::Lexicon));
  for (const auto& m : mentions) {
    CHECK(m.score > 0.0);
    CHECK(m.score <= 1.0);
  }
}

TEST_CASE("value mentions: exact cells, masking and overlap resolution") {
  auto tables = load_tables(kData / "fixtures/tables.jsonl");
  const auto& table = tables[0];
  auto stats = build_value_stats(table);
  EmbeddingStore emb;
  Thresholds thr;
  auto q = tokenize_words("Which film directed by Jerzy Antczak did Piotr Adamczyk star in?");
  auto values = detect_value_mentions(q, table.schema, stats, emb, thr);
  std::vector<std::pair<Span, int>> got;
  for (const auto& v : values) {
    got.emplace_back(v.span, v.column);
    CHECK(v.source == MentionSource::ExactValue);
  }
  std::vector<std::pair<Span, int>> expected = {{{4, 6}, 3}, {{7, 9}, 1}};
  CHECK(got == expected);

  std::vector<CandidateMention> mask = {{Span{7, 9}, MentionKind::Column, 0, 1.0, MentionSource::Coverage}};
  auto masked = detect_value_mentions(q, table.schema, stats, emb, thr, mask);
  REQUIRE(masked.size() == 1);
  CHECK(masked[0].span == Span{4, 6});
}
