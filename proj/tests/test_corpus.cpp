#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "support/testutil.hpp"
#include "textcaus/common.hpp"
#include "textcaus/corpus.hpp"

using namespace textcaus;
using namespace textcaus::corpus;

TEST_CASE("tokenize lowercases, splits, and drops stop words") {
  TokenizeConfig cfg = TokenizeConfig::defaults();
  cfg.ngram_max = 1;
  auto tokens = tokenize("The patient WAS stable; afebrile overnight.", cfg);
  CHECK(tokens == std::vector<std::string>{"patient", "stable", "afebrile", "overnight"});
}

TEST_CASE("tokenize forms n-grams over surviving unigrams") {
  TokenizeConfig cfg = TokenizeConfig::defaults();
  cfg.ngram_min = 1;
  cfg.ngram_max = 2;
  auto tokens = tokenize("sinus tach with runs", cfg);
  CHECK(std::count(tokens.begin(), tokens.end(), "sinus") == 1);
  CHECK(std::count(tokens.begin(), tokens.end(), "sinus_tach") == 1);
  // "with" is a stop word, so the bigram bridges over it.
  CHECK(std::count(tokens.begin(), tokens.end(), "tach_runs") == 1);
}

TEST_CASE("tokenize with stemming maps inflections together") {
  TokenizeConfig cfg = TokenizeConfig::defaults();
  cfg.ngram_max = 1;
  cfg.stem = true;
  auto a = tokenize("agitated", cfg);
  auto b = tokenize("agitation", cfg);
  REQUIRE(a.size() == 1);
  REQUIRE(b.size() == 1);
  CHECK(a[0] == b[0]);
}

TEST_CASE("porter_stem classic examples") {
  CHECK(porter_stem("caresses") == "caress");
  CHECK(porter_stem("ponies") == "poni");
  CHECK(porter_stem("relational") == "relat");
  CHECK(porter_stem("hopeful") == "hope");
  CHECK(porter_stem("sky") == "sky");
}

TEST_CASE("aggregate_patient_docs applies the chart-time cutoff in order") {
  std::vector<ClinicalNote> notes = {
      {"a", NoteCategory::nursing, 30.0, "late"},
      {"a", NoteCategory::physician, 5.0, "first"},
      {"b", NoteCategory::other, 40.0, "only-late"},
      {"a", NoteCategory::nursing, 10.0, "second"},
  };
  auto docs = aggregate_patient_docs(notes, 24.0);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].patient_id == "a");
  CHECK(docs[0].text == "first second");
  CHECK(docs[1].patient_id == "b");
  CHECK(docs[1].text.empty());
}

TEST_CASE("aggregate_patient_docs keeps input order for tied offsets") {
  std::vector<ClinicalNote> notes = {
      {"a", NoteCategory::nursing, 1.0, "x"},
      {"a", NoteCategory::nursing, 1.0, "y"},
  };
  auto docs = aggregate_patient_docs(notes, 24.0);
  CHECK(docs[0].text == "x y");
}

TEST_CASE("build_vocabulary applies df bounds and sorts tokens") {
  std::vector<std::vector<std::string>> docs = {
      {"common", "rare", "everywhere"},
      {"common", "everywhere"},
      {"common", "everywhere"},
      {"everywhere"},
  };
  VocabConfig cfg;
  cfg.min_df = 2;
  cfg.max_df_fraction = 0.9;  // "everywhere" (df 4/4) filtered out
  Vocabulary vocab = build_vocabulary(docs, cfg);
  REQUIRE(vocab.size() == 1);
  CHECK(vocab.tokens[0] == "common");
  CHECK(vocab.document_frequency[0] == 3);
}

TEST_CASE("build_dtm counts occurrences and totals") {
  std::vector<std::vector<std::string>> docs = {
      {"a", "b", "a"},
      {"b"},
      {},
  };
  Vocabulary vocab;
  vocab.tokens = {"a", "b"};
  vocab.ngram_order = {1, 1};
  vocab.document_frequency = {1, 2};
  DocTermMatrix dtm = build_dtm(docs, vocab);
  CHECK(dtm.n_docs == 3);
  CHECK(dtm.count_at(0, 0) == 2);
  CHECK(dtm.count_at(0, 1) == 1);
  CHECK(dtm.count_at(1, 0) == 0);
  CHECK(dtm.row_totals[0] == 3);
  CHECK(dtm.row_totals[2] == 0);
}

TEST_CASE("cosine_distance oracle: orthogonal, identical, and 45-degree rows") {
  std::vector<std::vector<std::string>> docs = {
      {"a"}, {"b"}, {"a"}, {"a", "b"},
  };
  Vocabulary vocab;
  vocab.tokens = {"a", "b"};
  vocab.ngram_order = {1, 1};
  vocab.document_frequency = {3, 2};
  DocTermMatrix dtm = build_dtm(docs, vocab);
  CHECK(cosine_distance(dtm, 0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_distance(dtm, 0, 2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_distance(dtm, 0, 3) ==
        doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("cosine_distance properties: range, symmetry, empty-row convention") {
  testutil::Rng rng(2718);
  for (int rep = 0; rep < testutil::kPropertyCases; ++rep) {
    const int n = testutil::rint(rng, 2, 12);
    DocTermMatrix dtm = testutil::random_dtm(rng, n, testutil::rint(rng, 2, 10), 0.4);
    const int i = testutil::rint(rng, 0, n - 1);
    const int j = testutil::rint(rng, 0, n - 1);
    const double d = cosine_distance(dtm, i, j);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    CHECK(cosine_distance(dtm, j, i) == doctest::Approx(d).epsilon(1e-12));
    if (dtm.row_totals[i] == 0)
      CHECK(d == 1.0);
    else if (i == j)
      CHECK(d == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("subset_rows keeps the vocabulary and selected counts") {
  testutil::Rng rng(314);
  DocTermMatrix dtm = testutil::random_dtm(rng, 8, 5, 0.5);
  std::vector<int> rows = {6, 0, 3};
  DocTermMatrix sub = subset_rows(dtm, rows);
  CHECK(sub.n_docs == 3);
  CHECK(sub.vocab.content_hash() == dtm.vocab.content_hash());
  for (int r = 0; r < 3; ++r)
    for (int j = 0; j < dtm.vocab.size(); ++j)
      CHECK(sub.count_at(r, j) == dtm.count_at(rows[r], j));
}

TEST_CASE("key_term_covariates normalizes terms and reports missing ones") {
  std::vector<std::vector<std::string>> docs = {
      {"sinus", "tach"}, {"sinus_tach"}, {"stable"},
  };
  Vocabulary vocab;
  vocab.tokens = {"sinus", "sinus_tach", "stable", "tach"};
  vocab.ngram_order = {1, 2, 1, 1};
  vocab.document_frequency = {1, 1, 1, 1};
  DocTermMatrix dtm = build_dtm(docs, vocab);
  KeyTermMatrix ktm = key_term_covariates(dtm, {"Sinus Tach", "absent-term"});
  REQUIRE(ktm.terms.size() == 2);
  CHECK(ktm.terms[0] == "sinus_tach");
  CHECK(ktm.values(1, 0) == 1);
  CHECK(ktm.values(0, 0) == 0);
  REQUIRE(ktm.missing_terms.size() == 1);
  CHECK(ktm.values.col(1).isZero());
}

TEST_CASE("vocabulary hash is order- and content-sensitive") {
  Vocabulary a;
  a.tokens = {"x", "y"};
  a.ngram_order = {1, 1};
  a.document_frequency = {1, 1};
  Vocabulary b = a;
  b.tokens = {"x", "z"};
  CHECK(a.content_hash() != b.content_hash());
  CHECK(a.content_hash() == Vocabulary(a).content_hash());
}

TEST_CASE("stop list entries are normalized through the tokenizer") {
  std::unordered_set<std::string> stops;
  add_stop_words(stops, "Aren't");
  CHECK(stops.count("aren"));
  CHECK(stops.count("t"));
}
