#include "slu/corpus.hpp"
#include "slu/gazetteer.hpp"
#include "slu/random.hpp"

#include "doctest.h"
#include "support.hpp"

#include <sstream>

using namespace slu;

using slu::testing::naive_featurize;

namespace {
std::vector<std::string> split(const std::string& s) { return slu::testing::split_words(s); }
}  // namespace

TEST_CASE("featurize worked examples") {
  SUBCASE("two types") {
    GazetteerSet set{{{"city", {split("new york")}}, {"airport", {split("san francisco international")}}}};
    const auto m = GazetteerMatcher::compile(set);
    CHECK(m.featurize(split("fly from new york to san francisco international")) ==
          std::vector<int>{0, 0, 1, 2, 0, 3, 4, 4});
    CHECK(m.featurize(split("nothing here")) == std::vector<int>{0, 0});
    CHECK(m.feature_count() == 5);
  }
  SUBCASE("longest match wins") {
    GazetteerSet set{{{"city", {split("new york"), split("new york city")}}}};
    const auto m = GazetteerMatcher::compile(set);
    CHECK(m.featurize(split("to new york city now")) == std::vector<int>{0, 1, 2, 2, 0});
  }
  SUBCASE("equal length ties go to the lowest type index") {
    GazetteerSet set{{{"a", {split("x y")}}, {"b", {split("x y"), split("z")}}}};
    const auto m = GazetteerMatcher::compile(set);
    CHECK(m.featurize(split("x y z")) == std::vector<int>{1, 2, 3});
  }
  SUBCASE("case insensitive") {
    GazetteerSet set{{{"city", {split("New York")}}}};
    CHECK(GazetteerMatcher::compile(set).featurize(split("NEW york")) == std::vector<int>{1, 2});
  }
}

TEST_CASE("compile edge cases") {
  SUBCASE("empty set") {
    const auto m = GazetteerMatcher::compile({});
    CHECK(m.featurize(split("a b c")) == std::vector<int>{0, 0, 0});
    CHECK(m.feature_count() == 1);
  }
  SUBCASE("single one-token phrase") {
    const auto m = GazetteerMatcher::compile({{{"t", {{"boston"}}}}});
    CHECK(m.featurize(split("from boston to denver")) == std::vector<int>{0, 1, 0, 0});
  }
  SUBCASE("empty phrase") {
    CHECK_THROWS_AS(GazetteerMatcher::compile({{{"t", {{}}}}}), std::invalid_argument);
    CHECK_THROWS_AS(GazetteerMatcher::compile({{{"t", {{"a", ""}}}}}), std::invalid_argument);
  }
}

TEST_CASE("gazetteer file format") {
  const std::string text = "# cities\n[city]\nnew york\nboston\n\n[airline]\ndelta air lines\n";
  std::istringstream in(text);
  const auto set = parse_gazetteer(in, "gaz");
  REQUIRE(set.size() == 2);
  CHECK(set.types[0].name == "city");
  CHECK(set.types[0].phrases == std::vector<std::vector<std::string>>{split("new york"), {"boston"}});
  CHECK(set.types[1].phrases[0].size() == 3);
  std::ostringstream out;
  write_gazetteer(out, set);
  std::istringstream again(out.str());
  CHECK(parse_gazetteer(again, "gaz") == set);

  std::istringstream bad("boston\n[city]\n");
  CHECK_THROWS_AS(parse_gazetteer(bad, "gaz"), FormatError);
}

TEST_CASE("trie matches the naive scan on random inputs") {
  Rng rng(2024);
  const std::vector<std::string> lexicon = {"a", "b", "C", "d", "e", "F", "g"};
  for (int trial = 0; trial < 20; ++trial) {
    GazetteerSet set;
    const int types = 1 + static_cast<int>(rng.below(5));
    for (int t = 0; t < types; ++t) set.types.push_back({"t" + std::to_string(t), {}});
    for (int p = 0; p < 50; ++p) {  // 20 trials x 50 phrases = 1000 phrases
      std::vector<std::string> phrase(1 + rng.below(4));
      for (auto& tok : phrase) tok = lexicon[rng.below(lexicon.size())];
      set.types[rng.below(set.types.size())].phrases.push_back(phrase);
    }
    const auto m = GazetteerMatcher::compile(set);
    for (int u = 0; u < 50; ++u) {
      std::vector<std::string> tokens(1 + rng.below(15));
      for (auto& tok : tokens) tok = lowercase(lexicon[rng.below(lexicon.size())]);
      const auto got = m.featurize(tokens);
      REQUIRE(got == naive_featurize(set, tokens));
      // value range and odd-first structure
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i] >= 0);
        CHECK(got[i] <= 2 * types);
        if (got[i] > 0 && got[i] % 2 == 0) {
          REQUIRE(i > 0);
          CHECK((got[i - 1] == got[i] || got[i - 1] == got[i] - 1));
        }
      }
    }
  }
}
