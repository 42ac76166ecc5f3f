#include <doctest.h>

#include "plte/lattice.hpp"

#include <algorithm>
#include <set>

using namespace plte;

namespace {

const std::vector<std::string> kBridgeLexicon = {"南京", "南京市", "市长", "长江", "大桥"};
const char* kBridgeSentence = "南京市长江大桥";

// Independent predicates for the seven relations, used to prove
// exhaustiveness and exclusivity.
int taxonomy_case_count(Span a, Span b, RelationId expect) {
  int fired = 0;
  auto fire = [&](bool cond, RelationId r) {
    if (cond) {
      ++fired;
      CHECK(r == expect);
    }
  };
  fire(b.p == a.q + 1, RelationId::r1);
  fire(b.q == a.p - 1, RelationId::r2);
  fire((a.p < b.p && b.p <= a.q && a.q < b.q) || (b.p < a.p && a.p <= b.q && b.q < a.q),
       RelationId::r3);
  fire(a.p <= b.p && b.q <= a.q && !(a == b), RelationId::r4);
  fire(a == b, RelationId::r5);
  fire(b.p <= a.p && a.q <= b.q && !(a == b), RelationId::r6);
  fire(b.p > a.q + 1 || b.q < a.p - 1, RelationId::r7);
  return fired;
}

std::vector<Span> all_spans(int m) {
  std::vector<Span> spans;
  for (int p = 1; p <= m; ++p)
    for (int q = p; q <= m; ++q) spans.push_back({p, q});
  return spans;
}

LatticeSequence bridge_lattice() {
  std::u32string sentence = utf8_decode(kBridgeSentence);
  Lexicon lex = build_lexicon(kBridgeLexicon);
  Vocab chars, bigrams;
  for (char32_t c : sentence) chars.add(utf8_encode(c));
  for (const auto& k : bigram_keys(sentence)) bigrams.add(k);
  return build_lattice(sentence, lex, chars, bigrams);
}

}  // namespace

TEST_SUITE_BEGIN("lattice");

TEST_CASE("build_lexicon membership") {
  Lexicon lex = build_lexicon(kBridgeLexicon);
  CHECK(lex.size() == 5);
  for (const auto& w : kBridgeLexicon) CHECK(lex.contains(utf8_decode(w)));
  CHECK(!lex.contains(utf8_decode("南市")));
  CHECK(!lex.contains(utf8_decode("南")));
}

TEST_CASE("build_lexicon empty and short words") {
  Lexicon empty = build_lexicon({});
  CHECK(empty.empty());
  CHECK(match_words(utf8_decode("南京"), empty).empty());

  std::vector<std::string> bad = {"市"};
  CHECK_THROWS(build_lexicon(bad));
}

TEST_CASE("build_lexicon is idempotent and order-independent") {
  std::vector<std::string> shuffled = {"大桥", "南京市", "市长", "南京", "长江", "南京"};
  Lexicon a = build_lexicon(kBridgeLexicon);
  Lexicon b = build_lexicon(shuffled);
  CHECK(a.size() == b.size());
  auto ma = a.match(utf8_decode(kBridgeSentence));
  auto mb = b.match(utf8_decode(kBridgeSentence));
  REQUIRE(ma.size() == mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i) {
    CHECK(ma[i].span == mb[i].span);
    CHECK(ma[i].word_id == mb[i].word_id);
  }
}

TEST_CASE("match_words on the bridge sentence") {
  Lexicon lex = build_lexicon(kBridgeLexicon);
  auto matches = match_words(utf8_decode(kBridgeSentence), lex);
  std::vector<Span> expected = {{1, 2}, {1, 3}, {3, 4}, {4, 5}, {6, 7}};
  REQUIRE(matches.size() == expected.size());
  for (std::size_t i = 0; i < matches.size(); ++i) CHECK(matches[i].span == expected[i]);
}

TEST_CASE("match_words equals brute-force enumeration") {
  Rng rng(4242);
  std::uniform_int_distribution<int> pick_char(0, 9);
  std::uniform_int_distribution<int> pick_len(2, 4);
  std::uniform_int_distribution<int> pick_slen(1, 12);
  for (int round = 0; round < 50; ++round) {
    std::vector<std::string> words;
    std::set<std::u32string> word_set;
    for (int w = 0; w < 12; ++w) {
      std::u32string u;
      int len = pick_len(rng);
      for (int k = 0; k < len; ++k) u.push_back(static_cast<char32_t>(U'a' + pick_char(rng)));
      if (word_set.insert(u).second) words.push_back(utf8_encode(u));
    }
    Lexicon lex = build_lexicon(words);
    std::u32string sentence;
    int m = pick_slen(rng);
    for (int k = 0; k < m; ++k) sentence.push_back(static_cast<char32_t>(U'a' + pick_char(rng)));

    std::vector<Span> brute;
    for (int p = 1; p <= m; ++p) {
      for (int q = p + 1; q <= m; ++q) {
        std::u32string sub = sentence.substr(static_cast<std::size_t>(p - 1),
                                             static_cast<std::size_t>(q - p + 1));
        if (lex.contains(sub)) brute.push_back({p, q});
      }
    }
    auto matches = match_words(sentence, lex);
    REQUIRE(matches.size() == brute.size());
    for (std::size_t i = 0; i < matches.size(); ++i) CHECK(matches[i].span == brute[i]);
  }
}

TEST_CASE("build_lattice on the bridge sentence") {
  LatticeSequence lat = bridge_lattice();
  CHECK(lat.char_count() == 7);
  CHECK(lat.token_count() == 12);
  // token t8 is the word at span (1,2); its position is 1
  CHECK(lat.token_span(7) == Span{1, 2});
  CHECK(lat.positions[7] == 1);
  CHECK(lat.token_text(7) == "南京");
  for (Index i = 0; i < 7; ++i) CHECK(lat.positions[static_cast<std::size_t>(i)] == i + 1);
}

TEST_CASE("build_lattice single character") {
  std::u32string sentence = utf8_decode("桥");
  Vocab chars, bigrams;
  chars.add("桥");
  bigrams.add(std::string("桥") + std::string(kBigramSentinel));
  LatticeSequence lat = build_lattice(sentence, Lexicon{}, chars, bigrams);
  CHECK(lat.token_count() == 1);
  CHECK(lat.positions[0] == 1);
  REQUIRE(lat.bigram_ids.size() == 1);
  CHECK(lat.bigram_ids[0] == 1);  // the sentinel bigram resolved in the vocab
}

TEST_CASE("relation paper anchors") {
  CHECK(relation({4, 4}, {3, 4}) == RelationId::r6);
  CHECK(relation({1, 1}, {2, 2}) == RelationId::r1);
  CHECK(relation({2, 3}, {2, 3}) == RelationId::r5);
  CHECK(relation({1, 2}, {5, 6}) == RelationId::r7);
  CHECK(relation({3, 4}, {1, 2}) == RelationId::r2);
  CHECK(relation({1, 4}, {2, 3}) == RelationId::r4);
  CHECK(relation({1, 3}, {2, 5}) == RelationId::r3);
  CHECK(relation({2, 5}, {1, 3}) == RelationId::r3);
}

TEST_CASE("relation is total, exclusive and matches the predicates") {
  for (int m = 1; m <= 6; ++m) {
    for (Span a : all_spans(m)) {
      for (Span b : all_spans(m)) {
        RelationId r = relation(a, b);
        CHECK(static_cast<int>(r) >= 1);
        CHECK(static_cast<int>(r) <= 7);
        CHECK(taxonomy_case_count(a, b, r) == 1);
      }
    }
  }
}

TEST_CASE("relation mirror property, exhaustive") {
  for (int m = 1; m <= 8; ++m) {
    for (Span a : all_spans(m)) {
      for (Span b : all_spans(m)) {
        CHECK(relation(a, b) == mirror(relation(b, a)));
      }
    }
  }
}

TEST_CASE("relation matrix on the bridge sentence") {
  LatticeSequence lat = bridge_lattice();
  RelationMatrix rel = build_relation_matrix(lat);
  CHECK(rel.at(0, 1) == RelationId::r1);  // L[1][2] = r1
  CHECK(rel.at(3, 9) == RelationId::r6);  // t4 inside t10 = (3,4)
  for (Index i = 0; i < rel.size(); ++i) CHECK(rel.at(i, i) == RelationId::r5);
}

TEST_CASE("relation matrix single token") {
  std::u32string sentence = utf8_decode("a");
  Vocab chars, bigrams;
  LatticeSequence lat = build_lattice(sentence, Lexicon{}, chars, bigrams);
  RelationMatrix rel = build_relation_matrix(lat);
  CHECK(rel.size() == 1);
  CHECK(rel.at(0, 0) == RelationId::r5);
  CHECK(rel.neighbor_mask(0, 0));
}

TEST_CASE("relation matrix swap consistency and mask on random lattices") {
  Rng rng(777);
  std::uniform_int_distribution<int> pick_char(0, 5);
  std::uniform_int_distribution<int> pick_len(2, 3);
  std::uniform_int_distribution<int> pick_slen(2, 8);
  for (int round = 0; round < 30; ++round) {
    int m = pick_slen(rng);
    std::u32string sentence;
    for (int k = 0; k < m; ++k) sentence.push_back(static_cast<char32_t>(U'a' + pick_char(rng)));
    std::vector<std::string> words;
    for (int w = 0; w < 8; ++w) {
      std::u32string u;
      int len = pick_len(rng);
      for (int k = 0; k < len; ++k) u.push_back(static_cast<char32_t>(U'a' + pick_char(rng)));
      words.push_back(utf8_encode(u));
    }
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    Lexicon lex = build_lexicon(words);
    Vocab chars, bigrams;
    LatticeSequence lat = build_lattice(sentence, lex, chars, bigrams);
    RelationMatrix rel = build_relation_matrix(lat);
    CHECK(lat.token_count() == lat.char_count() + static_cast<Index>(lat.words.size()));
    for (Index i = 0; i < rel.size(); ++i) {
      for (Index j = 0; j < rel.size(); ++j) {
        CHECK(rel.at(i, j) == mirror(rel.at(j, i)));
        CHECK(rel.at(i, j) == relation(lat.token_span(i), lat.token_span(j)));
        CHECK(rel.neighbor_mask(i, j) == (rel.at(i, j) != RelationId::r7));
      }
    }
  }
}

TEST_SUITE_END();
