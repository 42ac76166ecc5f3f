#include <doctest.h>

#include "plte/data.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace plte;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// Slow reference extractor: greedy left-to-right pattern match of
// (S-X | B-X I-X* E-X) for BIOES and (B-X I-X*) for BIO.
std::vector<Entity> reference_extract(const std::vector<std::string>& tags, TagScheme scheme) {
  std::vector<Entity> out;
  const int n = static_cast<int>(tags.size());
  auto prefix = [&](int i) { return tags[static_cast<std::size_t>(i)][0]; };
  auto label = [&](int i) {
    const std::string& t = tags[static_cast<std::size_t>(i)];
    return t.size() >= 3 && t[1] == '-' ? t.substr(2) : std::string();
  };
  int i = 0;
  while (i < n) {
    if (scheme == TagScheme::BIOES && prefix(i) == 'S' && !label(i).empty()) {
      out.push_back({i + 1, i + 1, label(i)});
      ++i;
      continue;
    }
    if (prefix(i) == 'B' && !label(i).empty()) {
      int j = i + 1;
      while (j < n && prefix(j) == 'I' && label(j) == label(i)) ++j;
      if (scheme == TagScheme::BIO) {
        out.push_back({i + 1, j, label(i)});
        i = j;
        continue;
      }
      if (j < n && prefix(j) == 'E' && label(j) == label(i)) {
        out.push_back({i + 1, j + 1, label(i)});
        i = j + 1;
        continue;
      }
    }
    ++i;
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("utf8 round trip") {
  std::string s = "南京市长江大桥 abc <s>";
  CHECK(utf8_encode(utf8_decode(s)) == s);
  CHECK(utf8_decode("南").size() == 1);
  CHECK_THROWS(utf8_decode("\xff\xfe"));
  CHECK_THROWS(utf8_decode(std::string_view("\xe5\x8d", 2)));  // truncated
}

TEST_CASE("vocab ids and unknowns") {
  Vocab v;
  CHECK(v.size() == 1);
  CHECK(v.add("南") == 1);
  CHECK(v.add("京") == 2);
  CHECK(v.add("南") == 1);
  CHECK(v.lookup("南") == 1);
  CHECK(v.lookup("桥") == Vocab::kUnknown);
  CHECK(v.surface(2) == "京");
  CHECK_THROWS(v.surface(0));
}

TEST_CASE("build_vocab honors the frequency threshold") {
  std::vector<std::string> items = {"a", "b", "a", "c", "a", "b"};
  Vocab v = build_vocab(items, 2);
  CHECK(v.contains("a"));
  CHECK(v.contains("b"));
  CHECK(!v.contains("c"));
}

TEST_CASE("read_conll basics") {
  std::string path = temp_path("plte_conll_basic.txt");
  write_file(path, "南\tB-LOC\n京 E-LOC\n\n");
  Corpus c = read_conll(path, TagScheme::BIOES);
  REQUIRE(c.size() == 1);
  CHECK(c[0].chars == utf8_decode("南京"));
  CHECK(c[0].tags == std::vector<std::string>{"B-LOC", "E-LOC"});

  write_file(path, "");
  CHECK(read_conll(path).empty());
}

TEST_CASE("read_conll error cases name the line") {
  std::string path = temp_path("plte_conll_bad.txt");
  write_file(path, "南\tB-LOC\n京\tX-LOC\n\n");
  try {
    read_conll(path, TagScheme::BIOES);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  write_file(path, "南京\tB-LOC\n");
  CHECK_THROWS(read_conll(path));  // multi-character token
  write_file(path, "南\n");
  CHECK_THROWS(read_conll(path));  // missing tag
  CHECK_THROWS(read_conll(temp_path("plte_no_such_file.txt")));
}

TEST_CASE("conll write/read round trip") {
  Corpus corpus = {{utf8_decode("南京市"), {"B-LOC", "I-LOC", "E-LOC"}},
                   {utf8_decode("大桥"), {"O", "O"}}};
  std::string path = temp_path("plte_conll_rt.txt");
  write_conll(path, corpus);
  CHECK(read_conll(path) == corpus);
}

TEST_CASE("extract_entities hand cases") {
  std::vector<std::string> tags = {"B-LOC", "E-LOC", "O"};
  auto ents = extract_entities(tags, TagScheme::BIOES);
  REQUIRE(ents.size() == 1);
  CHECK(ents[0] == Entity{1, 2, "LOC"});

  std::vector<std::string> all_o = {"O", "O", "O"};
  CHECK(extract_entities(all_o, TagScheme::BIOES).empty());

  std::vector<std::string> single = {"S-PER"};
  auto se = extract_entities(single, TagScheme::BIOES);
  REQUIRE(se.size() == 1);
  CHECK(se[0] == Entity{1, 1, "PER"});

  // ill-formed: broken B-run is dropped, scan resumes at the break
  std::vector<std::string> broken = {"B-LOC", "I-LOC", "B-LOC", "E-LOC", "E-PER"};
  auto be = extract_entities(broken, TagScheme::BIOES);
  REQUIRE(be.size() == 1);
  CHECK(be[0] == Entity{3, 4, "LOC"});

  std::vector<std::string> bio = {"B-ORG", "I-ORG", "O", "I-PER", "B-PER"};
  auto bo = extract_entities(bio, TagScheme::BIO);
  REQUIRE(bo.size() == 2);
  CHECK(bo[0] == Entity{1, 2, "ORG"});
  CHECK(bo[1] == Entity{5, 5, "PER"});
}

TEST_CASE("extract_entities equals the reference extractor on random tags") {
  Rng rng(99);
  std::vector<std::string> pool_bioes = {"O", "B-A", "I-A", "E-A", "S-A", "B-B", "I-B", "E-B", "S-B"};
  std::vector<std::string> pool_bio = {"O", "B-A", "I-A", "B-B", "I-B"};
  std::uniform_int_distribution<int> len(1, 14);
  for (int round = 0; round < 300; ++round) {
    for (TagScheme scheme : {TagScheme::BIOES, TagScheme::BIO}) {
      const auto& pool = scheme == TagScheme::BIOES ? pool_bioes : pool_bio;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      std::vector<std::string> tags;
      int n = len(rng);
      for (int i = 0; i < n; ++i) tags.push_back(pool[pick(rng)]);
      CHECK(extract_entities(tags, scheme) == reference_extract(tags, scheme));
    }
  }
}

TEST_CASE("entities_to_tags round trips") {
  Rng rng(123);
  std::uniform_int_distribution<int> len(3, 12);
  std::vector<std::string> labels = {"PER", "LOC"};
  for (int round = 0; round < 100; ++round) {
    int n = len(rng);
    // non-overlapping random spans
    std::vector<Entity> ents;
    int at = 1;
    std::uniform_int_distribution<int> gap(0, 2), w(1, 3), lab(0, 1);
    while (at <= n) {
      at += gap(rng);
      int end = at + w(rng) - 1;
      if (end > n) break;
      ents.push_back({at, end, labels[static_cast<std::size_t>(lab(rng))]});
      at = end + 1;
    }
    for (TagScheme scheme : {TagScheme::BIOES, TagScheme::BIO}) {
      auto tags = entities_to_tags(ents, n, scheme);
      for (const auto& t : tags) CHECK(tag_valid(t, scheme));
      auto back = extract_entities(tags, scheme);
      CHECK(back == ents);
    }
  }
}

TEST_CASE("embeddings load") {
  std::string path = temp_path("plte_emb.vec");
  write_file(path, "t1 1 2 3 4\nt2 5 6 7 8\nt3 -1 -2 -3 -4\n");
  Embeddings e = load_embeddings(path);
  CHECK(e.vocab.size() == 4);
  CHECK(e.dim() == 4);
  CHECK(e.table.mat()(e.vocab.lookup("t2"), 0) == 5);
  CHECK(e.table.mat()(0, 0) == 0);  // unknown row

  write_file(path, "2 5\nt1 1 2 3 4\n");
  CHECK_THROWS(load_embeddings(path));

  write_file(path, "t1 1 2\nt1 3 4\nt2 5 6\n");
  Embeddings dup = load_embeddings(path);
  CHECK(dup.vocab.size() == 3);
  CHECK(dup.table.mat()(dup.vocab.lookup("t1"), 0) == 1);  // keep first
}

TEST_CASE("embeddings write/read round trip") {
  Rng rng(5);
  Vocab v;
  v.add("南京");
  v.add("大桥");
  v.add("x");
  std::uniform_real_distribution<Scalar> dist(-2, 2);
  Mat table = Mat::Zero(v.size(), 6);
  for (Index i = 1; i < table.rows(); ++i)
    for (Index j = 0; j < 6; ++j) table(i, j) = dist(rng);
  std::string path = temp_path("plte_emb_rt.vec");
  write_embeddings(path, v, Tensor::from_matrix(table));
  Embeddings back = load_embeddings(path);
  CHECK(back.vocab.size() == v.size());
  CHECK(back.dim() == 6);
  CHECK((back.table.mat() - table).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("bigram keys carry the sentinel") {
  auto keys = bigram_keys(utf8_decode("南京市"));
  REQUIRE(keys.size() == 3);
  CHECK(keys[0] == "南京");
  CHECK(keys[1] == "京市");
  CHECK(keys[2] == std::string("市") + std::string(kBigramSentinel));
}

TEST_CASE("synthetic generation is deterministic and self-consistent") {
  SyntheticSizes sizes{20, 5, 5};
  SyntheticData a = generate_synthetic(42, sizes);
  SyntheticData b = generate_synthetic(42, sizes);
  CHECK(a.train == b.train);
  CHECK(a.dev == b.dev);
  CHECK(a.test == b.test);
  CHECK(a.lexicon == b.lexicon);
  CHECK((a.words.table.values() == b.words.table.values()).all());

  CHECK(a.train.size() == 20);
  CHECK(a.dev.size() == 5);
  CHECK(a.test.size() == 5);

  SyntheticData c = generate_synthetic(43, sizes);
  CHECK(a.train != c.train);

  // every gold entity surface occurs in the generated lexicon
  std::set<std::string> lex(a.lexicon.begin(), a.lexicon.end());
  for (const Corpus* corpus : {&a.train, &a.dev, &a.test}) {
    for (const TaggedSentence& s : *corpus) {
      auto ents = extract_entities(s.tags, TagScheme::BIOES);
      CHECK(!ents.empty());
      for (const Entity& e : ents) {
        std::u32string surface = s.chars.substr(static_cast<std::size_t>(e.start - 1),
                                                static_cast<std::size_t>(e.end - e.start + 1));
        CHECK(lex.contains(utf8_encode(surface)));
      }
    }
  }
}

TEST_SUITE_END();
