#include <doctest.h>

#include "plte/trainer.hpp"
#include "testutil.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

using namespace plte;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.alphabet_size = 20;
  spec.lexicon_words = 15;
  spec.d_char = 6;
  spec.d_bigram = 5;
  spec.d_word = 7;
  spec.min_sentence_len = 3;
  spec.max_sentence_len = 9;
  return spec;
}

struct World {
  Model model;
  std::vector<Prepared> train;
  std::vector<Prepared> dev;
};

World make_world(std::uint64_t seed, int n_train = 8, int n_dev = 4) {
  SyntheticData data = generate_synthetic(seed, {n_train, n_dev, 0}, tiny_spec());
  ModelConfig cfg;
  cfg.encoder.d_model = 12;
  cfg.encoder.heads = 2;
  cfg.gru_hidden = 5;
  cfg.max_len = 32;
  ModelInputs inputs;
  inputs.chars = data.chars.vocab;
  inputs.char_init = data.chars.table;
  inputs.bigrams = data.bigrams.vocab;
  inputs.bigram_init = data.bigrams.table;
  inputs.words = data.words.vocab;
  inputs.word_init = data.words.table;
  inputs.lexicon_words = data.lexicon;
  std::set<std::string> tags;
  for (const Corpus* c : {&data.train, &data.dev})
    for (const auto& s : *c)
      for (const auto& t : s.tags) tags.insert(t);
  inputs.tags = {tags.begin(), tags.end()};
  Rng rng(seed + 3);
  World w{init_model(cfg, std::move(inputs), rng), {}, {}};
  w.train = prepare_corpus(w.model, data.train);
  w.dev = prepare_corpus(w.model, data.dev);
  return w;
}

TrainConfig quiet_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.02;
  cfg.dropout_embed_gru = 0.0;
  cfg.dropout_encoder = 0.0;
  cfg.seed = 9;
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("score_predictions hand cases") {
  std::vector<std::vector<std::string>> gold = {{"B-LOC", "E-LOC", "O"}, {"S-PER", "O"}};
  EvalResult perfect = score_predictions(gold, gold, TagScheme::BIOES);
  CHECK(perfect.total.precision() == 1.0);
  CHECK(perfect.total.recall() == 1.0);
  CHECK(perfect.total.f1() == 1.0);

  std::vector<std::vector<std::string>> all_o = {{"O", "O", "O"}, {"O", "O"}};
  EvalResult zero = score_predictions(gold, all_o, TagScheme::BIOES);
  CHECK(zero.total.precision() == 0.0);
  CHECK(zero.total.recall() == 0.0);
  CHECK(zero.total.f1() == 0.0);

  // 1 correct, 1 spurious, 1 missed: P = R = F1 = 0.5
  std::vector<std::vector<std::string>> gold2 = {{"B-LOC", "E-LOC", "O", "O"}, {"S-PER", "O"}};
  std::vector<std::vector<std::string>> pred2 = {{"B-LOC", "E-LOC", "S-ORG", "O"}, {"O", "O"}};
  EvalResult half = score_predictions(gold2, pred2, TagScheme::BIOES);
  CHECK(half.total.precision() == 0.5);
  CHECK(half.total.recall() == 0.5);
  CHECK(half.total.f1() == 0.5);
  CHECK(half.by_label.at("LOC").matched == 1);
  CHECK(half.by_label.at("ORG").predicted == 1);
  CHECK(half.by_label.at("PER").gold == 1);
}

TEST_CASE("training loss is non-increasing on a one-sentence task") {
  World w = make_world(31, 4, 0);
  std::vector<Prepared> one = {w.train.front()};
  TrainConfig cfg = quiet_config();
  cfg.epochs = 5;
  cfg.learning_rate = 0.002;
  cfg.batch_size = 1;
  auto history = train(w.model, one, {}, cfg);
  REQUIRE(history.size() == 5);
  for (std::size_t e = 1; e < history.size(); ++e) {
    CHECK(history[e].train_loss <= history[e - 1].train_loss + 1e-9);
  }
}

TEST_CASE("one small step reduces a single sentence's loss") {
  for (Scalar lr : {1e-3, 1e-4}) {
    World w = make_world(32, 4, 0);
    std::vector<Prepared> one = {w.train.front()};
    Scalar before = sentence_nll(w.model, one[0], false, nullptr).item();
    TrainConfig cfg = quiet_config();
    cfg.epochs = 1;
    cfg.batch_size = 1;
    cfg.learning_rate = lr;
    cfg.clip_norm = 0;
    train(w.model, one, {}, cfg);
    Scalar after = sentence_nll(w.model, one[0], false, nullptr).item();
    CHECK(after < before);
  }
}

TEST_CASE("huge l2 shrinks the parameter norm every epoch") {
  World w = make_world(33, 4, 0);
  TrainConfig cfg = quiet_config();
  cfg.l2_lambda = 1e3;
  cfg.learning_rate = 1e-4;
  cfg.epochs = 3;
  auto norm = [&] {
    Scalar sq = 0;
    for (auto& [name, p] : w.model.parameters()) sq += p.values().square().sum();
    return std::sqrt(sq);
  };
  Scalar prev = norm();
  for (int e = 0; e < 3; ++e) {
    TrainConfig one = cfg;
    one.epochs = 1;
    train(w.model, w.train, {}, one);
    Scalar cur = norm();
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("training is deterministic under a fixed seed") {
  auto run = [] {
    World w = make_world(34, 6, 3);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 3;
    cfg.seed = 11;
    train(w.model, w.train, w.dev, cfg);
    ArrX all(0);
    for (auto& [name, p] : w.model.parameters()) {
      ArrX merged(all.size() + p.values().size());
      merged << all, p.values();
      all = merged;
    }
    return all;
  };
  ArrX a = run();
  ArrX b = run();
  REQUIRE(a.size() == b.size());
  CHECK((a == b).all());
}

TEST_CASE("metrics stream carries one JSON record per epoch") {
  World w = make_world(35, 4, 2);
  TrainConfig cfg = quiet_config();
  cfg.epochs = 2;
  std::ostringstream out;
  train(w.model, w.train, w.dev, cfg, &out);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    auto rec = nlohmann::json::parse(line);
    CHECK(rec.contains("epoch"));
    CHECK(rec.contains("train_loss"));
    CHECK(rec.contains("dev_f1"));
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("dev-best parameters are restored") {
  World w = make_world(36, 6, 3);
  TrainConfig cfg = quiet_config();
  cfg.epochs = 3;
  std::vector<Scalar> dev_f1;
  auto history = train(w.model, w.train, w.dev, cfg);
  Scalar best = -1;
  for (const auto& m : history) best = std::max(best, m.dev.total.f1());
  EvalResult final_eval = evaluate(w.model, w.dev, cfg.batch_size);
  CHECK(final_eval.total.f1() == doctest::Approx(best));
}

TEST_CASE("early stop callback halts training") {
  World w = make_world(37, 4, 0);
  TrainConfig cfg = quiet_config();
  cfg.epochs = 50;
  int seen = 0;
  auto history = train(w.model, w.train, {}, cfg, nullptr, [&](const EpochMetrics&) {
    return ++seen < 2;
  });
  CHECK(history.size() == 2);
}

TEST_CASE("threaded evaluation matches single-threaded") {
  World w = make_world(38, 10, 0);
  auto seq = predict_corpus(w.model, w.train, 3, 1);
  auto par = predict_corpus(w.model, w.train, 3, 4);
  CHECK(seq == par);
}

TEST_CASE("save/load round trip is bit-exact") {
  World w = make_world(39, 5, 3);
  TrainConfig cfg = quiet_config();
  cfg.epochs = 1;
  train(w.model, w.train, w.dev, cfg);
  std::string path = temp_path("plte_model_rt.bin");
  save_model(w.model, path);
  Model back = load_model(path);

  auto pa = w.model.parameters();
  auto pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK((pa[i].second.values() == pb[i].second.values()).all());
  }
  // identical predictions and F1 after reload
  std::vector<Prepared> again = prepare_corpus(back, [&] {
    Corpus c;
    for (const Prepared& p : w.dev) {
      TaggedSentence s;
      s.chars = p.lat.chars;
      s.tags = p.gold_tags;
      c.push_back(std::move(s));
    }
    return c;
  }());
  EvalResult ea = evaluate(w.model, w.dev);
  EvalResult eb = evaluate(back, again);
  CHECK(ea.total.f1() == eb.total.f1());
}

TEST_CASE("model file corruption is reported, not crashed on") {
  World w = make_world(40, 4, 0);
  std::string path = temp_path("plte_model_bad.bin");
  save_model(w.model, path);

  // truncated file
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(path + ".trunc", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS(load_model(path + ".trunc"));

  // wrong magic
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    bytes[0] = 'X';
    std::ofstream out(path + ".magic", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS(load_model(path + ".magic"));

  // shape metadata no longer matching the stored config
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::string needle = "\"gru_hidden\":5";
    auto at = bytes.find(needle);
    REQUIRE(at != std::string::npos);
    bytes[at + needle.size() - 1] = '9';
    std::ofstream out(path + ".shape", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_model(path + ".shape");
    FAIL("expected a shape error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }
}

TEST_SUITE_END();
