#include "plte/cli.hpp"

#include "plte/bench.hpp"
#include "plte/config.hpp"
#include "plte/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

namespace plte {

namespace {

Config build_config(const CliOptions& opts) {
  Config cfg = opts.config_path.empty() ? Config{} : load_config_file(opts.config_path);
  if (opts.seed_set) cfg.train.seed = opts.seed;
  if (opts.batch_size > 0) cfg.train.batch_size = opts.batch_size;
  apply_ablation(cfg, opts.ablate);
  cfg.resolve();
  return cfg;
}

std::vector<std::string> sorted_tagset(const Corpus& corpus) {
  std::set<std::string> tags;
  for (const auto& s : corpus)
    for (const auto& t : s.tags) tags.insert(t);
  return {tags.begin(), tags.end()};
}

// Vocabularies and the lexicon come from the embedding files when given,
// else from the corpus / lexicon file.
struct Resources {
  ModelInputs inputs;
};

Resources gather_resources(const CliOptions& opts, const Config& cfg, const Corpus& train) {
  Resources res;
  if (!opts.char_emb.empty()) {
    Embeddings e = load_embeddings(opts.char_emb);
    res.inputs.chars = std::move(e.vocab);
    res.inputs.char_init = e.table;
  } else {
    std::vector<std::string> items;
    for (const auto& s : train)
      for (char32_t c : s.chars) items.push_back(utf8_encode(c));
    res.inputs.chars = build_vocab(items);
  }
  if (!opts.bigram_emb.empty()) {
    Embeddings e = load_embeddings(opts.bigram_emb);
    res.inputs.bigrams = std::move(e.vocab);
    res.inputs.bigram_init = e.table;
  } else {
    std::vector<std::string> items;
    for (const auto& s : train)
      for (auto& k : bigram_keys(s.chars)) items.push_back(std::move(k));
    res.inputs.bigrams = build_vocab(items);
  }
  std::vector<std::string> lexicon_words;
  if (!opts.lexicon_path.empty()) lexicon_words = read_word_list(opts.lexicon_path);
  if (!opts.word_emb.empty()) {
    Embeddings e = load_embeddings(opts.word_emb);
    res.inputs.words = std::move(e.vocab);
    res.inputs.word_init = e.table;
    if (lexicon_words.empty()) {
      // the word vocabulary doubles as the lexicon source
      for (const auto& w : res.inputs.words.entries()) {
        if (utf8_decode(w).size() >= 2) lexicon_words.push_back(w);
      }
    }
  } else {
    for (const auto& w : lexicon_words) res.inputs.words.add(w);
  }
  if (lexicon_words.empty())
    std::cerr << "plte: no lexicon words, the model degrades to character-only\n";
  res.inputs.lexicon_words = std::move(lexicon_words);
  res.inputs.tags = sorted_tagset(train);
  (void)cfg;
  return res;
}

}  // namespace

int cmd_train(const CliOptions& opts) {
  require(!opts.train_path.empty(), "train: --train is required");
  require(!opts.model_path.empty(), "train: --model output path is required");
  Config cfg = build_config(opts);
  Corpus train_corpus = read_conll(opts.train_path, cfg.model.scheme);
  require(!train_corpus.empty(), "train: '" + opts.train_path + "' holds no sentences");
  Corpus dev_corpus;
  if (!opts.dev_path.empty()) dev_corpus = read_conll(opts.dev_path, cfg.model.scheme);

  Resources res = gather_resources(opts, cfg, train_corpus);
  Rng rng(cfg.train.seed);
  Model model = init_model(cfg.model, std::move(res.inputs), rng);

  std::vector<Prepared> train_set = prepare_corpus(model, train_corpus);
  std::vector<Prepared> dev_set = prepare_corpus(model, dev_corpus);
  train(model, train_set, dev_set, cfg.train, &std::cout);
  save_model(model, opts.model_path);
  std::cerr << "plte: wrote model to " << opts.model_path << "\n";
  return 0;
}

namespace {

void print_eval(const EvalResult& res, std::ostream& out) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "overall  P %.4f  R %.4f  F1 %.4f  (gold %ld, pred %ld, match %ld)\n",
                res.total.precision(), res.total.recall(), res.total.f1(), res.total.gold,
                res.total.predicted, res.total.matched);
  out << buf;
  for (const auto& [label, sc] : res.by_label) {
    std::snprintf(buf, sizeof buf, "%-8s P %.4f  R %.4f  F1 %.4f  (gold %ld, pred %ld, match %ld)\n",
                  label.c_str(), sc.precision(), sc.recall(), sc.f1(), sc.gold, sc.predicted,
                  sc.matched);
    out << buf;
  }
  nlohmann::json rec = {{"precision", res.total.precision()},
                        {"recall", res.total.recall()},
                        {"f1", res.total.f1()}};
  out << rec.dump() << "\n";
}

}  // namespace

int cmd_eval(const CliOptions& opts) {
  require(!opts.model_path.empty(), "eval: --model is required");
  require(!opts.test_path.empty(), "eval: --test is required");
  Model model = load_model(opts.model_path);
  Corpus corpus = read_conll(opts.test_path, model.cfg.scheme);
  std::vector<Prepared> prepared = prepare_corpus(model, corpus);
  int batch = opts.batch_size > 0 ? opts.batch_size : 16;
  EvalResult res = evaluate(model, prepared, batch, opts.threads);
  print_eval(res, std::cout);
  return 0;
}

int cmd_predict(const CliOptions& opts) {
  require(!opts.model_path.empty(), "predict: --model is required");
  require(!opts.test_path.empty(), "predict: --test input is required");
  Model model = load_model(opts.model_path);
  Corpus corpus = read_conll(opts.test_path);
  std::vector<Prepared> prepared = prepare_corpus(model, corpus);
  int batch = opts.batch_size > 0 ? opts.batch_size : 16;
  auto tags = predict_corpus(model, prepared, batch, opts.threads);

  Corpus out = corpus;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].tags = tags[i];
  if (opts.out_path.empty()) {
    for (const TaggedSentence& s : out) {
      for (std::size_t i = 0; i < s.chars.size(); ++i)
        std::cout << utf8_encode(s.chars[i]) << '\t' << s.tags[i] << '\n';
      std::cout << '\n';
    }
  } else {
    write_conll(opts.out_path, out);
  }
  return 0;
}

int cmd_bench(const CliOptions& opts) {
  require(!opts.test_path.empty(), "bench: --test corpus is required");
  Model model = [&] {
    if (!opts.model_path.empty()) return load_model(opts.model_path);
    // a randomly initialized model times the same computation
    Config cfg = build_config(opts);
    Corpus corpus = read_conll(opts.test_path, cfg.model.scheme);
    Resources res = gather_resources(opts, cfg, corpus);
    Rng rng(cfg.train.seed);
    return init_model(cfg.model, std::move(res.inputs), rng);
  }();
  Corpus corpus = read_conll(opts.test_path, model.cfg.scheme);
  std::vector<Prepared> prepared = prepare_corpus(model, corpus);

  BenchOptions bopts;
  bopts.repetitions = opts.reps;
  bopts.batch_sizes.clear();
  std::stringstream ss(opts.bench_batches);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) bopts.batch_sizes.push_back(std::stoi(item));
  }
  require(!bopts.batch_sizes.empty(), "bench: --bench-batches is empty");

  BenchReport report = run_bench(model, prepared, bopts);
  print_bench(report, std::cout);
  return report.gate_passed ? 0 : 1;
}

int cmd_inspect(const CliOptions& opts) {
  require(!opts.sentence.empty(), "inspect: a sentence argument is required");
  std::u32string sentence = utf8_decode(opts.sentence);
  Lexicon lexicon;
  if (!opts.lexicon_path.empty()) {
    auto words = read_word_list(opts.lexicon_path);
    lexicon = build_lexicon(words);
  }
  Vocab chars, bigrams;
  for (char32_t c : sentence) chars.add(utf8_encode(c));
  for (const auto& k : bigram_keys(sentence)) bigrams.add(k);

  LatticeSequence lat = build_lattice(sentence, lexicon, chars, bigrams);
  RelationMatrix rel = build_relation_matrix(lat);
  const Index n = lat.token_count();

  std::cout << "tokens (M=" << lat.char_count() << ", N=" << n << "):\n";
  std::cout << "  idx  span    pos  text\n";
  for (Index i = 0; i < n; ++i) {
    Span sp = lat.token_span(i);
    char buf[64];
    std::snprintf(buf, sizeof buf, "  t%-3ld (%d,%d)%s  %-3ld  ", static_cast<long>(i + 1), sp.p,
                  sp.q, sp.q > 9 ? "" : " ", static_cast<long>(lat.positions[static_cast<std::size_t>(i)]));
    std::cout << buf << lat.token_text(i) << "\n";
  }
  std::cout << "\nrelation matrix L (L[i][j] = relation between t_i and t_j):\n     ";
  for (Index j = 0; j < n; ++j) std::cout << "t" << j + 1 << (j + 1 > 9 ? " " : "  ");
  std::cout << "\n";
  for (Index i = 0; i < n; ++i) {
    std::cout << "  t" << i + 1 << (i + 1 > 9 ? "" : " ");
    for (Index j = 0; j < n; ++j) std::cout << " " << relation_name(rel.at(i, j)) << " ";
    std::cout << "\n";
  }
  std::cout << "\nporous mask (1 = direct attention, pivot column not shown):\n";
  for (Index i = 0; i < n; ++i) {
    std::cout << "  ";
    for (Index j = 0; j < n; ++j) std::cout << (rel.neighbor_mask(i, j) ? '1' : '.');
    std::cout << "\n";
  }
  return 0;
}

}  // namespace plte
