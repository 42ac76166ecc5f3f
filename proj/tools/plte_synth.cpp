#include "plte/data.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

// Writes a seeded synthetic corpus plus matching embedding and lexicon files,
// enough to drive train/eval/predict/bench end to end without external data.
int main(int argc, char** argv) {
  CLI::App app{"plte-synth: generate a synthetic corpus with lexicon and embeddings"};

  std::string out_dir = "synth";
  std::uint64_t seed = 1;
  plte::SyntheticSizes sizes;
  plte::SyntheticSpec spec;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--train", sizes.train, "training sentences");
  app.add_option("--dev", sizes.dev, "development sentences");
  app.add_option("--test", sizes.test, "test sentences");
  app.add_option("--min-len", spec.min_sentence_len, "minimum sentence length");
  app.add_option("--max-len", spec.max_sentence_len, "maximum sentence length");
  app.add_option("--lexicon-words", spec.lexicon_words, "lexicon size");

  CLI11_PARSE(app, argc, argv);

  try {
    plte::SyntheticData data = plte::generate_synthetic(seed, sizes, spec);
    std::filesystem::create_directories(out_dir);
    auto at = [&](const char* name) { return (std::filesystem::path(out_dir) / name).string(); };
    plte::write_conll(at("train.conll"), data.train);
    plte::write_conll(at("dev.conll"), data.dev);
    plte::write_conll(at("test.conll"), data.test);
    plte::write_word_list(at("lexicon.txt"), data.lexicon);
    plte::write_embeddings(at("char.vec"), data.chars.vocab, data.chars.table);
    plte::write_embeddings(at("bigram.vec"), data.bigrams.vocab, data.bigrams.table);
    plte::write_embeddings(at("word.vec"), data.words.vocab, data.words.table);
    std::cerr << "plte-synth: wrote " << data.train.size() << "/" << data.dev.size() << "/"
              << data.test.size() << " sentences to " << out_dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "plte-synth: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
