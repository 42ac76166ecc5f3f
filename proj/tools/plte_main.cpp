#include "plte/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"plte: lexicon-augmented character-level sequence labeling"};
  app.require_subcommand(1);

  plte::CliOptions opts;
  if (const char* env = std::getenv("PLTE_THREADS")) {
    opts.threads = std::max(1, std::atoi(env));
  }

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "key=value config file");
    sub->add_option("--seed", opts.seed, "random seed")->each([&](const std::string&) {
      opts.seed_set = true;
    });
    sub->add_option("--batch-size", opts.batch_size, "mini-batch size");
  };

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train);
  train->add_option("--train", opts.train_path, "training corpus (CoNLL)")->required();
  train->add_option("--dev", opts.dev_path, "development corpus (CoNLL)");
  train->add_option("--char-emb", opts.char_emb, "pretrained character embeddings");
  train->add_option("--bigram-emb", opts.bigram_emb, "pretrained bigram embeddings");
  train->add_option("--word-emb", opts.word_emb, "pretrained word embeddings");
  train->add_option("--lexicon", opts.lexicon_path, "lexicon word list");
  train->add_option("--model", opts.model_path, "output model path")->required();
  train->add_option("--ablate", opts.ablate, "no-lasa | no-porous | none")
      ->check(CLI::IsMember({"no-lasa", "no-porous", "none"}));

  CLI::App* eval = app.add_subcommand("eval", "evaluate a model on a tagged corpus");
  add_common(eval);
  eval->add_option("--model", opts.model_path, "model path")->required();
  eval->add_option("--test", opts.test_path, "test corpus (CoNLL)")->required();

  CLI::App* predict = app.add_subcommand("predict", "tag a corpus");
  add_common(predict);
  predict->add_option("--model", opts.model_path, "model path")->required();
  predict->add_option("--test", opts.test_path, "input corpus (CoNLL)")->required();
  predict->add_option("--out", opts.out_path, "output path (default stdout)");

  CLI::App* bench = app.add_subcommand("bench", "batched vs sequential throughput");
  add_common(bench);
  bench->add_option("--test", opts.test_path, "corpus to time (CoNLL)")->required();
  bench->add_option("--model", opts.model_path, "model path (default: fresh random model)");
  bench->add_option("--lexicon", opts.lexicon_path, "lexicon word list");
  bench->add_option("--char-emb", opts.char_emb, "pretrained character embeddings");
  bench->add_option("--bigram-emb", opts.bigram_emb, "pretrained bigram embeddings");
  bench->add_option("--word-emb", opts.word_emb, "pretrained word embeddings");
  bench->add_option("--ablate", opts.ablate, "no-lasa | no-porous | none")
      ->check(CLI::IsMember({"no-lasa", "no-porous", "none"}));
  bench->add_option("--bench-batches", opts.bench_batches, "comma list of batch sizes");
  bench->add_option("--reps", opts.reps, "repetitions (median reported)");

  CLI::App* inspect = app.add_subcommand("inspect", "dump lattice, relations and porous mask");
  inspect->add_option("sentence", opts.sentence, "UTF-8 sentence")->required();
  inspect->add_option("--lexicon", opts.lexicon_path, "lexicon word list");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return plte::cmd_train(opts);
    if (eval->parsed()) return plte::cmd_eval(opts);
    if (predict->parsed()) return plte::cmd_predict(opts);
    if (bench->parsed()) return plte::cmd_bench(opts);
    if (inspect->parsed()) return plte::cmd_inspect(opts);
  } catch (const std::exception& e) {
    std::cerr << "plte: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
