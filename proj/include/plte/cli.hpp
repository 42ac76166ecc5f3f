#pragma once

#include <cstdint>
#include <string>

namespace plte {

// Parsed command line, shared by the subcommands; unset strings stay empty.
struct CliOptions {
  std::string config_path;
  std::string train_path, dev_path, test_path;
  std::string char_emb, bigram_emb, word_emb;
  std::string lexicon_path;
  std::string model_path;
  std::string ablate = "none";
  std::string sentence;           // inspect
  std::string out_path;           // predict output; empty = stdout
  std::string bench_batches = "1,16";
  int reps = 3;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int batch_size = 0;  // 0 = config default
  int threads = 1;     // eval fan-out, capped by PLTE_THREADS
};

int cmd_train(const CliOptions& opts);
int cmd_eval(const CliOptions& opts);
int cmd_predict(const CliOptions& opts);
int cmd_bench(const CliOptions& opts);
int cmd_inspect(const CliOptions& opts);

}  // namespace plte
