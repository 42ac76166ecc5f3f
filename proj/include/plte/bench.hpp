#pragma once

#include "plte/model.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace plte {

struct BenchOptions {
  std::vector<int> batch_sizes = {1, 16};
  int repetitions = 3;
};

struct BenchBucket {
  int lo = 0;       // sentence-length bucket, inclusive
  int hi = 0;       // 0 means open-ended
  long sentences = 0;
  double sen_per_s = 0;
};

struct BenchRow {
  int batch_size = 0;
  double sen_per_s = 0;      // median over repetitions
  double speedup_vs_b1 = 0;  // 0 until batch size 1 is present
  std::vector<BenchBucket> buckets;
};

struct BenchReport {
  bool gate_passed = false;  // batched == batch-1 predictions, checked first
  long sentences = 0;
  int repetitions = 0;
  std::vector<BenchRow> rows;
};

// Times Viterbi prediction throughput over the corpus per batch size and per
// sentence-length bucket (<=20, 21-40, 41-60, 61-80, >80). The prediction
// equality gate runs before any timing; timing covers padding and the
// forward pass but not lattice construction or model setup.
BenchReport run_bench(const Model& model, std::span<const Prepared> corpus,
                      const BenchOptions& opts);

// Text table plus one JSON line per batch size.
void print_bench(const BenchReport& report, std::ostream& out);

}  // namespace plte
