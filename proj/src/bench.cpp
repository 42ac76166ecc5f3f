#include "plte/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ostream>

namespace plte {

namespace {

constexpr int kBucketEdges[][2] = {{1, 20}, {21, 40}, {41, 60}, {61, 80}, {81, 0}};

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::vector<std::vector<int>> predict_all(const Model& model,
                                          std::span<const Prepared* const> sentences,
                                          int batch_size) {
  std::vector<std::vector<int>> out;
  out.reserve(sentences.size());
  for (std::size_t at = 0; at < sentences.size();) {
    std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                                             sentences.size() - at);
    std::vector<const Prepared*> ptrs(sentences.begin() + static_cast<std::ptrdiff_t>(at),
                                      sentences.begin() + static_cast<std::ptrdiff_t>(at + take));
    for (auto& tags : batch_predict(model, pad_batch(model, ptrs))) out.push_back(std::move(tags));
    at += take;
  }
  return out;
}

double time_sen_per_s(const Model& model, std::span<const Prepared* const> sentences,
                      int batch_size) {
  auto t0 = std::chrono::steady_clock::now();
  predict_all(model, sentences, batch_size);
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return static_cast<double>(sentences.size()) / dt;
}

}  // namespace

BenchReport run_bench(const Model& model, std::span<const Prepared> corpus,
                      const BenchOptions& opts) {
  require(!corpus.empty(), "run_bench: empty corpus");
  require(opts.repetitions >= 1, "run_bench: repetitions >= 1 required");
  require(!opts.batch_sizes.empty(), "run_bench: no batch sizes");

  std::vector<const Prepared*> all;
  for (const Prepared& p : corpus) all.push_back(&p);

  BenchReport report;
  report.sentences = static_cast<long>(corpus.size());
  report.repetitions = opts.repetitions;

  // correctness gate before any timing
  auto reference = predict_all(model, all, 1);
  for (int bs : opts.batch_sizes) {
    if (bs == 1) continue;
    require(bs >= 1, "run_bench: batch size must be >= 1");
    if (predict_all(model, all, bs) != reference) {
      report.gate_passed = false;
      return report;
    }
  }
  report.gate_passed = true;

  std::vector<std::vector<const Prepared*>> buckets(std::size(kBucketEdges));
  for (const Prepared* p : all) {
    int len = static_cast<int>(p->lat.char_count());
    for (std::size_t b = 0; b < std::size(kBucketEdges); ++b) {
      if (len >= kBucketEdges[b][0] && (kBucketEdges[b][1] == 0 || len <= kBucketEdges[b][1])) {
        buckets[b].push_back(p);
        break;
      }
    }
  }

  double base = 0;
  for (int bs : opts.batch_sizes) {
    BenchRow row;
    row.batch_size = bs;
    std::vector<double> reps;
    for (int r = 0; r < opts.repetitions; ++r) reps.push_back(time_sen_per_s(model, all, bs));
    row.sen_per_s = median(reps);
    if (bs == 1) base = row.sen_per_s;
    if (base > 0) row.speedup_vs_b1 = row.sen_per_s / base;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      BenchBucket bucket;
      bucket.lo = kBucketEdges[b][0];
      bucket.hi = kBucketEdges[b][1];
      bucket.sentences = static_cast<long>(buckets[b].size());
      if (!buckets[b].empty()) {
        std::vector<double> breps;
        for (int r = 0; r < opts.repetitions; ++r)
          breps.push_back(time_sen_per_s(model, buckets[b], bs));
        bucket.sen_per_s = median(breps);
      }
      row.buckets.push_back(bucket);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void print_bench(const BenchReport& report, std::ostream& out) {
  out << "bench: " << report.sentences << " sentences, median of " << report.repetitions
      << " repetitions, prediction-equality gate "
      << (report.gate_passed ? "passed" : "FAILED") << "\n";
  if (!report.gate_passed) return;
  out << "batch_size   sen/s      speedup_vs_b1";
  for (const BenchBucket& b : report.rows.front().buckets) {
    out << "   len" << b.lo << (b.hi == 0 ? "+" : "-" + std::to_string(b.hi));
  }
  out << "\n";
  for (const BenchRow& row : report.rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-12d %-10.1f %-13.2f", row.batch_size, row.sen_per_s,
                  row.speedup_vs_b1);
    out << buf;
    for (const BenchBucket& b : row.buckets) {
      std::snprintf(buf, sizeof buf, "   %.1f", b.sen_per_s);
      out << buf;
    }
    out << "\n";
  }
  for (const BenchRow& row : report.rows) {
    nlohmann::json rec = {{"batch_size", row.batch_size},
                          {"sen_per_s", row.sen_per_s},
                          {"speedup_vs_b1", row.speedup_vs_b1},
                          {"sentences", report.sentences},
                          {"repetitions", report.repetitions}};
    nlohmann::json jbuckets = nlohmann::json::array();
    for (const BenchBucket& b : row.buckets) {
      jbuckets.push_back({{"lo", b.lo}, {"hi", b.hi}, {"sentences", b.sentences},
                          {"sen_per_s", b.sen_per_s}});
    }
    rec["buckets"] = jbuckets;
    out << rec.dump() << "\n";
  }
}

}  // namespace plte
