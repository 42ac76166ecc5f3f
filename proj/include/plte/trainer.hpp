#pragma once

#include "plte/model.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <span>

namespace plte {

struct TrainConfig {
  Scalar learning_rate = 0.045;
  Scalar lr_decay = 0.05;  // epoch e runs at lr / (1 + lr_decay * e)
  Scalar l2_lambda = 0.0;
  int epochs = 50;
  int batch_size = 16;
  Scalar dropout_embed_gru = 0.5;
  Scalar dropout_encoder = 0.3;
  std::uint64_t seed = 1;
  Index gru_hidden = 100;
  Scalar clip_norm = 5.0;  // global-norm gradient clip; <= 0 disables
};

struct LabelScore {
  long gold = 0;
  long predicted = 0;
  long matched = 0;

  Scalar precision() const { return predicted == 0 ? 0.0 : static_cast<Scalar>(matched) / predicted; }
  Scalar recall() const { return gold == 0 ? 0.0 : static_cast<Scalar>(matched) / gold; }
  Scalar f1() const {
    Scalar p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2 * p * r / (p + r);
  }
};

// Entity-level micro-averaged scores (exact span + label match).
struct EvalResult {
  LabelScore total;
  std::map<std::string, LabelScore> by_label;
};

EvalResult score_predictions(const std::vector<std::vector<std::string>>& gold,
                             const std::vector<std::vector<std::string>>& pred,
                             TagScheme scheme);

// Viterbi tags for a corpus, batched; threads > 1 fans sentences out across
// workers (parameters are read-only) and reassembles results in input order.
std::vector<std::vector<std::string>> predict_corpus(const Model& model,
                                                     std::span<const Prepared> corpus,
                                                     int batch_size = 16, int threads = 1);

EvalResult evaluate(const Model& model, std::span<const Prepared> corpus, int batch_size = 16,
                    int threads = 1);

struct EpochMetrics {
  int epoch = 0;
  Scalar lr = 0;
  Scalar train_loss = 0;
  EvalResult dev;
  double seconds = 0;
};

// Returning false stops training after the current epoch.
using EpochCallback = std::function<bool(const EpochMetrics&)>;

// Mini-batch SGD on mean nll + (lambda/2)*||params||^2, per-epoch lr decay,
// seeded shuffling, global-norm clipping. When a dev set is present the
// parameters are restored to the best dev-F1 epoch before returning. Writes
// one JSON line per epoch to metrics_jsonl when given. Aborts with a
// diagnostic if the loss turns non-finite.
std::vector<EpochMetrics> train(Model& model, std::span<const Prepared> train_set,
                                std::span<const Prepared> dev_set, const TrainConfig& cfg,
                                std::ostream* metrics_jsonl = nullptr,
                                const EpochCallback& on_epoch = nullptr);

// Versioned binary container with a JSON manifest (config, vocabularies,
// tag set, lexicon, parameter shapes) followed by raw little-endian doubles.
// Round trips are bit-exact.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace plte
