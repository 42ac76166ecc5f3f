#include "plte/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

namespace plte {

using nlohmann::json;

EvalResult score_predictions(const std::vector<std::vector<std::string>>& gold,
                             const std::vector<std::vector<std::string>>& pred,
                             TagScheme scheme) {
  require(gold.size() == pred.size(), "score_predictions: corpus size mismatch");
  EvalResult res;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto ge = extract_entities(gold[i], scheme);
    auto pe = extract_entities(pred[i], scheme);
    std::set<Entity> gset(ge.begin(), ge.end());
    for (const Entity& e : ge) {
      ++res.total.gold;
      ++res.by_label[e.label].gold;
    }
    for (const Entity& e : pe) {
      ++res.total.predicted;
      ++res.by_label[e.label].predicted;
      if (gset.contains(e)) {
        ++res.total.matched;
        ++res.by_label[e.label].matched;
      }
    }
  }
  return res;
}

std::vector<std::vector<std::string>> predict_corpus(const Model& model,
                                                     std::span<const Prepared> corpus,
                                                     int batch_size, int threads) {
  require(batch_size >= 1, "predict_corpus: batch_size >= 1 required");
  std::vector<std::vector<std::string>> out(corpus.size());
  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t at = begin; at < end;) {
      std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch_size), end - at);
      std::vector<const Prepared*> ptrs;
      for (std::size_t k = 0; k < take; ++k) ptrs.push_back(&corpus[at + k]);
      Batch batch = pad_batch(model, ptrs);
      auto ids = batch_predict(model, batch);
      for (std::size_t k = 0; k < take; ++k) {
        std::vector<std::string> tags;
        tags.reserve(ids[k].size());
        for (int id : ids[k]) tags.push_back(model.tags[static_cast<std::size_t>(id)]);
        out[at + k] = std::move(tags);
      }
      at += take;
    }
  };
  threads = std::max(1, threads);
  if (threads == 1 || corpus.size() < 2) {
    run_range(0, corpus.size());
    return out;
  }
  std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), corpus.size());
  std::vector<std::thread> pool;
  std::size_t chunk = (corpus.size() + n_workers - 1) / n_workers;
  for (std::size_t w = 0; w < n_workers; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(corpus.size(), begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(run_range, begin, end);
  }
  for (auto& t : pool) t.join();
  return out;
}

EvalResult evaluate(const Model& model, std::span<const Prepared> corpus, int batch_size,
                    int threads) {
  auto pred = predict_corpus(model, corpus, batch_size, threads);
  std::vector<std::vector<std::string>> gold;
  gold.reserve(corpus.size());
  for (const Prepared& p : corpus) gold.push_back(p.gold_tags);
  return score_predictions(gold, pred, model.cfg.scheme);
}

// ---- training --------------------------------------------------------

namespace {

Scalar global_grad_norm(const std::vector<std::pair<std::string, Tensor>>& params) {
  Scalar sq = 0;
  for (const auto& [name, p] : params) {
    if (p.has_grad()) sq += p.grad().square().sum();
  }
  return std::sqrt(sq);
}

}  // namespace

std::vector<EpochMetrics> train(Model& model, std::span<const Prepared> train_set,
                                std::span<const Prepared> dev_set, const TrainConfig& cfg,
                                std::ostream* metrics_jsonl, const EpochCallback& on_epoch) {
  require(!train_set.empty(), "train: empty training set");
  for (const Prepared& p : train_set)
    require(!p.tag_ids.empty(), "train: a training sentence lacks usable gold tags");

  // the train config owns the dropout rates while training runs
  model.cfg.dropout_embed_gru = cfg.dropout_embed_gru;
  model.cfg.encoder.attn_dropout = cfg.dropout_encoder;

  auto params = model.parameters();
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochMetrics> history;
  Scalar best_f1 = -1.0;
  std::vector<ArrX> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (const auto& [name, p] : params) best_values.push_back(p.values());
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    const Scalar lr = cfg.learning_rate / (1.0 + cfg.lr_decay * epoch);
    std::shuffle(order.begin(), order.end(), rng);

    Scalar loss_sum = 0;
    int n_batches = 0;
    for (std::size_t at = 0; at < order.size();) {
      std::size_t take =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - at);
      std::vector<const Prepared*> ptrs;
      for (std::size_t k = 0; k < take; ++k) ptrs.push_back(&train_set[order[at + k]]);
      at += take;

      Batch batch = pad_batch(model, ptrs);
      Tape tape;
      Tensor loss = batch_nll(model, batch, true, &rng).loss;
      if (cfg.l2_lambda > 0.0) {
        Tensor sq;
        for (const auto& [name, p] : params) {
          Tensor term = sum_all(mul(p, p));
          sq = sq.defined() ? add(sq, term) : term;
        }
        loss = add(loss, scale(sq, cfg.l2_lambda / 2.0));
      }
      Scalar loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(n_batches));
      }
      loss_sum += loss_value;
      ++n_batches;

      backward(loss);
      if (cfg.clip_norm > 0.0) {
        Scalar norm = global_grad_norm(params);
        if (norm > cfg.clip_norm) {
          Scalar factor = cfg.clip_norm / norm;
          for (auto& [name, p] : params) {
            if (p.has_grad()) p.grad() *= factor;
          }
        }
      }
      for (auto& [name, p] : params) {
        if (p.has_grad()) p.values_mutable() -= lr * p.grad();
        p.zero_grad();
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = loss_sum / std::max(1, n_batches);
    if (!dev_set.empty()) m.dev = evaluate(model, dev_set, cfg.batch_size);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(m);

    if (!dev_set.empty() && m.dev.total.f1() > best_f1) {
      best_f1 = m.dev.total.f1();
      snapshot();
    }
    if (metrics_jsonl != nullptr) {
      json rec = {{"epoch", m.epoch},
                  {"lr", m.lr},
                  {"train_loss", m.train_loss},
                  {"dev_precision", m.dev.total.precision()},
                  {"dev_recall", m.dev.total.recall()},
                  {"dev_f1", m.dev.total.f1()},
                  {"seconds", m.seconds}};
      (*metrics_jsonl) << rec.dump() << "\n" << std::flush;
    }
    if (on_epoch && !on_epoch(m)) break;
  }

  if (!best_values.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i].second.values_mutable() = best_values[i];
  }
  return history;
}

// ---- persistence -----------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'L', 'T', 'E', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

json vocab_to_json(const Vocab& v) {
  json arr = json::array();
  for (const auto& s : v.entries()) arr.push_back(s);
  return arr;
}

Vocab vocab_from_json(const json& arr) {
  Vocab v;
  for (const auto& s : arr) v.add(s.get<std::string>());
  return v;
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  const auto params = model.parameters();
  json manifest;
  manifest["format"] = "plte-model";
  manifest["config"] = {{"d_model", model.cfg.encoder.d_model},
                        {"heads", model.cfg.encoder.heads},
                        {"layers", model.cfg.encoder.layers},
                        {"d_k", model.cfg.encoder.d_k},
                        {"d_v", model.cfg.encoder.d_v},
                        {"d_r", model.cfg.encoder.d_r},
                        {"attn_dropout", model.cfg.encoder.attn_dropout},
                        {"use_lasa", model.cfg.encoder.use_lasa},
                        {"use_porous", model.cfg.encoder.use_porous},
                        {"use_residual", model.cfg.encoder.use_residual},
                        {"use_layernorm", model.cfg.encoder.use_layernorm},
                        {"d_char", model.cfg.d_char},
                        {"d_bigram", model.cfg.d_bigram},
                        {"d_word", model.cfg.d_word},
                        {"gru_hidden", model.cfg.gru_hidden},
                        {"max_len", model.cfg.max_len},
                        {"scheme", to_string(model.cfg.scheme)},
                        {"dropout_embed_gru", model.cfg.dropout_embed_gru}};
  manifest["tags"] = model.tags;
  manifest["chars"] = vocab_to_json(model.chars);
  manifest["bigrams"] = vocab_to_json(model.bigrams);
  manifest["words"] = vocab_to_json(model.words);
  manifest["lexicon"] = model.lexicon_words;
  json plist = json::array();
  for (const auto& [name, p] : params) {
    json shape = json::array();
    for (Index d : p.shape()) shape.push_back(d);
    plist.push_back({{"name", name}, {"shape", shape}});
  }
  manifest["params"] = plist;

  std::string header = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "save_model: cannot open '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  std::uint32_t version = kFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  std::uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, p] : params) {
    out.write(reinterpret_cast<const char*>(p.values().data()),
              static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(p.size())));
  }
  require(out.good(), "save_model: write to '" + path + "' failed");
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load_model: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  require(in.gcount() == sizeof magic && std::memcmp(magic, kMagic, sizeof magic) == 0,
          "load_model: '" + path + "' is not a plte model file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  require(in.good() && version == kFormatVersion,
          "load_model: unsupported format version " + std::to_string(version));
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  require(in.good(), "load_model: truncated header length");
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  require(in.gcount() == static_cast<std::streamsize>(hlen), "load_model: truncated manifest");
  json manifest;
  try {
    manifest = json::parse(header);
  } catch (const std::exception& e) {
    throw std::runtime_error("load_model: bad manifest: " + std::string(e.what()));
  }

  const json& c = manifest.at("config");
  ModelConfig cfg;
  cfg.encoder.d_model = c.at("d_model").get<Index>();
  cfg.encoder.heads = c.at("heads").get<Index>();
  cfg.encoder.layers = c.at("layers").get<Index>();
  cfg.encoder.d_k = c.at("d_k").get<Index>();
  cfg.encoder.d_v = c.at("d_v").get<Index>();
  cfg.encoder.d_r = c.at("d_r").get<Index>();
  cfg.encoder.attn_dropout = c.at("attn_dropout").get<Scalar>();
  cfg.encoder.use_lasa = c.at("use_lasa").get<bool>();
  cfg.encoder.use_porous = c.at("use_porous").get<bool>();
  cfg.encoder.use_residual = c.at("use_residual").get<bool>();
  cfg.encoder.use_layernorm = c.at("use_layernorm").get<bool>();
  cfg.d_char = c.at("d_char").get<Index>();
  cfg.d_bigram = c.at("d_bigram").get<Index>();
  cfg.d_word = c.at("d_word").get<Index>();
  cfg.gru_hidden = c.at("gru_hidden").get<Index>();
  cfg.max_len = c.at("max_len").get<Index>();
  cfg.scheme = tag_scheme_from_string(c.at("scheme").get<std::string>());
  cfg.dropout_embed_gru = c.at("dropout_embed_gru").get<Scalar>();

  ModelInputs inputs;
  inputs.chars = vocab_from_json(manifest.at("chars"));
  inputs.bigrams = vocab_from_json(manifest.at("bigrams"));
  inputs.words = vocab_from_json(manifest.at("words"));
  inputs.tags = manifest.at("tags").get<std::vector<std::string>>();
  inputs.lexicon_words = manifest.at("lexicon").get<std::vector<std::string>>();
  Rng rng(0);
  Model model = init_model(cfg, std::move(inputs), rng);

  auto params = model.parameters();
  const json& plist = manifest.at("params");
  require(plist.size() == params.size(),
          "load_model: parameter count mismatch (file " + std::to_string(plist.size()) +
              ", config " + std::to_string(params.size()) + ")");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& entry = plist[i];
    require(entry.at("name").get<std::string>() == params[i].first,
            "load_model: parameter '" + params[i].first + "' missing or out of order");
    Shape shape;
    for (const auto& d : entry.at("shape")) shape.push_back(d.get<Index>());
    require(shape == params[i].second.shape(),
            "load_model: parameter '" + params[i].first + "' has shape " + shape_str(shape) +
                " in file but " + shape_str(params[i].second.shape()) + " in config");
    auto& values = params[i].second.values_mutable();
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(values.size())));
    require(in.gcount() ==
                static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(values.size())),
            "load_model: truncated values for parameter '" + params[i].first + "'");
  }
  return model;
}

}  // namespace plte
