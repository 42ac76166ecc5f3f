#pragma once

#include "plte/decoder.hpp"
#include "plte/encoder.hpp"
#include "plte/lattice.hpp"

#include <string>
#include <utility>
#include <vector>

namespace plte {

struct ModelConfig {
  EncoderConfig encoder;
  Index d_char = 50;
  Index d_bigram = 50;
  Index d_word = 50;
  Index gru_hidden = 100;
  Index max_len = 512;
  TagScheme scheme = TagScheme::BIOES;
  Scalar dropout_embed_gru = 0.5;
};

struct ModelInputs {
  Vocab chars, bigrams, words;
  // Pretrained tables, row 0 = unknown; undefined tensors mean random init.
  Tensor char_init, bigram_init, word_init;
  std::vector<std::string> tags;
  std::vector<std::string> lexicon_words;
};

struct Model {
  ModelConfig cfg;
  Vocab chars, bigrams, words;
  std::vector<std::string> tags;
  std::vector<std::string> lexicon_words;
  Lexicon lexicon;
  EmbeddingTables tables;
  EncoderParams encoder;
  GruParams gru;
  CrfParams crf;

  int tag_id(const std::string& tag) const;  // -1 when unknown
  Index gru_input_dim() const { return cfg.d_char + cfg.d_bigram + cfg.encoder.d_model; }
  std::vector<std::pair<std::string, Tensor>> parameters() const;
};

Model init_model(const ModelConfig& cfg, ModelInputs inputs, Rng& rng);

// A sentence resolved against the model's vocabularies and lexicon.
struct Prepared {
  LatticeSequence lat;
  RelationMatrix rel;
  std::vector<std::string> gold_tags;  // empty for untagged input
  std::vector<int> tag_ids;            // empty when tags are absent or unknown
};

Prepared prepare(const Model& model, const TaggedSentence& sentence);
std::vector<Prepared> prepare_corpus(const Model& model, const Corpus& corpus);

using IndexGrid = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IntGrid = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Padded batch. Attention masks keep padded keys invisible, GRU states carry
// through past each sentence's length, and CRF scores run over true lengths
// only, so padded content never reaches a real output.
struct Batch {
  IndexGrid char_ids;    // B x M_max, pad 0
  IndexGrid bigram_ids;  // B x M_max, pad 0
  IndexGrid word_ids;    // B x W_max, pad 0
  IndexGrid word_pos;    // B x W_max, pad 1
  std::vector<RelationGrid> relations;  // per sentence, N_max x N_max, pad r7
  BoolArr token_valid;                  // B x N_max
  IntGrid gold;                         // B x M_max, -1 where absent
  std::vector<int> char_len;            // M per sentence
  std::vector<int> word_len;            // word count per sentence
  Index m_max = 0, w_max = 0, n_max = 0;

  Index size() const { return static_cast<Index>(char_len.size()); }
  bool has_gold() const;
};

Batch pad_batch(const Model& model, const std::vector<const Prepared*>& sentences);

struct BatchForward {
  Tensor loss;          // 1 x 1, mean nll over the batch
  Tensor per_sentence;  // B x 1
};

BatchForward batch_nll(const Model& model, const Batch& batch, bool training, Rng* rng);
std::vector<std::vector<int>> batch_predict(const Model& model, const Batch& batch);

// Single-sentence entry points; a batch of one runs the identical path.
Tensor sentence_nll(const Model& model, const Prepared& sentence, bool training, Rng* rng);
std::vector<int> predict_tags(const Model& model, const Prepared& sentence);

}  // namespace plte
