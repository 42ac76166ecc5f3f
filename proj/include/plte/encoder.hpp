#pragma once

#include "plte/lattice.hpp"
#include "plte/tensor.hpp"

#include <optional>
#include <vector>

namespace plte {

struct EncoderConfig {
  Index d_model = 128;
  Index heads = 6;
  Index layers = 1;
  // Per-head key/value widths; 0 resolves to d_model / heads (floor).
  Index d_k = 0;
  Index d_v = 0;
  // Relation embedding width. The score contraction ties it to the per-head
  // widths, so a nonzero value must equal both of them; 0 follows along.
  Index d_r = 0;
  Scalar attn_dropout = 0.3;
  bool use_lasa = true;
  bool use_porous = true;
  bool use_residual = false;
  bool use_layernorm = false;

  Index head_dk() const { return d_k > 0 ? d_k : d_model / heads; }
  Index head_dv() const { return d_v > 0 ? d_v : d_model / heads; }
  void validate() const;
};

// Vocabulary tables plus the projections that unify character (d_c + d_b)
// and word (d_w) inputs to d_model. Row 0 of each vocabulary table is the
// unknown-token row. The two 8-row relation tables (key side and value
// side) exist only when LASA is enabled.
struct EmbeddingTables {
  Tensor char_table;      // |Vc| x d_c
  Tensor bigram_table;    // |Vb| x d_b
  Tensor word_table;      // |Vw| x d_w
  Tensor position_table;  // (max_len + 1) x d_model, row 0 unused
  Tensor char_proj;       // (d_c + d_b) x d_model
  Tensor word_proj;       // d_w x d_model
  Tensor relation_key;    // 8 x d_k
  Tensor relation_value;  // 8 x d_v

  Index max_len() const { return position_table.dim(0) - 1; }
};

struct HeadParams {
  Tensor wq, wk, wv;  // d_model x d_k / d_k / d_v
};

struct EncoderLayerParams {
  std::vector<HeadParams> heads;
  Tensor wo;  // (H * d_v) x d_model
  Tensor ln_gain, ln_bias;  // defined only with use_layernorm
};

struct EncoderParams {
  std::vector<EncoderLayerParams> layers;
};

EncoderParams init_encoder_params(const EncoderConfig& cfg, Rng& rng);

// Per-character raw input x^c = char embedding (+) bigram embedding; also
// the character half of the BiGRU input downstream.
Tensor char_bigram_embed(const LatticeSequence& lat, const EmbeddingTables& tables);

// Token embedding assembly: projected semantic embedding plus the position
// embedding row for the token's lattice position.
Tensor embed_tokens(const LatticeSequence& lat, const EmbeddingTables& tables);

struct RelationTensors {
  Tensor key;    // N' x N' x d_k
  Tensor value;  // N' x N' x d_v
};

// Looks the relation grid up in the two 8-row tables. With pivot, row and
// column N+1 carry relation ID 8.
RelationTensors expand_relations(const RelationMatrix& rel, const Tensor& key_table,
                                 const Tensor& value_table, bool pivot);
// Same over the top-left n x n block of a (possibly padded) grid.
RelationTensors expand_relations_block(const RelationGrid& ids, Index n, const Tensor& key_table,
                                       const Tensor& value_table, bool pivot);

// Captured attention internals, used by diagnostics and tests.
struct AttentionTrace {
  std::vector<Tensor> scores;  // per head, pre-softmax (scaled)
  std::vector<Tensor> alpha;   // per head, post-softmax
  Index key_count = 0;
  bool pivot_used = false;
};

// Single-head lattice-aware attention. x holds N' = mask.cols() key/value
// rows; only the first mask.rows() = N rows act as queries (the pivot, when
// present, is key/value only). rk/rv may be null (relation bias omitted).
Tensor lattice_attention(const Tensor& x, const HeadParams& head, const Tensor* rk,
                         const Tensor* rv, const BoolArr& mask, Scalar attn_dropout = 0.0,
                         bool training = false, Rng* rng = nullptr,
                         AttentionTrace* trace = nullptr);

// Porous multi-head attention over one layer: pivot s = mean of the layer
// input appended as key/value N+1 with relation ID 8, direct attention
// restricted to the neighbor mask, heads concatenated through W^O. Without
// use_porous the mask is all-true and no pivot is appended; without
// use_lasa the relation bias is omitted.
Tensor porous_multihead(const Tensor& x, const RelationMatrix& rel,
                        const EncoderLayerParams& layer, const EmbeddingTables& tables,
                        const EncoderConfig& cfg, bool training = false, Rng* rng = nullptr,
                        AttentionTrace* trace = nullptr);

// Full encoder: embed, `layers` rounds of porous multi-head attention, then
// only the M character states are returned; word rows are computed but
// dropped at the output boundary.
Tensor encode(const LatticeSequence& lat, const EmbeddingTables& tables,
              const EncoderParams& params, const EncoderConfig& cfg, bool training = false,
              Rng* rng = nullptr, Scalar embed_dropout = 0.0);

}  // namespace plte
