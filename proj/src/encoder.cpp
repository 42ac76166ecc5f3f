#include "plte/encoder.hpp"

#include <cmath>

namespace plte {

void EncoderConfig::validate() const {
  require(d_model >= 1 && heads >= 1 && layers >= 1, "encoder config: positive dims required");
  require(head_dk() >= 1 && head_dv() >= 1, "encoder config: d_model too small for head count");
  require(attn_dropout >= 0.0 && attn_dropout < 1.0, "encoder config: dropout must lie in [0, 1)");
  if (d_r > 0) {
    require(d_r == head_dk() && d_r == head_dv(),
            "encoder config: d_r must match the per-head key/value width");
  }
}

EncoderParams init_encoder_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderParams params;
  for (Index l = 0; l < cfg.layers; ++l) {
    EncoderLayerParams layer;
    for (Index h = 0; h < cfg.heads; ++h) {
      HeadParams head;
      head.wq = glorot_init(cfg.d_model, cfg.head_dk(), rng);
      head.wk = glorot_init(cfg.d_model, cfg.head_dk(), rng);
      head.wv = glorot_init(cfg.d_model, cfg.head_dv(), rng);
      layer.heads.push_back(std::move(head));
    }
    layer.wo = glorot_init(cfg.heads * cfg.head_dv(), cfg.d_model, rng);
    if (cfg.use_layernorm) {
      layer.ln_gain = Tensor::leaf({1, cfg.d_model}, ArrX::Ones(cfg.d_model), true);
      layer.ln_bias = Tensor::leaf({1, cfg.d_model}, ArrX::Zero(cfg.d_model), true);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Tensor char_bigram_embed(const LatticeSequence& lat, const EmbeddingTables& tables) {
  Tensor ch = gather_rows(tables.char_table, lat.char_ids);
  Tensor bi = gather_rows(tables.bigram_table, lat.bigram_ids);
  std::vector<Tensor> parts = {ch, bi};
  return concat(parts, 1);
}

Tensor embed_tokens(const LatticeSequence& lat, const EmbeddingTables& tables) {
  for (Index pos : lat.positions) {
    require(pos >= 1 && pos <= tables.max_len(),
            "embed_tokens: position " + std::to_string(pos) + " exceeds max_len " +
                std::to_string(tables.max_len()));
  }
  Tensor char_tok = matmul(char_bigram_embed(lat, tables), tables.char_proj);
  Tensor tokens = char_tok;
  if (!lat.words.empty()) {
    std::vector<Index> word_ids;
    for (const auto& w : lat.words) word_ids.push_back(w.word_id);
    Tensor word_tok = matmul(gather_rows(tables.word_table, word_ids), tables.word_proj);
    std::vector<Tensor> parts = {char_tok, word_tok};
    tokens = concat(parts, 0);
  }
  Tensor pos = gather_rows(tables.position_table, lat.positions);
  return add(tokens, pos);
}

RelationTensors expand_relations_block(const RelationGrid& ids, Index n, const Tensor& key_table,
                                       const Tensor& value_table, bool pivot) {
  require(ids.rows() >= n && ids.cols() >= n, "expand_relations: grid smaller than n");
  const Index np = pivot ? n + 1 : n;
  std::vector<Index> rows_ids;
  rows_ids.reserve(static_cast<std::size_t>(np * np));
  const Index pivot_row = static_cast<Index>(RelationId::pivot) - 1;
  for (Index i = 0; i < np; ++i) {
    for (Index j = 0; j < np; ++j) {
      if (i < n && j < n) {
        rows_ids.push_back(static_cast<Index>(ids(i, j)) - 1);
      } else {
        rows_ids.push_back(pivot_row);
      }
    }
  }
  RelationTensors out;
  out.key = reshape(gather_rows(key_table, rows_ids), {np, np, key_table.dim(1)});
  out.value = reshape(gather_rows(value_table, rows_ids), {np, np, value_table.dim(1)});
  return out;
}

RelationTensors expand_relations(const RelationMatrix& rel, const Tensor& key_table,
                                 const Tensor& value_table, bool pivot) {
  return expand_relations_block(rel.ids, rel.size(), key_table, value_table, pivot);
}

Tensor lattice_attention(const Tensor& x, const HeadParams& head, const Tensor* rk,
                         const Tensor* rv, const BoolArr& mask, Scalar attn_dropout,
                         bool training, Rng* rng, AttentionTrace* trace) {
  const Index n_query = mask.rows();
  const Index n_key = mask.cols();
  require(x.rank() == 2 && x.dim(0) == n_key, "lattice_attention: x rows must match mask cols");
  const Index dk = head.wq.dim(1);

  Tensor q = matmul(rows(x, 0, n_query), head.wq);
  Tensor k = matmul(x, head.wk);
  Tensor v = matmul(x, head.wv);

  Tensor scores = matmul(q, transpose(k));
  if (rk != nullptr) {
    require(rk->rank() == 3 && rk->dim(0) >= n_query && rk->dim(1) == n_key && rk->dim(2) == dk,
            "lattice_attention: relation key tensor shape mismatch");
    scores = add(scores, relation_score_bias(q, rows(*rk, 0, n_query)));
  }
  scores = scale(scores, 1.0 / std::sqrt(static_cast<Scalar>(dk)));
  Tensor alpha = softmax_rows(scores, &mask);
  if (trace != nullptr) {
    trace->scores.push_back(scores);
    trace->alpha.push_back(alpha);
  }
  if (attn_dropout > 0.0 && training) {
    require(rng != nullptr, "lattice_attention: dropout needs an rng");
    alpha = dropout(alpha, attn_dropout, training, *rng);
  }
  Tensor out = matmul(alpha, v);
  if (rv != nullptr) {
    require(rv->rank() == 3 && rv->dim(0) >= n_query && rv->dim(1) == n_key,
            "lattice_attention: relation value tensor shape mismatch");
    out = add(out, relation_value_bias(alpha, rows(*rv, 0, n_query)));
  }
  return out;
}

Tensor porous_multihead(const Tensor& x, const RelationMatrix& rel,
                        const EncoderLayerParams& layer, const EmbeddingTables& tables,
                        const EncoderConfig& cfg, bool training, Rng* rng,
                        AttentionTrace* trace) {
  const Index n = x.dim(0);
  require(rel.size() == n, "porous_multihead: relation matrix size mismatch");

  Tensor keys = x;
  BoolArr mask;
  if (cfg.use_porous) {
    // the pivot is recomputed per layer from this layer's input
    Tensor pivot = mean_rows(x);
    std::vector<Tensor> parts = {x, pivot};
    keys = concat(parts, 0);
    mask = BoolArr::Constant(n, n + 1, true);
    mask.leftCols(n) = rel.neighbor_mask;
  } else {
    mask = BoolArr::Constant(n, n, true);
  }
  if (trace != nullptr) {
    trace->key_count = mask.cols();
    trace->pivot_used = cfg.use_porous;
  }

  RelationTensors rt;
  const Tensor* rk = nullptr;
  const Tensor* rv = nullptr;
  if (cfg.use_lasa) {
    rt = expand_relations(rel, tables.relation_key, tables.relation_value, cfg.use_porous);
    rk = &rt.key;
    rv = &rt.value;
  }

  std::vector<Tensor> zs;
  for (const HeadParams& head : layer.heads) {
    zs.push_back(
        lattice_attention(keys, head, rk, rv, mask, cfg.attn_dropout, training, rng, trace));
  }
  Tensor out = matmul(concat(zs, 1), layer.wo);
  if (cfg.use_residual) out = add(out, x);
  if (cfg.use_layernorm) out = layernorm_rows(out, layer.ln_gain, layer.ln_bias);
  return out;
}

Tensor encode(const LatticeSequence& lat, const EmbeddingTables& tables,
              const EncoderParams& params, const EncoderConfig& cfg, bool training, Rng* rng,
              Scalar embed_dropout) {
  RelationMatrix rel = build_relation_matrix(lat);
  Tensor x = embed_tokens(lat, tables);
  if (embed_dropout > 0.0 && training) {
    require(rng != nullptr, "encode: dropout needs an rng");
    x = dropout(x, embed_dropout, training, *rng);
  }
  for (const EncoderLayerParams& layer : params.layers) {
    x = porous_multihead(x, rel, layer, tables, cfg, training, rng);
  }
  return rows(x, 0, lat.char_count());
}

}  // namespace plte
