#include "plte/model.hpp"

#include <algorithm>
#include <cmath>

namespace plte {

int Model::tag_id(const std::string& tag) const {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::pair<std::string, Tensor>> Model::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tables.char", tables.char_table);
  out.emplace_back("tables.bigram", tables.bigram_table);
  out.emplace_back("tables.word", tables.word_table);
  out.emplace_back("tables.position", tables.position_table);
  out.emplace_back("tables.char_proj", tables.char_proj);
  out.emplace_back("tables.word_proj", tables.word_proj);
  if (cfg.encoder.use_lasa) {
    out.emplace_back("tables.relation_key", tables.relation_key);
    out.emplace_back("tables.relation_value", tables.relation_value);
  }
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    const auto& layer = encoder.layers[l];
    std::string base = "encoder.l" + std::to_string(l);
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      std::string hb = base + ".h" + std::to_string(h);
      out.emplace_back(hb + ".wq", layer.heads[h].wq);
      out.emplace_back(hb + ".wk", layer.heads[h].wk);
      out.emplace_back(hb + ".wv", layer.heads[h].wv);
    }
    out.emplace_back(base + ".wo", layer.wo);
    if (cfg.encoder.use_layernorm) {
      out.emplace_back(base + ".ln_gain", layer.ln_gain);
      out.emplace_back(base + ".ln_bias", layer.ln_bias);
    }
  }
  auto cell = [&out](const std::string& base, const GruCell& c) {
    out.emplace_back(base + ".wz", c.wz);
    out.emplace_back(base + ".uz", c.uz);
    out.emplace_back(base + ".bz", c.bz);
    out.emplace_back(base + ".wr", c.wr);
    out.emplace_back(base + ".ur", c.ur);
    out.emplace_back(base + ".br", c.br);
    out.emplace_back(base + ".wh", c.wh);
    out.emplace_back(base + ".uh", c.uh);
    out.emplace_back(base + ".bh", c.bh);
  };
  cell("gru.fwd", gru.fwd);
  cell("gru.bwd", gru.bwd);
  out.emplace_back("crf.emit", crf.emit);
  out.emplace_back("crf.trans", crf.trans);
  return out;
}

namespace {

Tensor table_or_random(const Tensor& init, Index vocab_size, Index dim, Rng& rng) {
  if (init.defined()) {
    require(init.dim(0) == vocab_size && init.dim(1) == dim,
            "init_model: pretrained table shape " + shape_str(init.shape()) +
                " does not match vocab/dim [" + std::to_string(vocab_size) + "x" +
                std::to_string(dim) + "]");
    Tensor t = init.clone();
    t.set_requires_grad(true);  // embeddings are fine-tuned during training
    return t;
  }
  Tensor t = uniform_init({vocab_size, dim}, 0.1, rng);
  t.values_mutable().segment(0, dim).setZero();  // unknown row
  return t;
}

}  // namespace

Model init_model(const ModelConfig& cfg, ModelInputs inputs, Rng& rng) {
  cfg.encoder.validate();
  require(!inputs.tags.empty(), "init_model: tag set is empty");
  Model m;
  m.cfg = cfg;
  if (inputs.char_init.defined()) m.cfg.d_char = inputs.char_init.dim(1);
  if (inputs.bigram_init.defined()) m.cfg.d_bigram = inputs.bigram_init.dim(1);
  if (inputs.word_init.defined()) m.cfg.d_word = inputs.word_init.dim(1);
  m.chars = std::move(inputs.chars);
  m.bigrams = std::move(inputs.bigrams);
  m.words = std::move(inputs.words);
  m.tags = std::move(inputs.tags);
  m.lexicon_words = std::move(inputs.lexicon_words);
  for (const auto& w : m.lexicon_words) {
    std::u32string u = utf8_decode(w);
    if (u.size() >= 2) m.lexicon.insert(u, m.words.lookup(w));
  }

  m.tables.char_table = table_or_random(inputs.char_init, m.chars.size(), m.cfg.d_char, rng);
  m.tables.bigram_table =
      table_or_random(inputs.bigram_init, m.bigrams.size(), m.cfg.d_bigram, rng);
  m.tables.word_table = table_or_random(inputs.word_init, m.words.size(), m.cfg.d_word, rng);
  m.tables.position_table = uniform_init({m.cfg.max_len + 1, cfg.encoder.d_model}, 0.1, rng);
  m.tables.char_proj = glorot_init(m.cfg.d_char + m.cfg.d_bigram, cfg.encoder.d_model, rng);
  m.tables.word_proj = glorot_init(m.cfg.d_word, cfg.encoder.d_model, rng);
  if (cfg.encoder.use_lasa) {
    m.tables.relation_key = uniform_init({8, cfg.encoder.head_dk()}, 0.1, rng);
    m.tables.relation_value = uniform_init({8, cfg.encoder.head_dv()}, 0.1, rng);
  }
  m.encoder = init_encoder_params(cfg.encoder, rng);
  m.gru = init_gru(m.gru_input_dim(), cfg.gru_hidden, rng);
  m.crf = init_crf(2 * cfg.gru_hidden, static_cast<Index>(m.tags.size()), rng);
  return m;
}

Prepared prepare(const Model& model, const TaggedSentence& sentence) {
  require(!sentence.chars.empty(), "prepare: empty sentence");
  require(static_cast<Index>(sentence.chars.size()) <= model.cfg.max_len,
          "prepare: sentence length " + std::to_string(sentence.chars.size()) +
              " exceeds max_len " + std::to_string(model.cfg.max_len));
  Prepared p;
  p.lat = build_lattice(sentence.chars, model.lexicon, model.chars, model.bigrams);
  p.rel = build_relation_matrix(p.lat);
  p.gold_tags = sentence.tags;
  if (!sentence.tags.empty()) {
    require(sentence.tags.size() == sentence.chars.size(), "prepare: tag/char length mismatch");
    std::vector<int> ids;
    ids.reserve(sentence.tags.size());
    for (const auto& t : sentence.tags) {
      int id = model.tag_id(t);
      if (id < 0) {
        ids.clear();
        break;  // unknown tag: keep the strings, loss is unavailable
      }
      ids.push_back(id);
    }
    p.tag_ids = std::move(ids);
  }
  return p;
}

std::vector<Prepared> prepare_corpus(const Model& model, const Corpus& corpus) {
  std::vector<Prepared> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(prepare(model, s));
  return out;
}

bool Batch::has_gold() const {
  for (Index s = 0; s < size(); ++s) {
    for (int i = 0; i < char_len[static_cast<std::size_t>(s)]; ++i) {
      if (gold(s, i) < 0) return false;
    }
  }
  return true;
}

Batch pad_batch(const Model& model, const std::vector<const Prepared*>& sentences) {
  (void)model;
  require(!sentences.empty(), "pad_batch: empty batch");
  Batch b;
  const Index bsz = static_cast<Index>(sentences.size());
  for (const Prepared* p : sentences) {
    b.char_len.push_back(static_cast<int>(p->lat.char_count()));
    b.word_len.push_back(static_cast<int>(p->lat.words.size()));
    b.m_max = std::max<Index>(b.m_max, p->lat.char_count());
    b.w_max = std::max<Index>(b.w_max, static_cast<Index>(p->lat.words.size()));
    b.n_max = std::max<Index>(b.n_max, p->lat.token_count());
  }
  b.char_ids = IndexGrid::Zero(bsz, b.m_max);
  b.bigram_ids = IndexGrid::Zero(bsz, b.m_max);
  b.word_ids = IndexGrid::Zero(bsz, std::max<Index>(b.w_max, 1));
  b.word_pos = IndexGrid::Constant(bsz, std::max<Index>(b.w_max, 1), 1);
  b.gold = IntGrid::Constant(bsz, b.m_max, -1);
  b.token_valid = BoolArr::Constant(bsz, b.n_max, false);
  for (Index s = 0; s < bsz; ++s) {
    const Prepared& p = *sentences[static_cast<std::size_t>(s)];
    const Index m = p.lat.char_count();
    for (Index i = 0; i < m; ++i) {
      b.char_ids(s, i) = p.lat.char_ids[static_cast<std::size_t>(i)];
      b.bigram_ids(s, i) = p.lat.bigram_ids[static_cast<std::size_t>(i)];
    }
    for (std::size_t w = 0; w < p.lat.words.size(); ++w) {
      b.word_ids(s, static_cast<Index>(w)) = p.lat.words[w].word_id;
      b.word_pos(s, static_cast<Index>(w)) = p.lat.words[w].span.p;
    }
    for (std::size_t i = 0; i < p.tag_ids.size(); ++i)
      b.gold(s, static_cast<Index>(i)) = p.tag_ids[i];
    b.token_valid.row(s).segment(0, p.lat.token_count()) = true;
    RelationGrid grid = RelationGrid::Constant(
        b.n_max, b.n_max, static_cast<std::uint8_t>(RelationId::r7));
    grid.topLeftCorner(p.rel.size(), p.rel.size()) = p.rel.ids;
    b.relations.push_back(std::move(grid));
  }
  return b;
}

namespace {

struct BatchPlan {
  std::vector<Index> tok_off;  // token-stacked row offset per sentence
  std::vector<Index> chr_off;  // char-stacked row offset per sentence
  std::vector<Index> n_tok;    // N per sentence
  Index total_tok = 0;
  Index total_chr = 0;
  Index total_word = 0;
};

BatchPlan plan_batch(const Batch& batch) {
  BatchPlan plan;
  for (Index s = 0; s < batch.size(); ++s) {
    int m = batch.char_len[static_cast<std::size_t>(s)];
    int w = batch.word_len[static_cast<std::size_t>(s)];
    plan.tok_off.push_back(plan.total_tok);
    plan.chr_off.push_back(plan.total_chr);
    plan.n_tok.push_back(m + w);
    plan.total_tok += m + w;
    plan.total_chr += m;
    plan.total_word += w;
  }
  return plan;
}

// Encodes the whole batch and returns time-major CRF emissions
// [(M_max * B) x Y]; row t*B + s belongs to sentence s at character t.
Tensor batch_emissions_tm(const Model& model, const Batch& batch, bool training, Rng* rng) {
  const EncoderConfig& enc = model.cfg.encoder;
  const Index bsz = batch.size();
  const BatchPlan plan = plan_batch(batch);

  // vocabulary lookups, sentence-major
  std::vector<Index> char_ids, bigram_ids, word_ids;
  char_ids.reserve(static_cast<std::size_t>(plan.total_chr));
  bigram_ids.reserve(static_cast<std::size_t>(plan.total_chr));
  word_ids.reserve(static_cast<std::size_t>(plan.total_word));
  std::vector<Index> pos_ids;
  pos_ids.reserve(static_cast<std::size_t>(plan.total_tok));
  for (Index s = 0; s < bsz; ++s) {
    const int m = batch.char_len[static_cast<std::size_t>(s)];
    const int w = batch.word_len[static_cast<std::size_t>(s)];
    for (int i = 0; i < m; ++i) {
      char_ids.push_back(batch.char_ids(s, i));
      bigram_ids.push_back(batch.bigram_ids(s, i));
      pos_ids.push_back(i + 1);
    }
    for (int k = 0; k < w; ++k) pos_ids.push_back(batch.word_pos(s, k));
  }
  for (Index pos : pos_ids) {
    require(pos >= 1 && pos <= model.tables.max_len(),
            "batch forward: position " + std::to_string(pos) + " exceeds max_len");
  }

  Tensor ch = gather_rows(model.tables.char_table, char_ids);
  Tensor bi = gather_rows(model.tables.bigram_table, bigram_ids);
  std::vector<Tensor> xc_parts = {ch, bi};
  Tensor xc = concat(xc_parts, 1);  // [sum(M) x (d_c + d_b)], reused by the GRU
  Tensor char_tok = matmul(xc, model.tables.char_proj);

  Tensor word_tok;
  if (plan.total_word > 0) {
    for (Index s = 0; s < bsz; ++s) {
      for (int k = 0; k < batch.word_len[static_cast<std::size_t>(s)]; ++k)
        word_ids.push_back(batch.word_ids(s, k));
    }
    word_tok = matmul(gather_rows(model.tables.word_table, word_ids), model.tables.word_proj);
  }

  // interleave per sentence: [chars of s, words of s]
  Tensor x;
  if (plan.total_word == 0) {
    x = char_tok;
  } else {
    std::vector<Tensor> tok_parts;
    Index woff = 0;
    for (Index s = 0; s < bsz; ++s) {
      const int m = batch.char_len[static_cast<std::size_t>(s)];
      const int w = batch.word_len[static_cast<std::size_t>(s)];
      tok_parts.push_back(rows(char_tok, plan.chr_off[static_cast<std::size_t>(s)], m));
      if (w > 0) {
        tok_parts.push_back(rows(word_tok, woff, w));
        woff += w;
      }
    }
    x = concat(tok_parts, 0);
  }
  x = add(x, gather_rows(model.tables.position_table, pos_ids));
  if (training && rng != nullptr)
    x = dropout(x, model.cfg.dropout_embed_gru, training, *rng);

  // per-sentence attention masks and relation tensors (shared across layers)
  std::vector<BoolArr> masks(static_cast<std::size_t>(bsz));
  std::vector<RelationTensors> rels(static_cast<std::size_t>(bsz));
  for (Index s = 0; s < bsz; ++s) {
    const Index n = plan.n_tok[static_cast<std::size_t>(s)];
    const RelationGrid& grid = batch.relations[static_cast<std::size_t>(s)];
    const Index nk = enc.use_porous ? n + 1 : n;
    BoolArr mask = BoolArr::Constant(n, nk, true);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        mask(i, j) = grid(i, j) != static_cast<std::uint8_t>(RelationId::r7);
      }
    }
    masks[static_cast<std::size_t>(s)] = std::move(mask);
    if (enc.use_lasa) {
      rels[static_cast<std::size_t>(s)] = expand_relations_block(
          grid, n, model.tables.relation_key, model.tables.relation_value, enc.use_porous);
    }
  }

  const Scalar inv_sqrt_dk = 1.0 / std::sqrt(static_cast<Scalar>(enc.head_dk()));
  for (const EncoderLayerParams& layer : model.encoder.layers) {
    // keys: per sentence, the layer input plus its pivot (mean of it)
    Tensor keys = x;
    std::vector<Index> key_off = plan.tok_off;
    if (enc.use_porous) {
      std::vector<Tensor> parts;
      for (Index s = 0; s < bsz; ++s) {
        Tensor xs = rows(x, plan.tok_off[static_cast<std::size_t>(s)],
                         plan.n_tok[static_cast<std::size_t>(s)]);
        parts.push_back(xs);
        parts.push_back(mean_rows(xs));
        key_off[static_cast<std::size_t>(s)] += s;
      }
      keys = concat(parts, 0);
    }

    std::vector<Tensor> head_outs;
    for (const HeadParams& head : layer.heads) {
      Tensor q_all = matmul(keys, head.wq);
      Tensor k_all = matmul(keys, head.wk);
      Tensor v_all = matmul(keys, head.wv);
      std::vector<Tensor> outs;
      for (Index s = 0; s < bsz; ++s) {
        const Index n = plan.n_tok[static_cast<std::size_t>(s)];
        const Index nk = enc.use_porous ? n + 1 : n;
        const Index off = key_off[static_cast<std::size_t>(s)];
        Tensor q = rows(q_all, off, n);
        Tensor k = rows(k_all, off, nk);
        Tensor v = rows(v_all, off, nk);
        Tensor scores = matmul(q, transpose(k));
        if (enc.use_lasa) {
          scores = add(scores, relation_score_bias(
                                   q, rows(rels[static_cast<std::size_t>(s)].key, 0, n)));
        }
        scores = scale(scores, inv_sqrt_dk);
        Tensor alpha = softmax_rows(scores, &masks[static_cast<std::size_t>(s)]);
        if (training && rng != nullptr && enc.attn_dropout > 0.0)
          alpha = dropout(alpha, enc.attn_dropout, training, *rng);
        Tensor out = matmul(alpha, v);
        if (enc.use_lasa) {
          out = add(out, relation_value_bias(
                             alpha, rows(rels[static_cast<std::size_t>(s)].value, 0, n)));
        }
        outs.push_back(out);
      }
      head_outs.push_back(concat(outs, 0));
    }
    Tensor next = matmul(concat(head_outs, 1), layer.wo);
    if (enc.use_residual) next = add(next, x);
    if (enc.use_layernorm) next = layernorm_rows(next, layer.ln_gain, layer.ln_bias);
    x = next;
  }

  // time-major character rows for the recurrent decoder
  std::vector<Index> tm_tok, tm_chr;
  tm_tok.reserve(static_cast<std::size_t>(batch.m_max * bsz));
  tm_chr.reserve(static_cast<std::size_t>(batch.m_max * bsz));
  for (Index t = 0; t < batch.m_max; ++t) {
    for (Index s = 0; s < bsz; ++s) {
      Index i = std::min<Index>(t, batch.char_len[static_cast<std::size_t>(s)] - 1);
      tm_tok.push_back(plan.tok_off[static_cast<std::size_t>(s)] + i);
      tm_chr.push_back(plan.chr_off[static_cast<std::size_t>(s)] + i);
    }
  }
  Tensor h_tm = gather_rows(x, tm_tok);
  Tensor xc_tm = gather_rows(xc, tm_chr);
  std::vector<Tensor> gin_parts = {xc_tm, h_tm};
  Tensor gin = concat(gin_parts, 1);
  if (training && rng != nullptr)
    gin = dropout(gin, model.cfg.dropout_embed_gru, training, *rng);
  Tensor hh = bigru_batched(gin, batch.char_len, model.gru);
  return matmul(hh, model.crf.emit);
}

}  // namespace

BatchForward batch_nll(const Model& model, const Batch& batch, bool training, Rng* rng) {
  require(batch.has_gold(), "batch_nll: batch holds sentences without usable gold tags");
  const Index bsz = batch.size();
  Tensor em_tm = batch_emissions_tm(model, batch, training, rng);
  Tensor log_z = crf_log_partition_batched(em_tm, batch.char_len, model.crf);

  std::vector<Tensor> scores;
  for (Index s = 0; s < bsz; ++s) {
    const int m = batch.char_len[static_cast<std::size_t>(s)];
    std::vector<Index> ids;
    ids.reserve(static_cast<std::size_t>(m));
    for (int t = 0; t < m; ++t) ids.push_back(static_cast<Index>(t) * bsz + s);
    std::vector<int> y(static_cast<std::size_t>(m));
    for (int t = 0; t < m; ++t) y[static_cast<std::size_t>(t)] = batch.gold(s, t);
    scores.push_back(crf_score_from_emissions(gather_rows(em_tm, ids), y, model.crf));
  }
  BatchForward fwd;
  fwd.per_sentence = sub(log_z, concat(scores, 0));
  fwd.loss = scale(sum_all(fwd.per_sentence), 1.0 / static_cast<Scalar>(bsz));
  return fwd;
}

std::vector<std::vector<int>> batch_predict(const Model& model, const Batch& batch) {
  const Index bsz = batch.size();
  Tensor em_tm = batch_emissions_tm(model, batch, false, nullptr);
  auto em = em_tm.mat();
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(bsz));
  for (Index s = 0; s < bsz; ++s) {
    const Index m = batch.char_len[static_cast<std::size_t>(s)];
    Mat em_s(m, model.crf.n_tags());
    for (Index t = 0; t < m; ++t) em_s.row(t) = em.row(t * bsz + s);
    out.push_back(viterbi_from_emissions(em_s, model.crf).tags);
  }
  return out;
}

Tensor sentence_nll(const Model& model, const Prepared& sentence, bool training, Rng* rng) {
  Batch b = pad_batch(model, {&sentence});
  return batch_nll(model, b, training, rng).loss;
}

std::vector<int> predict_tags(const Model& model, const Prepared& sentence) {
  Batch b = pad_batch(model, {&sentence});
  return batch_predict(model, b)[0];
}

}  // namespace plte
