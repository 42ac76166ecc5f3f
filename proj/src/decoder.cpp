#include "plte/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace plte {

GruParams init_gru(Index d_in, Index d_h, Rng& rng) {
  auto cell = [&] {
    GruCell c;
    c.wz = glorot_init(d_in, d_h, rng);
    c.uz = glorot_init(d_h, d_h, rng);
    c.bz = Tensor::leaf({1, d_h}, ArrX::Zero(d_h), true);
    c.wr = glorot_init(d_in, d_h, rng);
    c.ur = glorot_init(d_h, d_h, rng);
    c.br = Tensor::leaf({1, d_h}, ArrX::Zero(d_h), true);
    c.wh = glorot_init(d_in, d_h, rng);
    c.uh = glorot_init(d_h, d_h, rng);
    c.bh = Tensor::leaf({1, d_h}, ArrX::Zero(d_h), true);
    return c;
  };
  GruParams p;
  p.fwd = cell();
  p.bwd = cell();
  return p;
}

namespace {

Tensor gru_step(const Tensor& xt, const Tensor& h, const GruCell& c) {
  Tensor z = sigmoid(add_rowvec(add(matmul(xt, c.wz), matmul(h, c.uz)), c.bz));
  Tensor r = sigmoid(add_rowvec(add(matmul(xt, c.wr), matmul(h, c.ur)), c.br));
  Tensor hc = tanh(add_rowvec(add(matmul(xt, c.wh), matmul(mul(r, h), c.uh)), c.bh));
  // h' = z*h + (1-z)*hc
  return add(hc, mul(z, sub(h, hc)));
}

Tensor gru_direction(const Tensor& x_tm, std::span<const int> lengths, const GruCell& cell,
                     Index d_h, bool reverse) {
  const Index b = static_cast<Index>(lengths.size());
  const Index t_max = x_tm.dim(0) / b;
  Tensor h = Tensor::zeros({b, d_h});
  std::vector<Tensor> out(static_cast<std::size_t>(t_max));
  bool any_short = false;
  for (int len : lengths) any_short = any_short || len < t_max;
  for (Index step = 0; step < t_max; ++step) {
    Index t = reverse ? t_max - 1 - step : step;
    Tensor xt = rows(x_tm, t * b, b);
    Tensor hn = gru_step(xt, h, cell);
    if (any_short) {
      Vec valid(b), carry(b);
      for (Index s = 0; s < b; ++s) {
        bool v = t < lengths[static_cast<std::size_t>(s)];
        valid(s) = v ? 1.0 : 0.0;
        carry(s) = v ? 0.0 : 1.0;
      }
      hn = add(mul_colvec(hn, valid), mul_colvec(h, carry));
    }
    h = hn;
    out[static_cast<std::size_t>(t)] = h;
  }
  return concat(out, 0);
}

}  // namespace

Tensor bigru_batched(const Tensor& x_tm, std::span<const int> lengths, const GruParams& params) {
  require(x_tm.rank() == 2 && !lengths.empty(), "bigru_batched: bad input");
  const Index b = static_cast<Index>(lengths.size());
  require(x_tm.dim(0) % b == 0, "bigru_batched: row count not divisible by batch size");
  const Index t_max = x_tm.dim(0) / b;
  for (int len : lengths)
    require(len >= 1 && len <= t_max, "bigru_batched: length out of range");
  const Index d_h = params.hidden();
  Tensor f = gru_direction(x_tm, lengths, params.fwd, d_h, false);
  Tensor r = gru_direction(x_tm, lengths, params.bwd, d_h, true);
  std::vector<Tensor> parts = {f, r};
  return concat(parts, 1);
}

Tensor bigru(const Tensor& x, const GruParams& params) {
  require(x.rank() == 2 && x.dim(0) >= 1, "bigru: M >= 1 required");
  const int m = static_cast<int>(x.dim(0));
  return bigru_batched(x, std::span(&m, 1), params);
}

// ---- CRF -------------------------------------------------------------

CrfParams init_crf(Index d_in, Index n_tags, Rng& rng) {
  require(n_tags >= 1, "init_crf: need at least one tag");
  CrfParams crf;
  crf.emit = glorot_init(d_in, n_tags, rng);
  crf.trans = Tensor::leaf({n_tags + 1, n_tags + 1}, ArrX::Zero((n_tags + 1) * (n_tags + 1)), true);
  return crf;
}

void forbid_transition(CrfParams& crf, Index from, Index to, Scalar penalty) {
  crf.trans.mat_mutable()(from, to) = penalty;
}

namespace {

void check_tags(std::span<const int> y, Index n_tags, Index m) {
  require(static_cast<Index>(y.size()) == m, "crf: tag sequence length mismatch");
  for (int t : y)
    require(t >= 0 && t < n_tags, "crf: tag id " + std::to_string(t) + " out of range");
}

}  // namespace

Tensor crf_score_from_emissions(const Tensor& em, std::span<const int> y, const CrfParams& crf) {
  const Index m = em.dim(0);
  const Index n_tags = crf.n_tags();
  require(em.dim(1) == n_tags, "crf: emission width mismatch");
  check_tags(y, n_tags, m);
  std::vector<Index> er(static_cast<std::size_t>(m)), ec(static_cast<std::size_t>(m));
  for (Index t = 0; t < m; ++t) {
    er[static_cast<std::size_t>(t)] = t;
    ec[static_cast<std::size_t>(t)] = y[static_cast<std::size_t>(t)];
  }
  std::vector<Index> tr, tc;
  tr.push_back(n_tags);  // virtual start
  tc.push_back(y[0]);
  for (Index t = 1; t < m; ++t) {
    tr.push_back(y[static_cast<std::size_t>(t - 1)]);
    tc.push_back(y[static_cast<std::size_t>(t)]);
  }
  if (crf.use_end) {
    tr.push_back(y[static_cast<std::size_t>(m - 1)]);
    tc.push_back(n_tags);
  }
  return add(sum_all(pick(em, er, ec)), sum_all(pick(crf.trans, tr, tc)));
}

Tensor crf_log_partition_batched(const Tensor& em_tm, std::span<const int> lengths,
                                 const CrfParams& crf) {
  const Index b = static_cast<Index>(lengths.size());
  require(b >= 1 && em_tm.rank() == 2 && em_tm.dim(0) % b == 0,
          "crf_log_partition_batched: bad emission layout");
  const Index t_max = em_tm.dim(0) / b;
  const Index n_tags = crf.n_tags();
  require(em_tm.dim(1) == n_tags, "crf: emission width mismatch");

  Tensor core = cols(rows(crf.trans, 0, n_tags), 0, n_tags);
  Tensor start_row = cols(rows(crf.trans, n_tags, 1), 0, n_tags);

  Tensor alpha = add_rowvec(rows(em_tm, 0, b), start_row);
  for (Index t = 1; t < t_max; ++t) {
    Tensor next = add(logsumexp_bilinear(alpha, core), rows(em_tm, t * b, b));
    bool all_valid = true;
    for (int len : lengths) all_valid = all_valid && t < len;
    if (all_valid) {
      alpha = next;
    } else {
      Vec valid(b), carry(b);
      for (Index s = 0; s < b; ++s) {
        bool v = t < lengths[static_cast<std::size_t>(s)];
        valid(s) = v ? 1.0 : 0.0;
        carry(s) = v ? 0.0 : 1.0;
      }
      alpha = add(mul_colvec(next, valid), mul_colvec(alpha, carry));
    }
  }
  if (crf.use_end) {
    alpha = add_rowvec(alpha, transpose(rows(cols(crf.trans, n_tags, 1), 0, n_tags)));
  }
  return logsumexp_rows(alpha);
}

Tensor crf_log_partition_from_emissions(const Tensor& em, const CrfParams& crf) {
  const int m = static_cast<int>(em.dim(0));
  return crf_log_partition_batched(em, std::span(&m, 1), crf);
}

Tensor crf_nll_from_emissions(const Tensor& em, std::span<const int> y, const CrfParams& crf) {
  return sub(crf_log_partition_from_emissions(em, crf), crf_score_from_emissions(em, y, crf));
}

Tensor sequence_score(const Tensor& h, std::span<const int> y, const CrfParams& crf) {
  return crf_score_from_emissions(matmul(h, crf.emit), y, crf);
}

Tensor log_partition(const Tensor& h, const CrfParams& crf) {
  return crf_log_partition_from_emissions(matmul(h, crf.emit), crf);
}

Tensor nll(const Tensor& h, std::span<const int> y, const CrfParams& crf) {
  return crf_nll_from_emissions(matmul(h, crf.emit), y, crf);
}

ViterbiResult viterbi_from_emissions(const Mat& em, const CrfParams& crf) {
  const Index m = em.rows();
  const Index n_tags = crf.n_tags();
  require(m >= 1 && em.cols() == n_tags, "viterbi: bad emission shape");
  auto tr = crf.trans.mat();

  Mat back(m, n_tags);
  Vec score(n_tags), next(n_tags);
  for (Index j = 0; j < n_tags; ++j) score(j) = tr(n_tags, j) + em(0, j);
  for (Index t = 1; t < m; ++t) {
    for (Index j = 0; j < n_tags; ++j) {
      Index best_i = 0;
      Scalar best = score(0) + tr(0, j);
      for (Index i = 1; i < n_tags; ++i) {
        Scalar cand = score(i) + tr(i, j);
        if (cand > best) {  // strict: ties keep the lowest tag id
          best = cand;
          best_i = i;
        }
      }
      next(j) = best + em(t, j);
      back(t, j) = static_cast<Scalar>(best_i);
    }
    score = next;
  }
  if (crf.use_end) {
    for (Index j = 0; j < n_tags; ++j) score(j) += tr(j, n_tags);
  }
  Index best_j = 0;
  for (Index j = 1; j < n_tags; ++j) {
    if (score(j) > score(best_j)) best_j = j;
  }
  ViterbiResult res;
  res.score = score(best_j);
  res.tags.resize(static_cast<std::size_t>(m));
  Index at = best_j;
  for (Index t = m - 1; t >= 0; --t) {
    res.tags[static_cast<std::size_t>(t)] = static_cast<int>(at);
    if (t > 0) at = static_cast<Index>(back(t, at));
  }
  return res;
}

ViterbiResult viterbi(const Tensor& h, const CrfParams& crf) {
  Mat em = h.mat() * crf.emit.mat();
  return viterbi_from_emissions(em, crf);
}

}  // namespace plte
