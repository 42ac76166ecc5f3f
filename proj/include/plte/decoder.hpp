#pragma once

#include "plte/tensor.hpp"

#include <span>
#include <vector>

namespace plte {

// GRU gating follows Cho et al.: the update gate keeps the previous state,
//   z = sigmoid(x Wz + h Uz + bz)
//   r = sigmoid(x Wr + h Ur + br)
//   hc = tanh(x Wh + (r*h) Uh + bh)
//   h' = z*h + (1-z)*hc
// with the reset gate applied to h before the recurrent projection.
struct GruCell {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wh, uh, bh;
};

struct GruParams {
  GruCell fwd, bwd;  // independent parameters; initial states are zero
  Index hidden() const { return fwd.uz.dim(0); }
};

GruParams init_gru(Index d_in, Index d_h, Rng& rng);

// x: [M x d_in]; output row t = [forward state ; backward state].
Tensor bigru(const Tensor& x, const GruParams& params);

// Time-major batched form: x holds T*B rows with row t*B + s belonging to
// sentence s at step t. Steps at or beyond a sentence's length carry the
// previous state through unchanged, so padding never touches real states.
Tensor bigru_batched(const Tensor& x_tm, std::span<const int> lengths, const GruParams& params);

// Linear-chain CRF. Transitions are (Y+1) x (Y+1): row Y holds the virtual
// start transitions and column Y the end transitions (scored only with
// use_end, the default).
struct CrfParams {
  Tensor emit;   // (2*d_h) x Y emission projection
  Tensor trans;  // (Y+1) x (Y+1)
  bool use_end = true;

  Index n_tags() const { return emit.dim(1); }
};

CrfParams init_crf(Index d_in, Index n_tags, Rng& rng);
// Initializes forbidden tag bigrams to a large negative score (optional
// scheme constraints; off by default).
void forbid_transition(CrfParams& crf, Index from, Index to, Scalar penalty = -1e4);

// Gold-path score in log domain: emissions at y plus transitions including
// the virtual start (and end, when enabled).
Tensor sequence_score(const Tensor& h, std::span<const int> y, const CrfParams& crf);
// log sum over all |Y|^M tag sequences, forward algorithm in log space.
Tensor log_partition(const Tensor& h, const CrfParams& crf);
// log_partition - sequence_score; >= 0 up to rounding.
Tensor nll(const Tensor& h, std::span<const int> y, const CrfParams& crf);

struct ViterbiResult {
  std::vector<int> tags;
  Scalar score = 0;
};

// Highest-scoring sequence; ties break toward the lowest tag ID.
ViterbiResult viterbi(const Tensor& h, const CrfParams& crf);

// Emission-level entry points shared by the solo and batched paths.
Tensor crf_score_from_emissions(const Tensor& em, std::span<const int> y, const CrfParams& crf);
Tensor crf_log_partition_from_emissions(const Tensor& em, const CrfParams& crf);
Tensor crf_nll_from_emissions(const Tensor& em, std::span<const int> y, const CrfParams& crf);
ViterbiResult viterbi_from_emissions(const Mat& em, const CrfParams& crf);
// Per-sentence log partitions over time-major emissions: [B x 1].
Tensor crf_log_partition_batched(const Tensor& em_tm, std::span<const int> lengths,
                                 const CrfParams& crf);

}  // namespace plte
