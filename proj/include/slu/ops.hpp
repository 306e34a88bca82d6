#pragma once

// Differentiable operations on Graph nodes. Everything is two-dimensional;
// sequences of utterances are stored packed (one row per real token) and
// described by Segments.

#include "slu/graph.hpp"
#include "slu/random.hpp"

#include <span>
#include <vector>

namespace slu {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Contiguous run of rows belonging to one sequence.
struct Segment {
  Index offset = 0;
  Index length = 0;
};

/// Which keys a query may attend to in multidim_attention().
enum class AttentionMask {
  kFull,
  kForward,         // j <= i
  kBackward,        // j >= i
  kForwardStrict,   // j < i
  kBackwardStrict,  // j > i
};

bool attention_allowed(AttentionMask mask, Index query, Index key);

template <typename S> Var<S> matmul(Var<S> a, Var<S> b);
// a * b^T
template <typename S> Var<S> matmul_nt(Var<S> a, Var<S> b);

template <typename S> Var<S> operator+(Var<S> a, Var<S> b);
template <typename S> Var<S> operator-(Var<S> a, Var<S> b);
// Elementwise product.
template <typename S> Var<S> operator*(Var<S> a, Var<S> b);
template <typename S> Var<S> scale(Var<S> a, S factor);
template <typename S> Var<S> one_minus(Var<S> a);

// a + row, with row (1 x n) broadcast over every row of a.
template <typename S> Var<S> add_row(Var<S> a, Var<S> row);
// a .* col, with col (m x 1) broadcast over every column of a.
template <typename S> Var<S> mul_col(Var<S> a, Var<S> col);

// x * w + b
template <typename S> Var<S> affine(Var<S> x, Var<S> w, Var<S> b);

template <typename S> Var<S> tanh(Var<S> a);
template <typename S> Var<S> sigmoid(Var<S> a);
template <typename S> Var<S> relu(Var<S> a);

template <typename S> Var<S> concat_cols(const std::vector<Var<S>>& parts);
template <typename S> Var<S> concat_rows(const std::vector<Var<S>>& parts);
template <typename S> Var<S> slice_rows(Var<S> a, Index start, Index count);
template <typename S> Var<S> slice_cols(Var<S> a, Index start, Index count);

// Row i of the result is row index[i] of a, or zeros when index[i] < 0.
template <typename S> Var<S> gather_rows(Var<S> a, std::span<const Index> index);

template <typename S> Var<S> sum(Var<S> a);

// Row-wise softmax restricted to allowed entries; rows with nothing allowed
// come out as zeros. Masked entries never influence the result.
template <typename S> Var<S> masked_softmax_rows(Var<S> a, const BoolMatrix& allowed);

// Per-column softmax over the rows of each segment (multi-dimensional
// attention weights). Rows outside every segment get zero weight.
template <typename S> Var<S> segment_softmax_cols(Var<S> scores, std::span<const Segment> segments);
template <typename S> Var<S> segment_sum_rows(Var<S> a, std::span<const Segment> segments);
template <typename S> Var<S> segment_max_rows(Var<S> a, std::span<const Segment> segments);

// Sliding-window unfolding for 1-D convolution. For segment s, produces
// out_lengths[s] rows; row p holds the inputs at positions
// p - width/2 ... p - width/2 + width - 1 concatenated, with positions outside
// [0, segment.length) read as zeros.
template <typename S>
Var<S> unfold_windows(Var<S> x, std::span<const Segment> segments, std::span<const Index> out_lengths, int width);

// Same-length 1-D convolution of a T x d sequence with a (width*d) x f kernel
// bank; the window is centred on each position (left-biased for even width).
template <typename S> Var<S> conv1d_same(Var<S> x, Var<S> weight, Var<S> bias, int width);

template <typename S> Var<S> layer_norm_rows(Var<S> x, Var<S> gain, Var<S> bias, S eps = S(1e-6));

// Sum over rows with gold[r] >= 0 of  -sum_k q_k log softmax(logits_r)_k,
// q = (1-eps) onehot(gold) + eps/K.
template <typename S>
Var<S> smoothed_cross_entropy(Var<S> logits, std::span<const int> gold, S epsilon);

// Sum over segments of the linear-chain CRF negative log-likelihood. The
// transition matrix is (K+2) x (K+2); index K is the start state, K+1 stop.
template <typename S>
Var<S> crf_nll(Var<S> emissions, Var<S> transitions, std::span<const Segment> segments, std::span<const int> tags);

// Multi-dimensional (per-feature) token-to-token attention over one sequence:
//   out_i = sum_j softmax_j( c * tanh((q_i + k_j) / c) ) .* v_j
// with the softmax taken per feature over the keys the mask allows.
template <typename S>
Var<S> multidim_attention(Var<S> q, Var<S> k, Var<S> v, AttentionMask mask, S c = S(5));

// Inverted dropout: keeps each unit with probability keep and scales by 1/keep.
template <typename S> Var<S> dropout(Var<S> x, double keep, Rng& rng);
template <typename S> Matrix<S> dropout_mask(Index rows, Index cols, double keep, Rng& rng);

}  // namespace slu
