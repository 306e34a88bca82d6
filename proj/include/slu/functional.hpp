#pragma once

// Plain (non-differentiable) numerical kernels shared by the graph ops,
// decoding and evaluation.

#include "slu/tensor.hpp"

#include <span>
#include <vector>

namespace slu {

template <typename S>
S log_sum_exp(const Eigen::Ref<const RowVector<S>>& x);

/// Softmax with max-subtraction. Throws std::invalid_argument on empty input.
template <typename S>
RowVector<S> softmax(const Eigen::Ref<const RowVector<S>>& logits);

template <typename S>
RowVector<S> log_softmax(const Eigen::Ref<const RowVector<S>>& logits);

/// -sum_k q_k log softmax(logits)_k with q = (1-epsilon) onehot(gold) + epsilon/K.
template <typename S>
S cross_entropy_smoothed(const Eigen::Ref<const RowVector<S>>& logits, int gold, S epsilon);

// Linear-chain CRF over K tags. transitions is (K+2) x (K+2): rows/cols 0..K-1
// are tags, K is the start state and K+1 the stop state. transitions(i, j)
// scores moving from i to j.
namespace crf {

inline int start_state(int num_tags) { return num_tags; }
inline int stop_state(int num_tags) { return num_tags + 1; }

template <typename S>
S sequence_score(const Eigen::Ref<const Matrix<S>>& emissions, const Eigen::Ref<const Matrix<S>>& transitions,
                 std::span<const int> tags);

/// Forward algorithm in log space; returns log Z.
template <typename S>
S log_partition(const Eigen::Ref<const Matrix<S>>& emissions, const Eigen::Ref<const Matrix<S>>& transitions);

template <typename S>
struct Marginals {
  Matrix<S> unary;     // T x K, P(y_t = k)
  Matrix<S> pairwise;  // (K+2) x (K+2), expected transition counts
  S log_z;
};

/// Forward-backward; node and edge marginals (including start/stop edges).
template <typename S>
Marginals<S> marginals(const Eigen::Ref<const Matrix<S>>& emissions, const Eigen::Ref<const Matrix<S>>& transitions);

template <typename S>
struct Path {
  std::vector<int> tags;
  S score;
};

/// Max-scoring tag sequence. When `forbidden` is given, forbidden(i, j) == true
/// removes the i -> j transition (start/stop indices included).
template <typename S>
Path<S> viterbi(const Eigen::Ref<const Matrix<S>>& emissions, const Eigen::Ref<const Matrix<S>>& transitions,
                const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>* forbidden = nullptr);

}  // namespace crf
}  // namespace slu
