#include "slu/functional.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace slu {

template <typename S>
S log_sum_exp(const Eigen::Ref<const RowVector<S>>& x) {
  if (x.size() == 0) return -std::numeric_limits<S>::infinity();
  const S m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

template <typename S>
RowVector<S> softmax(const Eigen::Ref<const RowVector<S>>& logits) {
  if (logits.size() == 0) throw std::invalid_argument("softmax of an empty vector");
  const S m = logits.maxCoeff();
  RowVector<S> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

template <typename S>
RowVector<S> log_softmax(const Eigen::Ref<const RowVector<S>>& logits) {
  if (logits.size() == 0) throw std::invalid_argument("log_softmax of an empty vector");
  return (logits.array() - log_sum_exp<S>(logits)).matrix();
}

template <typename S>
S cross_entropy_smoothed(const Eigen::Ref<const RowVector<S>>& logits, int gold, S epsilon) {
  const auto k = logits.size();
  if (gold < 0 || gold >= k) {
    throw std::invalid_argument("gold class " + std::to_string(gold) + " out of range for " + std::to_string(k) +
                                " classes");
  }
  if (!(epsilon >= S(0) && epsilon < S(1))) throw std::invalid_argument("label smoothing rate must lie in [0, 1)");
  const RowVector<S> logp = log_softmax<S>(logits);
  const S off = epsilon / static_cast<S>(k);
  S loss = -(S(1) - epsilon) * logp(gold);
  if (epsilon != S(0)) loss -= off * logp.sum();
  return loss;
}

namespace crf {

namespace {

template <typename S>
void check_shapes(const Eigen::Ref<const Matrix<S>>& emissions, const Eigen::Ref<const Matrix<S>>& transitions) {
  const Index k = emissions.cols();
  if (emissions.rows() < 1) throw std::invalid_argument("CRF needs at least one position");
  if (transitions.rows() != k + 2 || transitions.cols() != k + 2) {
    throw std::invalid_argument("CRF transitions must be (K+2)x(K+2) for K=" + std::to_string(k));
  }
}

}  // namespace

template <typename S>
S sequence_score(const Eigen::Ref<const Matrix<S>>& emissions, const Eigen::Ref<const Matrix<S>>& transitions,
                 std::span<const int> tags) {
  check_shapes<S>(emissions, transitions);
  const int k = static_cast<int>(emissions.cols());
  if (static_cast<Index>(tags.size()) != emissions.rows()) throw std::invalid_argument("tag count != positions");
  S score = transitions(start_state(k), tags[0]);
  for (std::size_t t = 0; t < tags.size(); ++t) {
    if (tags[t] < 0 || tags[t] >= k) throw std::invalid_argument("tag index out of range");
    score += emissions(static_cast<Index>(t), tags[t]);
    if (t > 0) score += transitions(tags[t - 1], tags[t]);
  }
  score += transitions(tags.back(), stop_state(k));
  return score;
}

template <typename S>
S log_partition(const Eigen::Ref<const Matrix<S>>& emissions, const Eigen::Ref<const Matrix<S>>& transitions) {
  check_shapes<S>(emissions, transitions);
  const Index n = emissions.rows();
  const int k = static_cast<int>(emissions.cols());
  RowVector<S> alpha = transitions.row(start_state(k)).head(k) + emissions.row(0);
  RowVector<S> next(k);
  for (Index t = 1; t < n; ++t) {
    for (int j = 0; j < k; ++j) {
      RowVector<S> in = alpha + transitions.col(j).head(k).transpose();
      next(j) = log_sum_exp<S>(in) + emissions(t, j);
    }
    alpha.swap(next);
  }
  RowVector<S> last = alpha + transitions.col(stop_state(k)).head(k).transpose();
  return log_sum_exp<S>(last);
}

template <typename S>
Marginals<S> marginals(const Eigen::Ref<const Matrix<S>>& emissions, const Eigen::Ref<const Matrix<S>>& transitions) {
  check_shapes<S>(emissions, transitions);
  const Index n = emissions.rows();
  const int k = static_cast<int>(emissions.cols());
  const int start = start_state(k);
  const int stop = stop_state(k);
  const auto trans = transitions.topLeftCorner(k, k);

  Matrix<S> alpha(n, k);
  Matrix<S> beta(n, k);
  alpha.row(0) = transitions.row(start).head(k) + emissions.row(0);
  for (Index t = 1; t < n; ++t) {
    for (int j = 0; j < k; ++j) {
      RowVector<S> in = alpha.row(t - 1) + trans.col(j).transpose();
      alpha(t, j) = log_sum_exp<S>(in) + emissions(t, j);
    }
  }
  beta.row(n - 1) = transitions.col(stop).head(k).transpose();
  for (Index t = n - 2; t >= 0; --t) {
    for (int i = 0; i < k; ++i) {
      RowVector<S> out = trans.row(i) + emissions.row(t + 1) + beta.row(t + 1);
      beta(t, i) = log_sum_exp<S>(out);
    }
  }
  RowVector<S> last = alpha.row(n - 1) + beta.row(n - 1);
  const S log_z = log_sum_exp<S>(last);

  Marginals<S> m;
  m.log_z = log_z;
  m.unary = ((alpha + beta).array() - log_z).exp().matrix();
  m.pairwise = Matrix<S>::Zero(k + 2, k + 2);
  m.pairwise.row(start).head(k) = m.unary.row(0);
  m.pairwise.col(stop).head(k) = m.unary.row(n - 1).transpose();
  for (Index t = 1; t < n; ++t) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        m.pairwise(i, j) += std::exp(alpha(t - 1, i) + trans(i, j) + emissions(t, j) + beta(t, j) - log_z);
      }
    }
  }
  return m;
}

template <typename S>
Path<S> viterbi(const Eigen::Ref<const Matrix<S>>& emissions, const Eigen::Ref<const Matrix<S>>& transitions,
                const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>* forbidden) {
  check_shapes<S>(emissions, transitions);
  const Index n = emissions.rows();
  const int k = static_cast<int>(emissions.cols());
  const int start = start_state(k);
  const int stop = stop_state(k);
  constexpr S kNegInf = -std::numeric_limits<S>::infinity();
  auto edge = [&](int i, int j) {
    if (forbidden && (*forbidden)(i, j)) return kNegInf;
    return transitions(i, j);
  };

  Matrix<S> score(n, k);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> back(n, k);
  for (int j = 0; j < k; ++j) score(0, j) = edge(start, j) + emissions(0, j);
  for (Index t = 1; t < n; ++t) {
    for (int j = 0; j < k; ++j) {
      S best = kNegInf;
      int arg = 0;
      for (int i = 0; i < k; ++i) {
        const S s = score(t - 1, i) + edge(i, j);
        if (s > best) {
          best = s;
          arg = i;
        }
      }
      score(t, j) = best + emissions(t, j);
      back(t, j) = arg;
    }
  }
  S best = kNegInf;
  int arg = 0;
  for (int j = 0; j < k; ++j) {
    const S s = score(n - 1, j) + edge(j, stop);
    if (s > best) {
      best = s;
      arg = j;
    }
  }
  Path<S> path;
  path.score = best;
  path.tags.assign(static_cast<std::size_t>(n), 0);
  path.tags[static_cast<std::size_t>(n - 1)] = arg;
  for (Index t = n - 1; t > 0; --t) {
    arg = back(t, arg);
    path.tags[static_cast<std::size_t>(t - 1)] = arg;
  }
  // Re-score so the value matches sequence_score bit for bit.
  path.score = sequence_score<S>(emissions, transitions, path.tags);
  return path;
}

}  // namespace crf

#define SLU_INSTANTIATE(S)                                                                                         \
  template S log_sum_exp<S>(const Eigen::Ref<const RowVector<S>>&);                                               \
  template RowVector<S> softmax<S>(const Eigen::Ref<const RowVector<S>>&);                                        \
  template RowVector<S> log_softmax<S>(const Eigen::Ref<const RowVector<S>>&);                                    \
  template S cross_entropy_smoothed<S>(const Eigen::Ref<const RowVector<S>>&, int, S);                            \
  template S crf::sequence_score<S>(const Eigen::Ref<const Matrix<S>>&, const Eigen::Ref<const Matrix<S>>&,       \
                                    std::span<const int>);                                                        \
  template S crf::log_partition<S>(const Eigen::Ref<const Matrix<S>>&, const Eigen::Ref<const Matrix<S>>&);       \
  template crf::Marginals<S> crf::marginals<S>(const Eigen::Ref<const Matrix<S>>&,                                \
                                               const Eigen::Ref<const Matrix<S>>&);                               \
  template crf::Path<S> crf::viterbi<S>(const Eigen::Ref<const Matrix<S>>&, const Eigen::Ref<const Matrix<S>>&,   \
                                        const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>*);

SLU_INSTANTIATE(float)
SLU_INSTANTIATE(double)

#undef SLU_INSTANTIATE

}  // namespace slu
