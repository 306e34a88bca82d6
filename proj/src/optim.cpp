#include "slu/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace slu {

template <typename S>
void adam_step(Tensor<S>& param, const Matrix<S>& grad, AdamState<S>& state) {
  if (grad.rows() != param.value.rows() || grad.cols() != param.value.cols()) {
    throw std::invalid_argument("adam_step: gradient shape does not match parameter " + shape_string(param.shape));
  }
  if (state.t < 0) throw std::invalid_argument("adam_step: negative step counter");
  if (state.m.size() == 0) {
    state.m = Matrix<S>::Zero(grad.rows(), grad.cols());
    state.v = Matrix<S>::Zero(grad.rows(), grad.cols());
  } else if (state.m.rows() != grad.rows() || state.m.cols() != grad.cols()) {
    throw std::invalid_argument("adam_step: moment shape does not match parameter");
  }
  const auto& o = state.options;
  state.t += 1;
  const S b1 = static_cast<S>(o.beta1);
  const S b2 = static_cast<S>(o.beta2);
  state.m = b1 * state.m + (S(1) - b1) * grad;
  state.v = b2 * state.v + (S(1) - b2) * grad.cwiseProduct(grad);
  if (grad.isZero(0)) return;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  const S step = static_cast<S>(o.lr / c1);
  const S inv_c2 = static_cast<S>(1.0 / c2);
  const S eps = static_cast<S>(o.eps);
  param.value.array() -= step * state.m.array() / ((state.v.array() * inv_c2).sqrt() + eps);
}

template <typename S>
void Adam<S>::step(ParameterStore<S>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params.tensor(i);
    if (!t.requires_grad || !t.has_grad()) continue;
    auto [it, inserted] = states_.try_emplace(params.name(i));
    if (inserted) it->second.options = options_;
    adam_step(t, t.grad, it->second);
    t.grad.setZero();
  }
}

template <typename S>
const AdamState<S>* Adam<S>::state(const std::string& name) const {
  auto it = states_.find(name);
  return it == states_.end() ? nullptr : &it->second;
}

template <typename S>
double clip_grad_norm(ParameterStore<S>& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params.tensor(i);
    if (t.has_grad()) sq += static_cast<double>(t.grad.squaredNorm());
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const S factor = static_cast<S>(max_norm / norm);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& t = params.tensor(i);
      if (t.has_grad()) t.grad *= factor;
    }
  }
  return norm;
}

template <typename S>
void init_glorot_uniform(Tensor<S>& t, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
  for (Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = static_cast<S>(rng.uniform(-limit, limit));
}

template <typename S>
void init_normal(Tensor<S>& t, double stddev, Rng& rng) {
  for (Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = static_cast<S>(stddev * rng.normal());
}

#define SLU_INSTANTIATE(S)                                                   \
  template void adam_step<S>(Tensor<S>&, const Matrix<S>&, AdamState<S>&);  \
  template class Adam<S>;                                                   \
  template double clip_grad_norm<S>(ParameterStore<S>&, double);            \
  template void init_glorot_uniform<S>(Tensor<S>&, Rng&);                   \
  template void init_normal<S>(Tensor<S>&, double, Rng&);

SLU_INSTANTIATE(float)
SLU_INSTANTIATE(double)

#undef SLU_INSTANTIATE

}  // namespace slu
