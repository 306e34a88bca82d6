#pragma once

#include "slu/random.hpp"
#include "slu/tensor.hpp"

#include <string>
#include <unordered_map>

namespace slu {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamState {
  Matrix<S> m;
  Matrix<S> v;
  long t = 0;
  AdamOptions options;
};

/// One bias-corrected Adam update of `param` in place.
///
/// A gradient that is zero everywhere advances the moments and the step
/// counter but leaves the parameter bit-identical, so parameters that a loss
/// does not touch (e.g. the slot head in intent-only training) never drift.
template <typename S>
void adam_step(Tensor<S>& param, const Matrix<S>& grad, AdamState<S>& state);

/// Adam over every trainable tensor of a ParameterStore.
template <typename S>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Applies one step using each tensor's accumulated grad, then zeroes grads.
  void step(ParameterStore<S>& params);

  const AdamState<S>* state(const std::string& name) const;

 private:
  AdamOptions options_;
  std::unordered_map<std::string, AdamState<S>> states_;
};

// Rescales all gradients so that their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename S>
double clip_grad_norm(ParameterStore<S>& params, double max_norm);

// Initialisers. Weight matrices use Glorot-uniform over (fan_in, fan_out) =
// (rows, cols) of storage; biases zero; embedding tables N(0, stddev^2).
template <typename S>
void init_glorot_uniform(Tensor<S>& t, Rng& rng);
template <typename S>
void init_normal(Tensor<S>& t, double stddev, Rng& rng);

}  // namespace slu
