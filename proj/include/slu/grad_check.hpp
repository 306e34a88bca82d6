#pragma once

#include "slu/graph.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace slu {

struct GradCheckOptions {
  double step = 1e-6;
  // Coordinates sampled per tensor; <= 0 checks every coordinate.
  Index max_coords_per_tensor = 0;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_error = 0.0;
  std::string worst_tensor;
  Index worst_index = -1;
  double autodiff = 0.0;
  double numeric = 0.0;
  Index coordinates = 0;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds the scalar loss on a fresh graph. Must be a pure function of the
/// parameter values (re-seed any dropout inside the callback).
using ScalarFunction = std::function<Var<double>(Graph<double>&)>;

/// Compares reverse-mode gradients against central differences
/// (f(x+h) - f(x-h)) / 2h for every trainable tensor of `params`. The error of
/// a coordinate is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|); the maximum over
/// all checked coordinates is returned.
GradCheckResult grad_check(const ScalarFunction& fn, ParameterStore<double>& params,
                           const GradCheckOptions& options = {});

}  // namespace slu
