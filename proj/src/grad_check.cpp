#include "slu/grad_check.hpp"

#include "slu/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace slu {

namespace {

double evaluate(const ScalarFunction& fn, const std::string& tensor, Index coord) {
  Graph<double> graph(false);
  const double v = fn(graph).item();
  if (!std::isfinite(v)) {
    throw NonFiniteError("non-finite loss while perturbing " + tensor + "[" + std::to_string(coord) + "]");
  }
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& fn, ParameterStore<double>& params,
                           const GradCheckOptions& options) {
  params.zero_grad();
  {
    Graph<double> graph;
    Var<double> loss = fn(graph);
    if (!std::isfinite(loss.item())) throw NonFiniteError("non-finite loss at the unperturbed point");
    graph.backward(loss);
  }

  Rng rng(options.seed);
  GradCheckResult result;
  const double h = options.step;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& tensor = params.tensor(p);
    if (!tensor.requires_grad) continue;
    const std::string& name = params.name(p);
    std::vector<Index> coords(static_cast<std::size_t>(tensor.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (options.max_coords_per_tensor > 0 && tensor.size() > options.max_coords_per_tensor) {
      rng.shuffle(std::span<Index>(coords));
      coords.resize(static_cast<std::size_t>(options.max_coords_per_tensor));
      std::sort(coords.begin(), coords.end());
    }
    for (Index c : coords) {
      double& x = tensor.value.data()[c];
      const double saved = x;
      x = saved + h;
      const double plus = evaluate(fn, name, c);
      x = saved - h;
      const double minus = evaluate(fn, name, c);
      x = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = tensor.has_grad() ? tensor.grad.data()[c] : 0.0;
      const double err =
          std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
      ++result.coordinates;
      if (err > result.max_error || result.worst_index < 0) {
        result.max_error = std::max(result.max_error, err);
        if (err >= result.max_error) {
          result.worst_tensor = name;
          result.worst_index = c;
          result.autodiff = analytic;
          result.numeric = numeric;
        }
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace slu
