#pragma once

// Central finite differences over a graph's scalar output. Test-only oracle
// for the reverse-mode engine; it only calls `evaluate`.

#include <algorithm>
#include <cmath>
#include <string>

#include "mind/diffcore/graph.hpp"
#include "mind/diffcore/random.hpp"

namespace mind::test_support {

inline Tensor finite_difference(const Graph& graph, Bindings bindings, const std::string& leaf,
                                double step = 1e-5) {
  Tensor& x = bindings.at(leaf);
  Tensor grad = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = evaluate(graph, bindings).item();
    x[i] = saved - step;
    const double down = evaluate(graph, bindings).item();
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

inline double l2(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

// ||a - b|| / max(||a||, ||b||, floor). The floor keeps exact-zero gradients
// from dividing finite-difference rounding noise by zero.
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-4) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(diff) / std::max({l2(a), l2(b), floor});
}

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.normal(0.0, scale);
  return t;
}

}  // namespace mind::test_support
