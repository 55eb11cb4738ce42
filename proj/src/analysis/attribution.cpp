#include "mind/analysis/attribution.hpp"

#include <cmath>

#include "mind/diffcore/error.hpp"

namespace mind {

namespace {

void check_samples(const Model& model, const Tensor& samples) {
  Shape expected = model.input_shape();
  expected.insert(expected.begin(), samples.rank() > 0 ? samples.extent(0) : 0);
  require(samples.shape() == expected && expected[0] > 0, ErrorCode::shape_mismatch,
          "attribution: samples " + to_string(samples.shape()) + " do not match model input " +
              to_string(model.input_shape()));
}

// Mean |a| per feature over samples and timestamps.
std::vector<double> feature_means_abs(const Tensor& a) {
  const std::size_t n = a.extent(0), d = a.extent(1), t = a.size() / (n * d);
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t s = 0; s < t; ++s) out[j] += std::abs(a[(i * d + j) * t + s]);
    }
  }
  for (double& v : out) v /= static_cast<double>(n * t);
  return out;
}

}  // namespace

Tensor input_gradients(const Model& model, const Tensor& samples) {
  check_samples(model, samples);
  // Rows are independent with frozen statistics, so the gradient of the sum
  // is the stack of per-row gradients.
  Graph g;
  ModelGraph mg(g, model, NormMode::frozen);
  g.set_output(g.sum(mg.predict(g.leaf("x", samples.shape()))));
  Bindings b{{"x", samples}};
  mg.bind(b);
  const std::vector<std::string> wrt{"x"};
  return gradient(g, b, wrt).at("x");
}

std::vector<double> saliency_scores(const Model& model, const Tensor& samples) {
  return feature_means_abs(input_gradients(model, samples));
}

Tensor integrated_gradients(const Model& model, const Tensor& samples, std::size_t steps) {
  check_samples(model, samples);
  require(steps > 0, ErrorCode::invalid_argument, "integrated_gradients: steps must be positive");
  const std::size_t n = samples.extent(0), m = samples.size() / n;
  Shape path_shape = model.input_shape();
  path_shape.insert(path_shape.begin(), steps);
  Tensor out = Tensor::zeros(samples.shape());
  for (std::size_t i = 0; i < n; ++i) {
    Tensor path = Tensor::zeros(path_shape);
    for (std::size_t k = 0; k < steps; ++k) {
      const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
      for (std::size_t e = 0; e < m; ++e) path[k * m + e] = alpha * samples[i * m + e];
    }
    const Tensor grads = input_gradients(model, path);
    for (std::size_t e = 0; e < m; ++e) {
      double s = 0.0;
      for (std::size_t k = 0; k < steps; ++k) s += grads[k * m + e];
      out[i * m + e] = samples[i * m + e] * s / static_cast<double>(steps);
    }
  }
  return out;
}

std::vector<double> integrated_gradients_scores(const Model& model, const Tensor& samples, std::size_t steps) {
  require(steps >= 32, ErrorCode::invalid_argument,
          "integrated gradients needs at least 32 steps, got " + std::to_string(steps));
  return feature_means_abs(integrated_gradients(model, samples, steps));
}

}  // namespace mind
