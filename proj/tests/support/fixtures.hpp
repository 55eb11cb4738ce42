#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mind/diffcore/random.hpp"
#include "mind/models/dataset.hpp"
#include "mind/models/model.hpp"

namespace mind::test_support {

// Standard normal instances; every fifth one is held out for validation.
// Labels are 0/1 from a fair coin.
inline Dataset gaussian_dataset(std::size_t n, const Shape& shape, Rng& rng) {
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor x = Tensor::zeros(shape);
    for (double& v : x.values()) v = rng.normal();
    data.instances.push_back(std::move(x));
    data.labels.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    data.splits.push_back(i % 5 == 4 ? Split::validation : Split::train);
  }
  return data;
}

// Every row appears twice, once per split, so that validation loss is the
// training objective evaluated on the full training set.
inline Dataset mirrored(const std::vector<Tensor>& rows) {
  Dataset data;
  for (Split s : {Split::train, Split::validation}) {
    for (const Tensor& x : rows) {
      data.instances.push_back(x);
      data.labels.push_back(0.0);
      data.splits.push_back(s);
    }
  }
  return data;
}

// Rows of a d-dimensional normal with unit variances and constant
// correlation `rho` between every pair of features.
inline std::vector<Tensor> equicorrelated_rows(std::size_t n, std::size_t d, double rho, Rng& rng) {
  std::vector<Tensor> rows;
  const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  for (std::size_t i = 0; i < n; ++i) {
    const double common = rng.normal();
    Tensor x = Tensor::zeros({d});
    for (double& v : x.values()) v = a * common + b * rng.normal();
    rows.push_back(std::move(x));
  }
  return rows;
}

// f(x) = beta . x with no intercept.
inline Model linear_model(const std::vector<double>& beta, OutputKind output = OutputKind::regression) {
  Rng rng(0);
  Model m = build_model(Architecture::linear, output, ModelDims{beta.size(), 0}, rng);
  m.set_parameter("beta", Tensor({beta.size(), 1}, beta));
  return m;
}

}  // namespace mind::test_support
