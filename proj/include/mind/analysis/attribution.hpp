#pragma once

#include <cstddef>
#include <vector>

#include "mind/models/model.hpp"

namespace mind {

// Gradient of the model output wrt each input element, (N, ...) -> (N, ...).
Tensor input_gradients(const Model& model, const Tensor& samples);

// Mean over samples and timestamps of |df/dx_j|.
std::vector<double> saliency_scores(const Model& model, const Tensor& samples);

// Integrated gradients from the zero baseline with the midpoint rule,
// (N, ...) -> (N, ...).
Tensor integrated_gradients(const Model& model, const Tensor& samples, std::size_t steps);
// Mean over samples and timestamps of |IG_j|. Needs steps >= 32.
std::vector<double> integrated_gradients_scores(const Model& model, const Tensor& samples, std::size_t steps = 64);

}  // namespace mind
