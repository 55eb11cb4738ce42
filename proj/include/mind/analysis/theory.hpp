#pragma once

#include <span>
#include <vector>

#include "mind/diffcore/tensor.hpp"

namespace mind {

// Linear model f(x) = beta . x and the second-moment matrix (1/n) sum x x^T
// of its inputs.
struct ClosedFormInputs {
  std::vector<double> beta;
  Tensor second_moment;  // (d, d)
  double lambda = 0.0;
};

struct ClosedFormResult {
  std::vector<double> g;
  bool degenerate = false;  // B C B was singular and a ridge was added
};

constexpr double kClosedFormRidge = 1e-8;

ClosedFormInputs closed_form_inputs(std::span<const double> beta, const Tensor& rows, double lambda);

// Minimizer over g in [0, 1]^d of
//   mean (beta^T (x - g * x))^2 + lambda mean (g * x)^T x
// given by clamp(1 - lambda / 2 (B C B)^-1 diag(C)).
ClosedFormResult closed_form_gating(const ClosedFormInputs& in);

// Smallest lambda that forces g_j = 0 for a feature the model depends on by
// at most c: c sum |x_j| / sum x_j^2.
double weak_invariance_lambda(double c, std::span<const double> samples);

}  // namespace mind
