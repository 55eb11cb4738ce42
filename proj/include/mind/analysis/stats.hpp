#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mind/diffcore/tensor.hpp"

namespace mind {

// Per-feature Pearson correlation between x and its transform, pooled over
// instances and timestamps. A feature with zero variance on either side has
// no correlation; it is reported with defined[j] = false and rho[j] = NaN.
struct CorrelationProfile {
  std::vector<double> rho;
  std::vector<bool> defined;

  bool all_defined() const;
};

// Inputs are (N, d) or (N, d, T) batches of equal shape.
CorrelationProfile correlation_profile(const Tensor& x, const Tensor& x_prime);

struct RankCorrelation {
  double rho = 0.0;
  double p_value = 1.0;
  bool defined = true;  // false when either input is constant
};

// Spearman's rho on average ranks; two-sided p-value from the t
// approximation with n - 2 degrees of freedom.
RankCorrelation spearman(std::span<const double> a, std::span<const double> b);
// Average ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);
// P(K > x) for the Kolmogorov distribution.
double kolmogorov_survival(double x);

}  // namespace mind
