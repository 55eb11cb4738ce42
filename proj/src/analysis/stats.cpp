#include "mind/analysis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "mind/diffcore/error.hpp"

namespace mind {

bool CorrelationProfile::all_defined() const {
  return std::all_of(defined.begin(), defined.end(), [](bool b) { return b; });
}

namespace {

// Pearson correlation; NaN if either side is (numerically) constant.
double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  // Sums of identical values leave rounding residue around 1e-16 relative.
  const double floor_a = 1e-24 * n * std::max(1.0, ma * ma);
  const double floor_b = 1e-24 * n * std::max(1.0, mb * mb);
  if (saa <= floor_a || sbb <= floor_b) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace

CorrelationProfile correlation_profile(const Tensor& x, const Tensor& x_prime) {
  require(x.shape() == x_prime.shape(), ErrorCode::shape_mismatch,
          "correlation_profile: " + to_string(x.shape()) + " vs " + to_string(x_prime.shape()));
  require(x.rank() == 2 || x.rank() == 3, ErrorCode::shape_mismatch,
          "correlation_profile expects (N, d) or (N, d, T), got " + to_string(x.shape()));
  require(x.extent(0) > 0, ErrorCode::invalid_argument, "correlation_profile: empty batch");
  const std::size_t n = x.extent(0), d = x.extent(1), t = x.rank() == 3 ? x.extent(2) : 1;
  CorrelationProfile out;
  std::vector<double> a(n * t), b(n * t);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = 0; s < t; ++s) {
        a[i * t + s] = x[(i * d + j) * t + s];
        b[i * t + s] = x_prime[(i * d + j) * t + s];
      }
    }
    const double r = pearson(a, b);
    out.rho.push_back(r);
    out.defined.push_back(!std::isnan(r));
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

RankCorrelation spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::shape_mismatch,
          "spearman: lengths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  require(a.size() >= 3, ErrorCode::invalid_argument, "spearman needs at least 3 pairs");
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(std::isfinite(a[i]) && std::isfinite(b[i]), ErrorCode::non_finite, "spearman: non-finite input");
  }
  const auto ra = average_ranks(a), rb = average_ranks(b);
  RankCorrelation out;
  const double rho = pearson(ra, rb);
  if (std::isnan(rho)) {
    out.defined = false;
    out.rho = std::numeric_limits<double>::quiet_NaN();
    out.p_value = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.rho = rho;
  const double dof = static_cast<double>(a.size() - 2);
  if (std::abs(rho) >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double t = std::abs(rho) * std::sqrt(dof / (1.0 - rho * rho));
    const boost::math::students_t dist(dof);
    out.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
  }
  return out;
}

double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (x < 1.18) {
    // P(K <= x) = sqrt(2 pi) / x sum_k exp(-(2k-1)^2 pi^2 / (8 x^2))
    const double w = std::sqrt(2.0 * pi) / x;
    double s = 0.0;
    for (int k = 1; k < 50; ++k) {
      const double term = std::exp(-static_cast<double>((2 * k - 1) * (2 * k - 1)) * pi * pi / (8.0 * x * x));
      s += term;
      if (term < 1e-17 * s) break;
    }
    return std::clamp(1.0 - w * s, 0.0, 1.0);
  }
  // Q(x) = 2 sum_k (-1)^(k-1) exp(-2 k^2 x^2)
  double s = 0.0, sign = 1.0;
  for (int k = 1; k < 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += sign * term;
    sign = -sign;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), ErrorCode::invalid_argument, "ks_two_sample: both samples must be nonempty");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  KsResult out;
  out.statistic = d;
  const double en = std::sqrt(n * m / (n + m));
  out.p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
  return out;
}

}  // namespace mind
