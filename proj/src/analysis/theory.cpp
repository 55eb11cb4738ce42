#include "mind/analysis/theory.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "mind/diffcore/error.hpp"

namespace mind {

ClosedFormInputs closed_form_inputs(std::span<const double> beta, const Tensor& rows, double lambda) {
  require(rows.rank() == 2 && rows.extent(1) == beta.size(), ErrorCode::shape_mismatch,
          "closed_form_inputs: rows " + to_string(rows.shape()) + " do not match " + std::to_string(beta.size()) +
              " coefficients");
  require(rows.extent(0) > 0, ErrorCode::invalid_argument, "closed_form_inputs: no rows");
  const std::size_t n = rows.extent(0), d = beta.size();
  ClosedFormInputs in;
  in.beta.assign(beta.begin(), beta.end());
  in.lambda = lambda;
  in.second_moment = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) in.second_moment[a * d + b] += rows[i * d + a] * rows[i * d + b];
    }
  }
  for (double& v : in.second_moment.values()) v /= static_cast<double>(n);
  return in;
}

ClosedFormResult closed_form_gating(const ClosedFormInputs& in) {
  const std::size_t d = in.beta.size();
  require(d > 0, ErrorCode::invalid_argument, "closed_form_gating: empty coefficient vector");
  require(in.second_moment.shape() == Shape{d, d}, ErrorCode::shape_mismatch,
          "closed_form_gating: second moment " + to_string(in.second_moment.shape()) + " for d=" + std::to_string(d));
  require(in.lambda >= 0.0, ErrorCode::invalid_argument, "closed_form_gating: lambda must be nonnegative");
  Eigen::MatrixXd c(d, d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      c(a, b) = in.second_moment[a * d + b];
      require(std::isfinite(c(a, b)), ErrorCode::non_finite, "closed_form_gating: non-finite second moment");
    }
  }
  require((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff()),
          ErrorCode::invalid_argument, "closed_form_gating: second-moment matrix is not symmetric");

  ClosedFormResult out;
  out.g.resize(d);
  const bool diagonal = (c - Eigen::MatrixXd(c.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  bool invertible_diag = true;
  for (std::size_t j = 0; j < d; ++j) invertible_diag = invertible_diag && in.beta[j] != 0.0 && c(j, j) != 0.0;
  if (diagonal && invertible_diag) {
    // Elementwise, so that unit variances give lambda / (2 beta^2) exactly.
    for (std::size_t j = 0; j < d; ++j) {
      const double u = in.lambda * c(j, j) / (2.0 * in.beta[j] * in.beta[j] * c(j, j));
      out.g[j] = std::clamp(1.0 - u, 0.0, 1.0);
    }
    return out;
  }

  const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(in.beta.data(), static_cast<Eigen::Index>(d));
  Eigen::MatrixXd bcb = beta.asDiagonal() * c * beta.asDiagonal();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(bcb);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    out.degenerate = true;
    bcb += kClosedFormRidge * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    lu.compute(bcb);
  }
  const Eigen::VectorXd u = 0.5 * in.lambda * lu.solve(Eigen::VectorXd(c.diagonal()));
  for (std::size_t j = 0; j < d; ++j) {
    const double v = u(static_cast<Eigen::Index>(j));
    require(std::isfinite(v), ErrorCode::numerical, "closed_form_gating: solve produced a non-finite value");
    out.g[j] = std::clamp(1.0 - v, 0.0, 1.0);
  }
  return out;
}

double weak_invariance_lambda(double c, std::span<const double> samples) {
  require(c >= 0.0 && std::isfinite(c), ErrorCode::invalid_argument, "weak_invariance_lambda: C must be >= 0");
  require(!samples.empty(), ErrorCode::invalid_argument, "weak_invariance_lambda: no samples");
  double s1 = 0.0, s2 = 0.0;
  for (double x : samples) {
    s1 += std::abs(x);
    s2 += x * x;
  }
  require(s2 > 0.0, ErrorCode::invalid_argument, "weak_invariance_lambda: feature is identically zero");
  return c * s1 / s2;
}

}  // namespace mind
