#include "mind/transforms/basis.hpp"

#include <cmath>

#include "mind/diffcore/error.hpp"

namespace mind {

std::string_view to_string(BasisKind kind) noexcept {
  return kind == BasisKind::chebyshev ? "chebyshev" : "pulse";
}

BasisKind parse_basis_kind(std::string_view text) {
  if (text == "chebyshev") return BasisKind::chebyshev;
  if (text == "pulse") return BasisKind::pulse;
  fail(ErrorCode::parse, "unknown basis kind '" + std::string(text) + "'");
}

std::string_view to_string(BasisEncoding encoding) noexcept {
  return encoding == BasisEncoding::projection ? "projection" : "window";
}

Tensor BasisSet::gram() const {
  const std::size_t k = size();
  Tensor g = Tensor::zeros({k, k});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < length; ++t) s += vectors[i * length + t] * vectors[j * length + t];
      g[i * k + j] = s;
    }
  }
  return g;
}

Tensor BasisSet::window_masks() const {
  require(kind == BasisKind::pulse, ErrorCode::precondition, "window masks exist for pulse bases only");
  Tensor m = Tensor::zeros(vectors.shape());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = vectors[i] > 0.0 ? 1.0 : 0.0;
  return m;
}

namespace {

// Modified Gram-Schmidt with one re-orthogonalization pass.
void orthonormalize(Tensor& rows, std::size_t k, std::size_t t) {
  for (std::size_t i = 0; i < k; ++i) {
    double* v = rows.data() + i * t;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        const double* u = rows.data() + j * t;
        double dot = 0.0;
        for (std::size_t s = 0; s < t; ++s) dot += u[s] * v[s];
        for (std::size_t s = 0; s < t; ++s) v[s] -= dot * u[s];
      }
    }
    double norm = 0.0;
    for (std::size_t s = 0; s < t; ++s) norm += v[s] * v[s];
    norm = std::sqrt(norm);
    require(norm > 1e-8, ErrorCode::numerical, "basis vectors are linearly dependent");
    for (std::size_t s = 0; s < t; ++s) v[s] /= norm;
  }
}

}  // namespace

BasisSet make_basis(BasisKind kind, std::size_t length, std::size_t k) {
  if (k == 0) k = kind == BasisKind::chebyshev ? 3 : 4;
  require(length > 0, ErrorCode::invalid_argument, "basis length must be positive");
  require(k <= length, ErrorCode::invalid_argument,
          "basis size K=" + std::to_string(k) + " exceeds series length T=" + std::to_string(length));
  BasisSet b;
  b.kind = kind;
  b.length = length;
  b.vectors = Tensor::zeros({k, length});
  if (kind == BasisKind::chebyshev) {
    b.encoding = BasisEncoding::projection;
    b.residual_channel = true;
    for (std::size_t s = 0; s < length; ++s) {
      const double x = length == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(s) / static_cast<double>(length - 1);
      double prev = 1.0, cur = x;
      for (std::size_t d = 0; d < k; ++d) {
        double value;
        if (d == 0) {
          value = 1.0;
        } else if (d == 1) {
          value = x;
        } else {
          value = 2.0 * x * cur - prev;
          prev = cur;
          cur = value;
        }
        b.vectors[d * length + s] = value;
      }
    }
    orthonormalize(b.vectors, k, length);
  } else {
    require(length % k == 0, ErrorCode::invalid_argument,
            "pulse basis needs K=" + std::to_string(k) + " to divide T=" + std::to_string(length));
    b.encoding = BasisEncoding::window;
    b.residual_channel = false;
    const std::size_t w = length / k;
    const double h = 1.0 / std::sqrt(static_cast<double>(w));
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t s = i * w; s < (i + 1) * w; ++s) b.vectors[i * length + s] = h;
    }
  }
  return b;
}

Tensor encode(const BasisSet& basis, const Tensor& series) {
  const std::size_t t = basis.length;
  require(series.size() == t, ErrorCode::shape_mismatch,
          "encode: series length " + std::to_string(series.size()) + " != basis length " + std::to_string(t));
  const std::size_t k = basis.size();
  Tensor out = Tensor::zeros({basis.channels(), t});
  if (basis.encoding == BasisEncoding::window) {
    const Tensor masks = basis.window_masks();
    for (std::size_t i = 0; i < k * t; ++i) out[i] = masks[i] * series[i % t];
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      const double* a = basis.vectors.data() + i * t;
      double c = 0.0;
      for (std::size_t s = 0; s < t; ++s) c += a[s] * series[s];
      for (std::size_t s = 0; s < t; ++s) out[i * t + s] = c * a[s];
    }
  }
  if (basis.residual_channel) {
    for (std::size_t s = 0; s < t; ++s) {
      double r = series[s];
      for (std::size_t i = 0; i < k; ++i) r -= out[i * t + s];
      out[k * t + s] = r;
    }
  }
  return out;
}

Tensor decode(const Tensor& components) {
  require(components.rank() == 2, ErrorCode::shape_mismatch,
          "decode: expects (channels, T), got " + to_string(components.shape()));
  const std::size_t c = components.extent(0), t = components.extent(1);
  Tensor out = Tensor::zeros({t});
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t s = 0; s < t; ++s) out[s] += components[i * t + s];
  }
  return out;
}

}  // namespace mind
