#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "mind/diffcore/tensor.hpp"

namespace mind {

enum class BasisKind { chebyshev, pulse };

// How a series is split into channels. `projection` gives <x, a_k> a_k;
// `window` routes the raw signal of each pulse window to its own channel.
enum class BasisEncoding { projection, window };

std::string_view to_string(BasisKind kind) noexcept;
BasisKind parse_basis_kind(std::string_view text);
std::string_view to_string(BasisEncoding encoding) noexcept;

struct BasisSet {
  BasisKind kind = BasisKind::chebyshev;
  BasisEncoding encoding = BasisEncoding::projection;
  bool residual_channel = false;
  std::size_t length = 0;
  // (K, T); rows are orthonormal.
  Tensor vectors;

  std::size_t size() const noexcept { return vectors.rank() == 2 ? vectors.extent(0) : 0; }
  // Number of encoded channels: K, plus one when the residual is kept.
  std::size_t channels() const noexcept { return size() + (residual_channel ? 1 : 0); }
  Tensor gram() const;
  // (K, T) 0/1 window indicators; pulse bases only.
  Tensor window_masks() const;
};

// chebyshev: degrees 0..K-1 sampled on T uniform points of [-1, 1] and
// orthonormalized; default K = 3 with a residual channel.
// pulse: K equal windows, default K = 4, window routing.
// K = 0 selects the default.
BasisSet make_basis(BasisKind kind, std::size_t length, std::size_t k = 0);

// x: (T) -> (channels, T). Channels sum back to x whenever the encoding is
// lossless.
Tensor encode(const BasisSet& basis, const Tensor& series);
// (C, T) -> (T).
Tensor decode(const Tensor& components);

}  // namespace mind
