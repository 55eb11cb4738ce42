#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mind/diffcore/error.hpp"

namespace mind::kernels {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    require(da == db || da == 1 || db == 1, ErrorCode::shape_mismatch,
            "cannot broadcast " + to_string(a) + " with " + to_string(b));
    out[i] = da == 1 ? db : da;
  }
  return out;
}

namespace {

// Strides of `in` viewed with the rank of `out`; broadcast axes get stride 0.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t axis = i + (rank - in.size());
    strides[axis] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t total = element_count(out);
  if (total == 0) return;
  if (out.empty()) {
    f(0, 0, 0);
    return;
  }
  const std::size_t rank = out.size();
  const std::size_t inner = out[rank - 1];
  const std::size_t step_a = sa[rank - 1];
  const std::size_t step_b = sb[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t t = 0; t < inner; ++t) f(o + t, ia + t * step_a, ib + t * step_b);
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      ia += sa[ax];
      ib += sb[ax];
      if (idx[ax] < out[ax]) break;
      ia -= sa[ax] * out[ax];
      ib -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

}  // namespace

void broadcast_forward(Binary op, const Tensor& a, const Tensor& b, Tensor& out) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  if (a.shape() == b.shape()) {
    const std::size_t n = out.size();
    switch (op) {
      case Binary::add: for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i]; break;
      case Binary::sub: for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i]; break;
      case Binary::mul: for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i]; break;
    }
    return;
  }
  const auto sa = broadcast_strides(a.shape(), out.shape());
  const auto sb = broadcast_strides(b.shape(), out.shape());
  switch (op) {
    case Binary::add:
      for_each_broadcast(out.shape(), sa, sb,
                         [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] + pb[j]; });
      break;
    case Binary::sub:
      for_each_broadcast(out.shape(), sa, sb,
                         [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] - pb[j]; });
      break;
    case Binary::mul:
      for_each_broadcast(out.shape(), sa, sb,
                         [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] * pb[j]; });
      break;
  }
}

void broadcast_backward(Binary op, const Tensor& a, const Tensor& b, const Tensor& grad_out,
                        Tensor* grad_a, Tensor* grad_b) {
  const Shape& out = grad_out.shape();
  const auto sa = broadcast_strides(a.shape(), out);
  const auto sb = broadcast_strides(b.shape(), out);
  const double* g = grad_out.data();
  const double* pa = a.data();
  const double* pb = b.data();
  double* ga = grad_a != nullptr ? grad_a->data() : nullptr;
  double* gb = grad_b != nullptr ? grad_b->data() : nullptr;
  const double sign_b = op == Binary::sub ? -1.0 : 1.0;
  for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
    if (op == Binary::mul) {
      if (ga) ga[i] += g[o] * pb[j];
      if (gb) gb[j] += g[o] * pa[i];
    } else {
      if (ga) ga[i] += g[o];
      if (gb) gb[j] += sign_b * g[o];
    }
  });
}

void gemm(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
          std::size_t m, bool transpose_a, bool transpose_b) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = transpose_a ? a[p * n + i] : a[i * k + p];
      if (av == 0.0) continue;
      if (transpose_b) {
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * b[j * k + p];
      } else {
        const double* brow = b + p * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

namespace {

struct ConvDims {
  std::size_t batch, in_channels, length, out_channels, group_in, kernel, out_length,
      group_out;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Conv1dOptions& o) {
  ConvDims d{};
  d.batch = x.shape()[0];
  d.in_channels = x.shape()[1];
  d.length = x.shape()[2];
  d.out_channels = w.shape()[0];
  d.group_in = w.shape()[1];
  d.kernel = w.shape()[2];
  d.out_length = d.length + 2 * o.padding - o.dilation * (d.kernel - 1);
  d.group_out = d.out_channels / o.groups;
  return d;
}

// Output positions t for which t + shift lies inside [0, length).
inline void valid_range(std::ptrdiff_t shift, std::size_t length, std::size_t out_length,
                        std::size_t& lo, std::size_t& hi) {
  const std::ptrdiff_t l = std::max<std::ptrdiff_t>(0, -shift);
  const std::ptrdiff_t h = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_length),
                                                    static_cast<std::ptrdiff_t>(length) - shift);
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(std::max(l, h));
}

}  // namespace

void conv1d_forward(const Tensor& x, const Tensor& w, const Conv1dOptions& options,
                    Tensor& out) {
  const ConvDims d = conv_dims(x, w, options);
  std::fill(out.values().begin(), out.values().end(), 0.0);
  const double* px = x.data();
  const double* pw = w.data();
  double* po = out.data();
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      const std::size_t group = co / d.group_out;
      double* orow = po + (n * d.out_channels + co) * d.out_length;
      for (std::size_t cl = 0; cl < d.group_in; ++cl) {
        const std::size_t ci = group * d.group_in + cl;
        const double* xrow = px + (n * d.in_channels + ci) * d.length;
        const double* wrow = pw + (co * d.group_in + cl) * d.kernel;
        for (std::size_t k = 0; k < d.kernel; ++k) {
          const double wv = wrow[k];
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k * options.dilation) -
                                       static_cast<std::ptrdiff_t>(options.padding);
          std::size_t lo = 0;
          std::size_t hi = 0;
          valid_range(shift, d.length, d.out_length, lo, hi);
          for (std::size_t t = lo; t < hi; ++t) {
            orow[t] += wv * xrow[static_cast<std::ptrdiff_t>(t) + shift];
          }
        }
      }
    }
  }
}

void conv1d_backward(const Tensor& x, const Tensor& w, const Conv1dOptions& options,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w) {
  const ConvDims d = conv_dims(x, w, options);
  const double* px = x.data();
  const double* pw = w.data();
  const double* pg = grad_out.data();
  double* gx = grad_x != nullptr ? grad_x->data() : nullptr;
  double* gw = grad_w != nullptr ? grad_w->data() : nullptr;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      const std::size_t group = co / d.group_out;
      const double* grow = pg + (n * d.out_channels + co) * d.out_length;
      for (std::size_t cl = 0; cl < d.group_in; ++cl) {
        const std::size_t ci = group * d.group_in + cl;
        const std::size_t xoff = (n * d.in_channels + ci) * d.length;
        const std::size_t woff = (co * d.group_in + cl) * d.kernel;
        for (std::size_t k = 0; k < d.kernel; ++k) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k * options.dilation) -
                                       static_cast<std::ptrdiff_t>(options.padding);
          std::size_t lo = 0;
          std::size_t hi = 0;
          valid_range(shift, d.length, d.out_length, lo, hi);
          if (gx != nullptr) {
            const double wv = pw[woff + k];
            double* dst = gx + xoff;
            for (std::size_t t = lo; t < hi; ++t) {
              dst[static_cast<std::ptrdiff_t>(t) + shift] += wv * grow[t];
            }
          }
          if (gw != nullptr) {
            const double* src = px + xoff;
            double acc = 0.0;
            for (std::size_t t = lo; t < hi; ++t) {
              acc += grow[t] * src[static_cast<std::ptrdiff_t>(t) + shift];
            }
            gw[woff + k] += acc;
          }
        }
      }
    }
  }
}

namespace {

struct NormDims {
  std::size_t batch, channels, inner;
};

NormDims norm_dims(const Shape& s) {
  NormDims d{s[0], s[1], 1};
  for (std::size_t i = 2; i < s.size(); ++i) d.inner *= s[i];
  return d;
}

void channel_stats(const Tensor& x, const NormDims& d, double epsilon,
                   std::vector<double>& mean, std::vector<double>& inv_std) {
  const double m = static_cast<double>(d.batch * d.inner);
  mean.assign(d.channels, 0.0);
  inv_std.assign(d.channels, 0.0);
  const double* px = x.data();
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t c = 0; c < d.channels; ++c) {
      const double* p = px + (n * d.channels + c) * d.inner;
      for (std::size_t t = 0; t < d.inner; ++t) mean[c] += p[t];
    }
  }
  for (auto& v : mean) v /= m;
  std::vector<double> var(d.channels, 0.0);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t c = 0; c < d.channels; ++c) {
      const double* p = px + (n * d.channels + c) * d.inner;
      for (std::size_t t = 0; t < d.inner; ++t) {
        const double z = p[t] - mean[c];
        var[c] += z * z;
      }
    }
  }
  for (std::size_t c = 0; c < d.channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] / m + epsilon);
}

}  // namespace

void batch_norm_forward(const Tensor& x, double epsilon, Tensor& out) {
  const NormDims d = norm_dims(x.shape());
  std::vector<double> mean;
  std::vector<double> inv_std;
  channel_stats(x, d, epsilon, mean, inv_std);
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t c = 0; c < d.channels; ++c) {
      const std::size_t off = (n * d.channels + c) * d.inner;
      for (std::size_t t = 0; t < d.inner; ++t) po[off + t] = (px[off + t] - mean[c]) * inv_std[c];
    }
  }
}

void batch_norm_backward(const Tensor& x, double epsilon, const Tensor& grad_out,
                         Tensor& grad_x) {
  const NormDims d = norm_dims(x.shape());
  std::vector<double> mean;
  std::vector<double> inv_std;
  channel_stats(x, d, epsilon, mean, inv_std);
  const double m = static_cast<double>(d.batch * d.inner);
  std::vector<double> sum_g(d.channels, 0.0);
  std::vector<double> sum_gx(d.channels, 0.0);
  const double* px = x.data();
  const double* pg = grad_out.data();
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t c = 0; c < d.channels; ++c) {
      const std::size_t off = (n * d.channels + c) * d.inner;
      for (std::size_t t = 0; t < d.inner; ++t) {
        const double xhat = (px[off + t] - mean[c]) * inv_std[c];
        sum_g[c] += pg[off + t];
        sum_gx[c] += pg[off + t] * xhat;
      }
    }
  }
  double* gx = grad_x.data();
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t c = 0; c < d.channels; ++c) {
      const std::size_t off = (n * d.channels + c) * d.inner;
      for (std::size_t t = 0; t < d.inner; ++t) {
        const double xhat = (px[off + t] - mean[c]) * inv_std[c];
        gx[off + t] += inv_std[c] / m * (m * pg[off + t] - sum_g[c] - xhat * sum_gx[c]);
      }
    }
  }
}

}  // namespace mind::kernels
