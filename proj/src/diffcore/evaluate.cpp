#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <unordered_set>

#include "kernels.hpp"
#include "mind/diffcore/error.hpp"
#include "mind/diffcore/graph.hpp"

namespace mind {

namespace {

using Node = Graph::Node;

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double squared_norm(const double* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p[i] * p[i];
  return s;
}

double inner(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Cosine of two length-n rows with the zero-norm guard.
double guarded_cosine(const double* a, const double* b, std::size_t n) {
  const double na = std::sqrt(squared_norm(a, n));
  const double nb = std::sqrt(squared_norm(b, n));
  if (na < kCosineNormFloor || nb < kCosineNormFloor) return 0.0;
  return inner(a, b, n) / (na * nb);
}

// d cos / d a and d cos / d b scaled by g, accumulated.
void guarded_cosine_backward(const double* a, const double* b, std::size_t n, double g,
                             double* ga, double* gb) {
  const double na = std::sqrt(squared_norm(a, n));
  const double nb = std::sqrt(squared_norm(b, n));
  if (na < kCosineNormFloor || nb < kCosineNormFloor) return;
  const double c = inner(a, b, n) / (na * nb);
  const double inv = 1.0 / (na * nb);
  for (std::size_t i = 0; i < n; ++i) {
    if (ga) ga[i] += g * (b[i] * inv - c * a[i] / (na * na));
    if (gb) gb[i] += g * (a[i] * inv - c * b[i] / (nb * nb));
  }
}

kernels::Binary binary_of(OpKind op) {
  switch (op) {
    case OpKind::add: return kernels::Binary::add;
    case OpKind::sub: return kernels::Binary::sub;
    default: return kernels::Binary::mul;
  }
}

bool is_binary(OpKind op) {
  switch (op) {
    case OpKind::matmul:
    case OpKind::conv1d:
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
    case OpKind::dot:
    case OpKind::cosine:
    case OpKind::row_cosine:
      return true;
    default:
      return false;
  }
}

bool has_inputs(OpKind op) { return op != OpKind::leaf && op != OpKind::constant; }

// Forward workspace: values of every node needed for the requested outputs.
class Forward {
 public:
  Forward(const Graph& graph, const Bindings& bindings, std::span<const NodeRef> targets)
      : graph_(graph), values_(graph.size()), needed_(graph.size(), false) {
    for (NodeRef t : targets) needed_.at(t.index) = true;
    for (std::size_t i = graph.size(); i-- > 0;) {
      if (!needed_[i]) continue;
      const Node& n = graph.node(NodeRef{static_cast<std::uint32_t>(i)});
      if (!has_inputs(n.op)) continue;
      needed_[n.lhs] = true;
      if (is_binary(n.op)) needed_[n.rhs] = true;
    }
    for (std::size_t i = 0; i < graph.size(); ++i) {
      if (needed_[i]) compute(NodeRef{static_cast<std::uint32_t>(i)}, bindings);
    }
  }

  const Tensor& value(std::size_t i) const { return *values_[i]; }

 private:
  void compute(NodeRef ref, const Bindings& bindings) {
    const Node& n = graph_.node(ref);
    const std::size_t i = ref.index;
    switch (n.op) {
      case OpKind::leaf: {
        const std::string& name = graph_.leaf_name(ref);
        const auto it = bindings.find(name);
        require(it != bindings.end(), ErrorCode::unbound_leaf, "leaf '" + name + "' is not bound");
        require(it->second.shape() == n.shape, ErrorCode::shape_mismatch,
                "leaf '" + name + "' expects shape " + to_string(n.shape) + ", bound " +
                    to_string(it->second.shape()));
        values_[i] = &it->second;
        return;
      }
      case OpKind::constant:
        values_[i] = &graph_.constant_value(ref);
        return;
      default:
        break;
    }
    owned_.push_back(std::make_unique<Tensor>(Tensor::zeros(n.shape)));
    Tensor& out = *owned_.back();
    values_[i] = &out;
    const Tensor& a = *values_[n.lhs];
    const Tensor* b = is_binary(n.op) ? values_[n.rhs] : nullptr;
    double* po = out.data();
    const double* pa = a.data();
    const std::size_t size_a = a.size();
    switch (n.op) {
      case OpKind::matmul:
        kernels::gemm(pa, b->data(), po, a.shape()[0], a.shape()[1], b->shape()[1], false, false);
        break;
      case OpKind::conv1d:
        kernels::conv1d_forward(a, *b, n.conv, out);
        break;
      case OpKind::add:
      case OpKind::sub:
      case OpKind::mul:
        kernels::broadcast_forward(binary_of(n.op), a, *b, out);
        break;
      case OpKind::scale:
        for (std::size_t k = 0; k < size_a; ++k) po[k] = n.scalar * pa[k];
        break;
      case OpKind::relu:
        for (std::size_t k = 0; k < size_a; ++k) po[k] = pa[k] > 0.0 ? pa[k] : 0.0;
        break;
      case OpKind::gelu:
        for (std::size_t k = 0; k < size_a; ++k) po[k] = gelu_value(pa[k]);
        break;
      case OpKind::sigmoid:
        for (std::size_t k = 0; k < size_a; ++k) po[k] = sigmoid_value(pa[k]);
        break;
      case OpKind::softplus:
        for (std::size_t k = 0; k < size_a; ++k) po[k] = softplus_value(pa[k]);
        break;
      case OpKind::abs:
        for (std::size_t k = 0; k < size_a; ++k) po[k] = std::abs(pa[k]);
        break;
      case OpKind::batch_norm:
        kernels::batch_norm_forward(a, n.scalar, out);
        break;
      case OpKind::sum: {
        double s = 0.0;
        for (std::size_t k = 0; k < size_a; ++k) s += pa[k];
        po[0] = s;
        break;
      }
      case OpKind::mean: {
        double s = 0.0;
        for (std::size_t k = 0; k < size_a; ++k) s += pa[k];
        po[0] = s / static_cast<double>(size_a);
        break;
      }
      case OpKind::mean_axis: {
        const Shape& s = a.shape();
        std::size_t outer = 1;
        for (std::size_t k = 0; k < n.axis; ++k) outer *= s[k];
        const std::size_t extent = s[n.axis];
        const std::size_t inner = size_a / (outer * extent);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t e = 0; e < extent; ++e) {
            const double* src = pa + (o * extent + e) * inner;
            double* dst = po + o * inner;
            for (std::size_t k = 0; k < inner; ++k) dst[k] += src[k];
          }
        }
        const double inv = 1.0 / static_cast<double>(extent);
        for (std::size_t k = 0; k < out.size(); ++k) po[k] *= inv;
        break;
      }
      case OpKind::row_sum: {
        const std::size_t rows = a.shape()[0];
        const std::size_t width = rows == 0 ? 0 : size_a / rows;
        for (std::size_t r = 0; r < rows; ++r) {
          double s = 0.0;
          for (std::size_t k = 0; k < width; ++k) s += pa[r * width + k];
          po[r] = s;
        }
        break;
      }
      case OpKind::dot:
        po[0] = inner(pa, b->data(), size_a);
        break;
      case OpKind::l2_norm:
        po[0] = std::sqrt(squared_norm(pa, size_a));
        break;
      case OpKind::cosine:
        po[0] = guarded_cosine(pa, b->data(), size_a);
        break;
      case OpKind::row_cosine: {
        const std::size_t rows = a.shape()[0];
        const std::size_t width = rows == 0 ? 0 : size_a / rows;
        for (std::size_t r = 0; r < rows; ++r) {
          po[r] = guarded_cosine(pa + r * width, b->data() + r * width, width);
        }
        break;
      }
      case OpKind::reshape:
        std::copy_n(pa, size_a, po);
        break;
      case OpKind::leaf:
      case OpKind::constant:
        break;
    }
  }

  const Graph& graph_;
  std::vector<const Tensor*> values_;
  std::vector<bool> needed_;
  std::vector<std::unique_ptr<Tensor>> owned_;
};

class Backward {
 public:
  Backward(const Graph& graph, const Forward& forward, std::span<const std::string> wrt)
      : graph_(graph),
        forward_(forward),
        adjoint_(graph.size()),
        present_(graph.size(), false),
        active_(graph.size(), false) {
    std::unordered_set<std::uint32_t> targets;
    for (const auto& name : wrt) targets.insert(graph.leaf_ref(name).index);
    for (std::size_t i = 0; i < graph.size(); ++i) {
      const Node& n = graph.node(NodeRef{static_cast<std::uint32_t>(i)});
      if (n.op == OpKind::leaf) {
        active_[i] = targets.contains(static_cast<std::uint32_t>(i));
      } else if (has_inputs(n.op)) {
        active_[i] = active_[n.lhs] || (is_binary(n.op) && active_[n.rhs]);
      }
    }
    const std::uint32_t out = graph.output().index;
    if (!active_[out]) return;
    adjoint_[out] = Tensor::full(graph.node(NodeRef{out}).shape, 1.0);
    present_[out] = true;
    for (std::size_t i = out + 1; i-- > 0;) {
      if (!active_[i] || !present_[i]) continue;
      const Node& n = graph.node(NodeRef{static_cast<std::uint32_t>(i)});
      if (has_inputs(n.op)) propagate(n, i);
    }
  }

  Tensor take(std::uint32_t leaf) {
    if (!present_[leaf]) return Tensor::zeros(graph_.node(NodeRef{leaf}).shape);
    present_[leaf] = false;
    return std::move(adjoint_[leaf]);
  }

 private:
  Tensor* slot(std::uint32_t i) {
    if (!active_[i]) return nullptr;
    if (!present_[i]) {
      adjoint_[i] = Tensor::zeros(graph_.node(NodeRef{i}).shape);
      present_[i] = true;
    }
    return &adjoint_[i];
  }

  void propagate(const Node& n, std::size_t i) {
    const Tensor& g = adjoint_[i];
    const Tensor& y = forward_.value(i);
    const Tensor& a = forward_.value(n.lhs);
    const Tensor* b = is_binary(n.op) ? &forward_.value(n.rhs) : nullptr;
    Tensor* ga = slot(n.lhs);
    Tensor* gb = is_binary(n.op) ? slot(n.rhs) : nullptr;
    const double* pg = g.data();
    const double* pa = a.data();
    const std::size_t size_a = a.size();
    switch (n.op) {
      case OpKind::matmul: {
        const std::size_t rows = a.shape()[0];
        const std::size_t inner_dim = a.shape()[1];
        const std::size_t cols = b->shape()[1];
        // dA = dC B^T, dB = A^T dC
        if (ga) kernels::gemm(pg, b->data(), ga->data(), rows, cols, inner_dim, false, true);
        if (gb) kernels::gemm(pa, pg, gb->data(), inner_dim, rows, cols, true, false);
        break;
      }
      case OpKind::conv1d:
        kernels::conv1d_backward(a, *b, n.conv, g, ga, gb);
        break;
      case OpKind::add:
      case OpKind::sub:
      case OpKind::mul:
        kernels::broadcast_backward(binary_of(n.op), a, *b, g, ga, gb);
        break;
      case OpKind::scale:
        for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += n.scalar * pg[k];
        break;
      case OpKind::relu:
        for (std::size_t k = 0; k < size_a; ++k) {
          if (pa[k] > 0.0) ga->data()[k] += pg[k];
        }
        break;
      case OpKind::gelu:
        for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += pg[k] * gelu_derivative(pa[k]);
        break;
      case OpKind::sigmoid: {
        const double* py = y.data();
        for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += pg[k] * py[k] * (1.0 - py[k]);
        break;
      }
      case OpKind::softplus:
        for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += pg[k] * sigmoid_value(pa[k]);
        break;
      case OpKind::abs:
        for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += pg[k] * sign_of(pa[k]);
        break;
      case OpKind::batch_norm:
        kernels::batch_norm_backward(a, n.scalar, g, *ga);
        break;
      case OpKind::sum:
        for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += pg[0];
        break;
      case OpKind::mean: {
        const double s = pg[0] / static_cast<double>(size_a);
        for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += s;
        break;
      }
      case OpKind::mean_axis: {
        const Shape& s = a.shape();
        std::size_t outer = 1;
        for (std::size_t k = 0; k < n.axis; ++k) outer *= s[k];
        const std::size_t extent = s[n.axis];
        const std::size_t inner_size = size_a / (outer * extent);
        const double inv = 1.0 / static_cast<double>(extent);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t e = 0; e < extent; ++e) {
            double* dst = ga->data() + (o * extent + e) * inner_size;
            const double* src = pg + o * inner_size;
            for (std::size_t k = 0; k < inner_size; ++k) dst[k] += inv * src[k];
          }
        }
        break;
      }
      case OpKind::row_sum: {
        const std::size_t rows = a.shape()[0];
        const std::size_t width = rows == 0 ? 0 : size_a / rows;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t k = 0; k < width; ++k) ga->data()[r * width + k] += pg[r];
        }
        break;
      }
      case OpKind::dot: {
        const double* pb = b->data();
        if (ga) for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += pg[0] * pb[k];
        if (gb) for (std::size_t k = 0; k < size_a; ++k) gb->data()[k] += pg[0] * pa[k];
        break;
      }
      case OpKind::l2_norm: {
        const double norm = y.item();
        if (norm > 0.0) {
          for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += pg[0] * pa[k] / norm;
        }
        break;
      }
      case OpKind::cosine:
        guarded_cosine_backward(pa, b->data(), size_a, pg[0], ga ? ga->data() : nullptr,
                                gb ? gb->data() : nullptr);
        break;
      case OpKind::row_cosine: {
        const std::size_t rows = a.shape()[0];
        const std::size_t width = rows == 0 ? 0 : size_a / rows;
        for (std::size_t r = 0; r < rows; ++r) {
          guarded_cosine_backward(pa + r * width, b->data() + r * width, width, pg[r],
                                  ga ? ga->data() + r * width : nullptr,
                                  gb ? gb->data() + r * width : nullptr);
        }
        break;
      }
      case OpKind::reshape:
        for (std::size_t k = 0; k < size_a; ++k) ga->data()[k] += pg[k];
        break;
      case OpKind::leaf:
      case OpKind::constant:
        break;
    }
  }

  const Graph& graph_;
  const Forward& forward_;
  std::vector<Tensor> adjoint_;
  std::vector<bool> present_;
  std::vector<bool> active_;
};

void check_wrt(const Graph& graph, std::span<const std::string> wrt) {
  for (const auto& name : wrt) {
    require(graph.has_leaf(name), ErrorCode::unbound_leaf,
            "gradient requested for unknown leaf '" + name + "'");
  }
}

}  // namespace

Tensor evaluate(const Graph& graph, const Bindings& bindings) {
  const NodeRef out = graph.output();
  const Forward forward(graph, bindings, std::span<const NodeRef>(&out, 1));
  return forward.value(out.index);
}

std::vector<Tensor> evaluate(const Graph& graph, const Bindings& bindings,
                             std::span<const NodeRef> nodes) {
  const Forward forward(graph, bindings, nodes);
  std::vector<Tensor> out;
  out.reserve(nodes.size());
  for (NodeRef n : nodes) out.push_back(forward.value(n.index));
  return out;
}

ValueAndGradient value_and_gradient(const Graph& graph, const Bindings& bindings,
                                    std::span<const std::string> wrt) {
  check_wrt(graph, wrt);
  const NodeRef out = graph.output();
  require(element_count(graph.shape(out)) == 1, ErrorCode::non_scalar_output,
          "gradient needs a scalar output, graph output has shape " + to_string(graph.shape(out)));
  const Forward forward(graph, bindings, std::span<const NodeRef>(&out, 1));
  // Leaves outside the output's cone still have to be bound.
  for (const auto& name : wrt) {
    const NodeRef leaf = graph.leaf_ref(name);
    const auto it = bindings.find(name);
    require(it != bindings.end(), ErrorCode::unbound_leaf, "leaf '" + name + "' is not bound");
    require(it->second.shape() == graph.shape(leaf), ErrorCode::shape_mismatch,
            "leaf '" + name + "' expects shape " + to_string(graph.shape(leaf)));
  }
  Backward backward(graph, forward, wrt);
  ValueAndGradient result;
  result.value = forward.value(out.index).item();
  for (const auto& name : wrt) {
    result.gradients.insert_or_assign(name, backward.take(graph.leaf_ref(name).index));
  }
  return result;
}

GradientMap gradient(const Graph& graph, const Bindings& bindings,
                     std::span<const std::string> wrt) {
  return value_and_gradient(graph, bindings, wrt).gradients;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::shape_mismatch,
          "cosine_similarity: shapes differ " + to_string(a.shape()) + " vs " +
              to_string(b.shape()));
  return guarded_cosine(a.data(), b.data(), a.size());
}

}  // namespace mind
