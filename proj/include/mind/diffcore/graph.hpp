#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mind/diffcore/tensor.hpp"

namespace mind {

enum class OpKind : std::uint8_t {
  leaf,
  constant,
  matmul,
  conv1d,
  add,
  sub,
  mul,
  scale,
  relu,
  gelu,
  sigmoid,
  softplus,
  abs,
  batch_norm,
  sum,
  mean,
  mean_axis,
  row_sum,
  dot,
  l2_norm,
  cosine,
  row_cosine,
  reshape,
};

std::string_view to_string(OpKind op) noexcept;

/// Handle to a node inside one particular Graph.
struct NodeRef {
  std::uint32_t index = 0;
  friend bool operator==(NodeRef, NodeRef) = default;
};

struct Conv1dOptions {
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
};

// Norms below this are treated as zero by the cosine nodes: value 0 and zero
// gradient.
inline constexpr double kCosineNormFloor = 1e-12;
inline constexpr double kBatchNormEpsilon = 1e-5;

/// Static computation DAG.
///
/// Nodes can only reference nodes created before them, so insertion order is
/// a topological order and cycles cannot be expressed. Shapes are inferred and
/// checked when a node is added. A finished graph is immutable and may be
/// evaluated concurrently from several threads.
class Graph {
 public:
  struct Node {
    OpKind op = OpKind::leaf;
    std::uint32_t lhs = 0;
    std::uint32_t rhs = 0;
    Shape shape;
    double scalar = 0.0;      // scale factor / batch-norm epsilon
    std::size_t axis = 0;     // mean_axis
    Conv1dOptions conv;
    std::int32_t payload = -1;  // leaf name / constant slot
  };

  NodeRef leaf(std::string name, Shape shape);
  NodeRef constant(Tensor value);

  NodeRef matmul(NodeRef a, NodeRef b);
  // x: (N, C_in, L), w: (C_out, C_in / groups, K) -> (N, C_out, L_out)
  NodeRef conv1d(NodeRef x, NodeRef w, Conv1dOptions options = {});

  // Elementwise with numpy-style broadcasting.
  NodeRef add(NodeRef a, NodeRef b);
  NodeRef sub(NodeRef a, NodeRef b);
  NodeRef mul(NodeRef a, NodeRef b);
  NodeRef scale(NodeRef a, double factor);

  NodeRef relu(NodeRef a);
  NodeRef gelu(NodeRef a);
  NodeRef sigmoid(NodeRef a);
  NodeRef softplus(NodeRef a);
  NodeRef abs(NodeRef a);

  // Per-channel standardization with the statistics of the current call.
  // Channel axis is 1; statistics pool axis 0 and every axis after 1.
  NodeRef batch_norm(NodeRef x, double epsilon = kBatchNormEpsilon);

  NodeRef sum(NodeRef a);
  NodeRef mean(NodeRef a);
  NodeRef mean_axis(NodeRef a, std::size_t axis);
  NodeRef row_sum(NodeRef a);  // (N, ...) -> (N)

  NodeRef dot(NodeRef a, NodeRef b);
  NodeRef l2_norm(NodeRef a);
  NodeRef cosine(NodeRef a, NodeRef b);      // flattened, scalar
  NodeRef row_cosine(NodeRef a, NodeRef b);  // (N, ...) x (N, ...) -> (N)

  NodeRef reshape(NodeRef a, Shape shape);

  void set_output(NodeRef node);
  NodeRef output() const;
  bool has_output() const noexcept { return has_output_; }

  const Shape& shape(NodeRef node) const;
  const Node& node(NodeRef node) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  bool has_leaf(const std::string& name) const;
  NodeRef leaf_ref(const std::string& name) const;
  const std::string& leaf_name(NodeRef node) const;
  std::vector<std::string> leaf_names() const;
  const Tensor& constant_value(NodeRef node) const;

 private:
  NodeRef push(Node node);
  void check(NodeRef node) const;

  std::vector<Node> nodes_;
  std::vector<std::string> leaf_names_;
  std::unordered_map<std::string, std::uint32_t> leaf_index_;
  std::vector<Tensor> constants_;
  std::uint32_t output_ = 0;
  bool has_output_ = false;
};

using Bindings = std::unordered_map<std::string, Tensor>;
using GradientMap = std::map<std::string, Tensor>;

// Forward value of the graph output.
Tensor evaluate(const Graph& graph, const Bindings& bindings);
// Forward values of arbitrary nodes (one forward pass).
std::vector<Tensor> evaluate(const Graph& graph, const Bindings& bindings,
                             std::span<const NodeRef> nodes);

struct ValueAndGradient {
  double value = 0.0;
  GradientMap gradients;
};

// Reverse-mode gradient of the scalar output with respect to the named
// leaves. Leaves that do not reach the output receive exact zeros.
GradientMap gradient(const Graph& graph, const Bindings& bindings,
                     std::span<const std::string> wrt);
ValueAndGradient value_and_gradient(const Graph& graph, const Bindings& bindings,
                                    std::span<const std::string> wrt);

// Convenience: a one-off cosine similarity of two equally shaped tensors with
// the same zero-norm guard as the graph node.
double cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace mind
