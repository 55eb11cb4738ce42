#include "mind/diffcore/graph.hpp"

#include <algorithm>

#include "mind/diffcore/error.hpp"
#include "kernels.hpp"

namespace mind {

std::string_view to_string(OpKind op) noexcept {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::conv1d: return "conv1d";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::relu: return "relu";
    case OpKind::gelu: return "gelu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softplus: return "softplus";
    case OpKind::abs: return "abs";
    case OpKind::batch_norm: return "batch_norm";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::mean_axis: return "mean_axis";
    case OpKind::row_sum: return "row_sum";
    case OpKind::dot: return "dot";
    case OpKind::l2_norm: return "l2_norm";
    case OpKind::cosine: return "cosine";
    case OpKind::row_cosine: return "row_cosine";
    case OpKind::reshape: return "reshape";
  }
  return "unknown";
}

namespace {

Graph::Node unary(OpKind op, NodeRef a, Shape shape) {
  Graph::Node n;
  n.op = op;
  n.lhs = a.index;
  n.shape = std::move(shape);
  return n;
}

Graph::Node binary(OpKind op, NodeRef a, NodeRef b, Shape shape) {
  Graph::Node n = unary(op, a, std::move(shape));
  n.rhs = b.index;
  return n;
}

}  // namespace

NodeRef Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeRef{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::check(NodeRef node) const {
  require(node.index < nodes_.size(), ErrorCode::invalid_argument,
          "node " + std::to_string(node.index) + " does not belong to this graph");
}

NodeRef Graph::leaf(std::string name, Shape shape) {
  require(!leaf_index_.contains(name), ErrorCode::invalid_argument,
          "duplicate leaf name '" + name + "'");
  Node n;
  n.op = OpKind::leaf;
  n.shape = std::move(shape);
  n.payload = static_cast<std::int32_t>(leaf_names_.size());
  leaf_names_.push_back(name);
  const NodeRef ref = push(std::move(n));
  leaf_index_.emplace(std::move(name), ref.index);
  return ref;
}

NodeRef Graph::constant(Tensor value) {
  Node n;
  n.op = OpKind::constant;
  n.shape = value.shape();
  n.payload = static_cast<std::int32_t>(constants_.size());
  constants_.push_back(std::move(value));
  return push(std::move(n));
}

NodeRef Graph::matmul(NodeRef a, NodeRef b) {
  check(a);
  check(b);
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  require(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0], ErrorCode::shape_mismatch,
          "matmul: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  return push(binary(OpKind::matmul, a, b, {sa[0], sb[1]}));
}

NodeRef Graph::conv1d(NodeRef x, NodeRef w, Conv1dOptions options) {
  check(x);
  check(w);
  const Shape& sx = shape(x);
  const Shape& sw = shape(w);
  require(sx.size() == 3 && sw.size() == 3, ErrorCode::shape_mismatch,
          "conv1d: expects input (N, C, L) and weight (C_out, C_in/groups, K), got " +
              to_string(sx) + " and " + to_string(sw));
  require(options.groups >= 1 && options.dilation >= 1, ErrorCode::invalid_argument,
          "conv1d: groups and dilation must be positive");
  const std::size_t groups = options.groups;
  require(sx[1] % groups == 0 && sw[0] % groups == 0 && sw[1] * groups == sx[1],
          ErrorCode::shape_mismatch,
          "conv1d: channel counts " + to_string(sx) + " / " + to_string(sw) +
              " are inconsistent with groups=" + std::to_string(groups));
  const std::size_t span = options.dilation * (sw[2] - 1) + 1;
  require(sw[2] >= 1 && sx[2] + 2 * options.padding >= span, ErrorCode::shape_mismatch,
          "conv1d: kernel longer than padded input");
  const std::size_t out_len = sx[2] + 2 * options.padding - span + 1;
  Node n = binary(OpKind::conv1d, x, w, {sx[0], sw[0], out_len});
  n.conv = options;
  return push(std::move(n));
}

NodeRef Graph::add(NodeRef a, NodeRef b) {
  check(a);
  check(b);
  return push(binary(OpKind::add, a, b, kernels::broadcast_shape(shape(a), shape(b))));
}

NodeRef Graph::sub(NodeRef a, NodeRef b) {
  check(a);
  check(b);
  return push(binary(OpKind::sub, a, b, kernels::broadcast_shape(shape(a), shape(b))));
}

NodeRef Graph::mul(NodeRef a, NodeRef b) {
  check(a);
  check(b);
  return push(binary(OpKind::mul, a, b, kernels::broadcast_shape(shape(a), shape(b))));
}

NodeRef Graph::scale(NodeRef a, double factor) {
  check(a);
  Node n = unary(OpKind::scale, a, shape(a));
  n.scalar = factor;
  return push(std::move(n));
}

NodeRef Graph::relu(NodeRef a) {
  check(a);
  return push(unary(OpKind::relu, a, shape(a)));
}

NodeRef Graph::gelu(NodeRef a) {
  check(a);
  return push(unary(OpKind::gelu, a, shape(a)));
}

NodeRef Graph::sigmoid(NodeRef a) {
  check(a);
  return push(unary(OpKind::sigmoid, a, shape(a)));
}

NodeRef Graph::softplus(NodeRef a) {
  check(a);
  return push(unary(OpKind::softplus, a, shape(a)));
}

NodeRef Graph::abs(NodeRef a) {
  check(a);
  return push(unary(OpKind::abs, a, shape(a)));
}

NodeRef Graph::batch_norm(NodeRef x, double epsilon) {
  check(x);
  require(shape(x).size() >= 2, ErrorCode::shape_mismatch,
          "batch_norm: needs at least (N, C), got " + to_string(shape(x)));
  require(epsilon > 0.0, ErrorCode::invalid_argument, "batch_norm: epsilon must be positive");
  Node n = unary(OpKind::batch_norm, x, shape(x));
  n.scalar = epsilon;
  return push(std::move(n));
}

NodeRef Graph::sum(NodeRef a) {
  check(a);
  return push(unary(OpKind::sum, a, {}));
}

NodeRef Graph::mean(NodeRef a) {
  check(a);
  require(element_count(shape(a)) > 0, ErrorCode::shape_mismatch, "mean of empty tensor");
  return push(unary(OpKind::mean, a, {}));
}

NodeRef Graph::mean_axis(NodeRef a, std::size_t axis) {
  check(a);
  const Shape& s = shape(a);
  require(axis < s.size() && s[axis] > 0, ErrorCode::shape_mismatch,
          "mean_axis: axis " + std::to_string(axis) + " invalid for " + to_string(s));
  Shape out = s;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  Node n = unary(OpKind::mean_axis, a, std::move(out));
  n.axis = axis;
  return push(std::move(n));
}

NodeRef Graph::row_sum(NodeRef a) {
  check(a);
  const Shape& s = shape(a);
  require(!s.empty(), ErrorCode::shape_mismatch, "row_sum: needs a leading batch axis");
  return push(unary(OpKind::row_sum, a, {s[0]}));
}

NodeRef Graph::dot(NodeRef a, NodeRef b) {
  check(a);
  check(b);
  require(shape(a) == shape(b), ErrorCode::shape_mismatch,
          "dot: shapes differ " + to_string(shape(a)) + " vs " + to_string(shape(b)));
  return push(binary(OpKind::dot, a, b, {}));
}

NodeRef Graph::l2_norm(NodeRef a) {
  check(a);
  return push(unary(OpKind::l2_norm, a, {}));
}

NodeRef Graph::cosine(NodeRef a, NodeRef b) {
  check(a);
  check(b);
  require(shape(a) == shape(b), ErrorCode::shape_mismatch,
          "cosine: shapes differ " + to_string(shape(a)) + " vs " + to_string(shape(b)));
  return push(binary(OpKind::cosine, a, b, {}));
}

NodeRef Graph::row_cosine(NodeRef a, NodeRef b) {
  check(a);
  check(b);
  const Shape& s = shape(a);
  require(s == shape(b) && !s.empty(), ErrorCode::shape_mismatch,
          "row_cosine: shapes differ or lack a batch axis: " + to_string(s) + " vs " +
              to_string(shape(b)));
  return push(binary(OpKind::row_cosine, a, b, {s[0]}));
}

NodeRef Graph::reshape(NodeRef a, Shape new_shape) {
  check(a);
  require(element_count(new_shape) == element_count(shape(a)), ErrorCode::shape_mismatch,
          "reshape: " + to_string(shape(a)) + " -> " + to_string(new_shape));
  return push(unary(OpKind::reshape, a, std::move(new_shape)));
}

void Graph::set_output(NodeRef node) {
  check(node);
  output_ = node.index;
  has_output_ = true;
}

NodeRef Graph::output() const {
  require(has_output_, ErrorCode::precondition, "graph has no output node");
  return NodeRef{output_};
}

const Shape& Graph::shape(NodeRef node) const {
  check(node);
  return nodes_[node.index].shape;
}

const Graph::Node& Graph::node(NodeRef node) const {
  check(node);
  return nodes_[node.index];
}

bool Graph::has_leaf(const std::string& name) const { return leaf_index_.contains(name); }

NodeRef Graph::leaf_ref(const std::string& name) const {
  const auto it = leaf_index_.find(name);
  require(it != leaf_index_.end(), ErrorCode::unbound_leaf, "graph has no leaf '" + name + "'");
  return NodeRef{it->second};
}

const std::string& Graph::leaf_name(NodeRef node) const {
  const Node& n = this->node(node);
  require(n.op == OpKind::leaf, ErrorCode::invalid_argument, "node is not a leaf");
  return leaf_names_[static_cast<std::size_t>(n.payload)];
}

std::vector<std::string> Graph::leaf_names() const { return leaf_names_; }

const Tensor& Graph::constant_value(NodeRef node) const {
  const Node& n = this->node(node);
  require(n.op == OpKind::constant, ErrorCode::invalid_argument, "node is not a constant");
  return constants_[static_cast<std::size_t>(n.payload)];
}

}  // namespace mind
