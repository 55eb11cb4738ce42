#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mind/diffcore/graph.hpp"
#include "mind/diffcore/random.hpp"
#include "mind/transforms/basis.hpp"

namespace mind {

enum class TransformKind { gating, residual, basis };

std::string_view to_string(TransformKind kind) noexcept;
TransformKind parse_transform_kind(std::string_view text);

// x_jt -> g_j x_jt + b_j. Both vectors have length d.
struct GatingTransform {
  Tensor g;
  Tensor b;
};

// y = x + conv2(relu(norm(conv1(x)))) with kernel 5, padding 2.
struct ResidualBlock {
  Tensor conv1;  // (h, d, 5), no bias
  Tensor conv2;  // (d, h, 5)
  Tensor bias;   // (d)
};

struct ResidualTransform {
  std::vector<ResidualBlock> blocks;
};

struct BasisGatingTransform {
  Tensor gates;      // (d, channels); the residual channel, if any, is last
  Tensor intercept;  // (d), or empty when the transform has none
};

Tensor apply_gating(const GatingTransform& t, const Tensor& x);
Tensor apply_residual(const ResidualTransform& t, const Tensor& x);
Tensor apply_basis_gating(const BasisGatingTransform& t, const BasisSet& basis, const Tensor& x);
// Elementwise projection onto [0, 1].
Tensor clamp_gates(const Tensor& gates);

struct TransformSpec {
  TransformKind kind = TransformKind::gating;
  bool intercept = true;            // gating only; off gives the pure x * g map
  BasisKind basis = BasisKind::chebyshev;
  std::size_t basis_size = 0;       // 0 selects the basis default
  bool basis_intercept = false;
  std::size_t residual_hidden = 0;  // 0 means 3 d
  std::size_t residual_blocks = 2;
  double init_noise = 0.02;         // standard deviation around the identity
};

enum class ParamRole {
  gate,     // kept in [0, 1]
  free,     // unconstrained
  decayed,  // unconstrained, subject to weight decay
};

// A parameterized input map T_phi in a uniform container. Parameter names
// double as graph leaf names (after the graph prefix).
class Transform {
 public:
  Transform() = default;

  TransformKind kind() const noexcept { return kind_; }
  // Shape of one instance: (d) or (d, T).
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t features() const { return input_shape_.at(0); }
  const std::optional<BasisSet>& basis() const noexcept { return basis_; }

  const std::map<std::string, Tensor>& parameters() const noexcept { return params_; }
  std::map<std::string, Tensor>& parameters() noexcept { return params_; }
  ParamRole role(const std::string& name) const;
  const std::map<std::string, ParamRole>& roles() const noexcept { return roles_; }

  // Projects every gate parameter onto [0, 1].
  void clamp();
  bool gates_in_box() const;

  // MIND scores: g for gating, the (d, channels) gate matrix for basis
  // gating. Empty for residual transforms.
  Tensor scores() const;

  GatingTransform as_gating() const;
  ResidualTransform as_residual() const;
  BasisGatingTransform as_basis_gating() const;

  // Applies the transform to one instance or to a stacked (N, ...) batch.
  Tensor apply(const Tensor& x) const;

  friend bool operator==(const Transform& a, const Transform& b) {
    return a.kind_ == b.kind_ && a.input_shape_ == b.input_shape_ && a.params_ == b.params_;
  }

 private:
  friend Transform make_transform(const TransformSpec&, const Shape&, Rng&);
  friend Transform make_identity_transform(const TransformSpec&, const Shape&);
  friend Transform transform_from_json_text(std::string_view);
  // rng == nullptr builds the exact identity.
  static Transform build(const TransformSpec& spec, const Shape& input_shape, Rng* rng);

  TransformKind kind_ = TransformKind::gating;
  Shape input_shape_;
  std::optional<BasisSet> basis_;
  std::map<std::string, Tensor> params_;
  std::map<std::string, ParamRole> roles_;
};

// Gates start at clamp(1 + N(0, init_noise^2)); intercepts at 0; residual
// second convolutions at small noise so the map starts near the identity.
Transform make_transform(const TransformSpec& spec, const Shape& input_shape, Rng& rng);
// Exact identity: gates 1, intercepts 0, second convolutions 0.
Transform make_identity_transform(const TransformSpec& spec, const Shape& input_shape);

// Inserts a transform into a caller-owned graph with leaves `prefix + name`.
class TransformGraph {
 public:
  TransformGraph(Graph& graph, const Transform& transform, std::string prefix = "transform/");

  // (N, ...) -> (N, ...) with the instance shape preserved.
  NodeRef apply(NodeRef x);
  // Sum of absolute gate weights (all weights for residual transforms).
  NodeRef weight_l1();

  void bind(Bindings& bindings, const std::map<std::string, Tensor>& params) const;
  std::vector<std::string> leaf_names() const;
  const std::string& prefix() const noexcept { return prefix_; }

 private:
  Graph& graph_;
  const Transform& transform_;
  std::string prefix_;
  std::map<std::string, NodeRef> leaves_;
};

std::string transform_to_json_text(const Transform& t);
Transform transform_from_json_text(std::string_view text);
void save_transform(const Transform& t, const std::string& path);
Transform load_transform(const std::string& path);

}  // namespace mind
