#include "mind/transforms/transform.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mind/diffcore/error.hpp"

namespace mind {

using nlohmann::json;

std::string_view to_string(TransformKind kind) noexcept {
  switch (kind) {
    case TransformKind::gating: return "gating";
    case TransformKind::residual: return "residual";
    case TransformKind::basis: return "basis";
  }
  return "gating";
}

TransformKind parse_transform_kind(std::string_view text) {
  if (text == "gating") return TransformKind::gating;
  if (text == "residual") return TransformKind::residual;
  if (text == "basis") return TransformKind::basis;
  fail(ErrorCode::parse, "unknown transform kind '" + std::string(text) + "'");
}

namespace {

constexpr std::size_t kResidualKernel = 5;
constexpr std::size_t kResidualPadding = 2;

std::string block_name(std::size_t i, const char* part) {
  return "block" + std::to_string(i) + "." + part;
}

std::string_view role_name(ParamRole role) {
  switch (role) {
    case ParamRole::gate: return "gate";
    case ParamRole::free: return "free";
    case ParamRole::decayed: return "decayed";
  }
  return "free";
}

ParamRole parse_role(std::string_view text) {
  if (text == "gate") return ParamRole::gate;
  if (text == "free") return ParamRole::free;
  if (text == "decayed") return ParamRole::decayed;
  fail(ErrorCode::parse, "unknown parameter role '" + std::string(text) + "'");
}

// Instance layout helpers: (d) is treated as (d, 1).
std::size_t series_length(const Tensor& x, std::size_t d) {
  require(x.rank() >= 1 && x.rank() <= 2 && x.extent(0) == d, ErrorCode::shape_mismatch,
          "transform input " + to_string(x.shape()) + " does not have " + std::to_string(d) + " features");
  return x.rank() == 2 ? x.extent(1) : 1;
}

}  // namespace

Tensor apply_gating(const GatingTransform& t, const Tensor& x) {
  const std::size_t d = t.g.size();
  require(t.b.size() == d, ErrorCode::shape_mismatch, "gating: g and b lengths differ");
  const std::size_t len = series_length(x, d);
  Tensor out = x;
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t s = 0; s < len; ++s) out[j * len + s] = t.g[j] * x[j * len + s] + t.b[j];
  }
  return out;
}

Tensor apply_basis_gating(const BasisGatingTransform& t, const BasisSet& basis, const Tensor& x) {
  require(t.gates.rank() == 2 && t.gates.extent(1) == basis.channels(), ErrorCode::shape_mismatch,
          "basis gating: gates must be (d, " + std::to_string(basis.channels()) + ")");
  const std::size_t d = t.gates.extent(0);
  const std::size_t c = basis.channels();
  require(x.rank() == 2 && x.extent(0) == d && x.extent(1) == basis.length, ErrorCode::shape_mismatch,
          "basis gating: input " + to_string(x.shape()) + " is not (" + std::to_string(d) + ", " +
              std::to_string(basis.length) + ")");
  require(t.intercept.size() <= 1 || t.intercept.size() == d, ErrorCode::shape_mismatch,
          "basis gating: intercept length");
  const bool has_intercept = t.intercept.size() == d && t.intercept.rank() > 0;
  const std::size_t len = basis.length;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t j = 0; j < d; ++j) {
    const Tensor comps = encode(basis, row(x, j));
    for (std::size_t k = 0; k < c; ++k) {
      const double gate = t.gates[j * c + k];
      for (std::size_t s = 0; s < len; ++s) out[j * len + s] += gate * comps[k * len + s];
    }
    if (has_intercept) {
      for (std::size_t s = 0; s < len; ++s) out[j * len + s] += t.intercept[j];
    }
  }
  return out;
}

Tensor clamp_gates(const Tensor& gates) {
  Tensor out = gates;
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

ParamRole Transform::role(const std::string& name) const {
  const auto it = roles_.find(name);
  require(it != roles_.end(), ErrorCode::invalid_argument, "transform has no parameter '" + name + "'");
  return it->second;
}

void Transform::clamp() {
  for (auto& [name, t] : params_) {
    if (roles_.at(name) != ParamRole::gate) continue;
    for (double& v : t.values()) v = std::clamp(v, 0.0, 1.0);
  }
}

bool Transform::gates_in_box() const {
  for (const auto& [name, t] : params_) {
    if (roles_.at(name) != ParamRole::gate) continue;
    for (double v : t.values()) {
      if (!(v >= 0.0 && v <= 1.0)) return false;
    }
  }
  return true;
}

Tensor Transform::scores() const {
  switch (kind_) {
    case TransformKind::gating: return as_gating().g;
    case TransformKind::basis: return as_basis_gating().gates;
    case TransformKind::residual: return Tensor::zeros({0});
  }
  return Tensor::zeros({0});
}

GatingTransform Transform::as_gating() const {
  require(kind_ == TransformKind::gating, ErrorCode::precondition, "not a gating transform");
  const std::size_t d = features();
  const auto b = params_.find("b");
  return {params_.at("g").reshaped({d}), b == params_.end() ? Tensor::zeros({d}) : b->second.reshaped({d})};
}

ResidualTransform Transform::as_residual() const {
  require(kind_ == TransformKind::residual, ErrorCode::precondition, "not a residual transform");
  ResidualTransform r;
  for (std::size_t i = 0; params_.contains(block_name(i, "conv1")); ++i) {
    r.blocks.push_back({params_.at(block_name(i, "conv1")), params_.at(block_name(i, "conv2")),
                        params_.at(block_name(i, "bias")).reshaped({features()})});
  }
  return r;
}

BasisGatingTransform Transform::as_basis_gating() const {
  require(kind_ == TransformKind::basis && basis_, ErrorCode::precondition, "not a basis-gated transform");
  const std::size_t d = features();
  const std::size_t k = basis_->size();
  const std::size_t c = basis_->channels();
  BasisGatingTransform out;
  out.gates = Tensor::zeros({d, c});
  const Tensor& g = params_.at("gates");
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < k; ++i) out.gates[j * c + i] = g[j * k + i];
    if (basis_->residual_channel) out.gates[j * c + k] = params_.at("residual_gate")[j];
  }
  out.intercept = params_.contains("intercept") ? params_.at("intercept").reshaped({d}) : Tensor::zeros({0});
  return out;
}

namespace {

Tensor gaussian_gates(Shape shape, double noise, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = std::clamp(1.0 + rng.normal(0.0, noise), 0.0, 1.0);
  return t;
}
}  // namespace

Transform make_transform(const TransformSpec& spec, const Shape& input_shape, Rng& rng) {
  return Transform::build(spec, input_shape, &rng);
}

Transform make_identity_transform(const TransformSpec& spec, const Shape& input_shape) {
  return Transform::build(spec, input_shape, nullptr);
}

Transform Transform::build(const TransformSpec& spec, const Shape& input_shape, Rng* rng) {
  require(input_shape.size() == 1 || input_shape.size() == 2, ErrorCode::shape_mismatch,
          "transform input must be (d) or (d, T), got " + to_string(input_shape));
  require(input_shape[0] > 0, ErrorCode::invalid_argument, "transform needs at least one feature");
  require(spec.init_noise >= 0.0, ErrorCode::invalid_argument, "init noise must be nonnegative");
  const std::size_t d = input_shape[0];
  const bool sequence = input_shape.size() == 2;
  const std::size_t len = sequence ? input_shape[1] : 1;
  Transform t;
  t.kind_ = spec.kind;
  t.input_shape_ = input_shape;
  auto add = [&](const std::string& name, Tensor value, ParamRole role) {
    t.params_[name] = std::move(value);
    t.roles_[name] = role;
  };
  auto gates = [&](Shape shape) {
    return rng ? gaussian_gates(std::move(shape), spec.init_noise, *rng) : Tensor::full(std::move(shape), 1.0);
  };
  switch (spec.kind) {
    case TransformKind::gating: {
      const Shape s = sequence ? Shape{d, 1} : Shape{d};
      add("g", gates(s), ParamRole::gate);
      if (spec.intercept) add("b", Tensor::zeros(s), ParamRole::free);
      break;
    }
    case TransformKind::basis: {
      require(sequence, ErrorCode::shape_mismatch, "basis gating needs (d, T) inputs");
      t.basis_ = make_basis(spec.basis, len, spec.basis_size);
      add("gates", gates({d, t.basis_->size()}), ParamRole::gate);
      if (t.basis_->residual_channel) add("residual_gate", gates({d, 1}), ParamRole::gate);
      if (spec.basis_intercept) add("intercept", Tensor::zeros({d, 1}), ParamRole::free);
      break;
    }
    case TransformKind::residual: {
      require(spec.residual_blocks > 0, ErrorCode::invalid_argument, "residual transform needs a block");
      const std::size_t h = spec.residual_hidden > 0 ? spec.residual_hidden : 3 * d;
      for (std::size_t i = 0; i < spec.residual_blocks; ++i) {
        Tensor w1 = Tensor::zeros({h, d, kResidualKernel});
        Tensor w2 = Tensor::zeros({d, h, kResidualKernel});
        if (rng) {
          const double a = std::sqrt(3.0 / static_cast<double>(d * kResidualKernel));
          for (double& v : w1.values()) v = rng->uniform(-a, a);
          for (double& v : w2.values()) v = rng->normal(0.0, spec.init_noise);
        }
        add(block_name(i, "conv1"), std::move(w1), ParamRole::decayed);
        add(block_name(i, "conv2"), std::move(w2), ParamRole::decayed);
        add(block_name(i, "bias"), Tensor::zeros({d, 1}), ParamRole::free);
      }
      break;
    }
  }
  return t;
}

TransformGraph::TransformGraph(Graph& graph, const Transform& transform, std::string prefix)
    : graph_(graph), transform_(transform), prefix_(std::move(prefix)) {
  for (const auto& [name, t] : transform.parameters()) {
    leaves_.emplace(name, graph_.leaf(prefix_ + name, t.shape()));
  }
}

NodeRef TransformGraph::apply(NodeRef x) {
  const Shape& xs = graph_.shape(x);
  Shape expected = transform_.input_shape();
  expected.insert(expected.begin(), xs.empty() ? 0 : xs[0]);
  require(xs == expected, ErrorCode::shape_mismatch,
          "transform input " + to_string(xs) + " does not match " + to_string(expected));
  const std::size_t n = xs[0];
  const std::size_t d = transform_.features();
  switch (transform_.kind()) {
    case TransformKind::gating: {
      const NodeRef scaled = graph_.mul(x, leaves_.at("g"));
      return leaves_.contains("b") ? graph_.add(scaled, leaves_.at("b")) : scaled;
    }
    case TransformKind::basis: {
      const BasisSet& basis = *transform_.basis();
      const std::size_t len = basis.length;
      const std::size_t k = basis.size();
      NodeRef out;
      if (basis.encoding == BasisEncoding::window) {
        const NodeRef mask = graph_.matmul(leaves_.at("gates"), graph_.constant(basis.window_masks()));
        out = graph_.mul(x, mask);
      } else {
        Tensor at = Tensor::zeros({len, k});
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t s = 0; s < len; ++s) at[s * k + i] = basis.vectors[i * len + s];
        }
        const NodeRef coeffs = graph_.reshape(
            graph_.matmul(graph_.reshape(x, {n * d, len}), graph_.constant(at)), {n, d, k});
        NodeRef weights = leaves_.at("gates");
        // Residual channel: r (x - recon) + sum g c a = sum (g - r) c a + r x.
        if (basis.residual_channel) weights = graph_.sub(weights, leaves_.at("residual_gate"));
        const NodeRef scaled = graph_.reshape(graph_.mul(coeffs, weights), {n * d, k});
        out = graph_.reshape(graph_.matmul(scaled, graph_.constant(basis.vectors)), {n, d, len});
        if (basis.residual_channel) out = graph_.add(out, graph_.mul(x, leaves_.at("residual_gate")));
      }
      if (leaves_.contains("intercept")) out = graph_.add(out, leaves_.at("intercept"));
      return out;
    }
    case TransformKind::residual: {
      const bool vector = xs.size() == 2;
      NodeRef h = vector ? graph_.reshape(x, {n, d, 1}) : x;
      Conv1dOptions opt;
      opt.padding = kResidualPadding;
      for (std::size_t i = 0; leaves_.contains(block_name(i, "conv1")); ++i) {
        NodeRef z = graph_.conv1d(h, leaves_.at(block_name(i, "conv1")), opt);
        z = graph_.relu(graph_.batch_norm(z));
        z = graph_.conv1d(z, leaves_.at(block_name(i, "conv2")), opt);
        z = graph_.add(z, leaves_.at(block_name(i, "bias")));
        h = graph_.add(h, z);
      }
      return vector ? graph_.reshape(h, xs) : h;
    }
  }
  return x;
}

NodeRef TransformGraph::weight_l1() {
  std::vector<NodeRef> terms;
  for (const auto& [name, ref] : leaves_) {
    const ParamRole role = transform_.role(name);
    const bool counted = transform_.kind() == TransformKind::residual ? role == ParamRole::decayed
                                                                      : role == ParamRole::gate;
    if (counted) terms.push_back(graph_.sum(graph_.abs(ref)));
  }
  require(!terms.empty(), ErrorCode::precondition, "transform has no weights to regularize");
  NodeRef total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = graph_.add(total, terms[i]);
  return total;
}

void TransformGraph::bind(Bindings& bindings, const std::map<std::string, Tensor>& params) const {
  for (const auto& [name, t] : params) bindings.insert_or_assign(prefix_ + name, t);
}

std::vector<std::string> TransformGraph::leaf_names() const {
  std::vector<std::string> out;
  for (const auto& [name, ref] : leaves_) out.push_back(prefix_ + name);
  return out;
}

Tensor Transform::apply(const Tensor& x) const {
  const bool single = x.shape() == input_shape_;
  Shape batch_shape = input_shape_;
  batch_shape.insert(batch_shape.begin(), single ? 1 : (x.rank() > 0 ? x.extent(0) : 0));
  require(single || x.shape() == batch_shape, ErrorCode::shape_mismatch,
          "transform input " + to_string(x.shape()) + " matches neither " + to_string(input_shape_) +
              " nor a batch of it");
  Graph g;
  TransformGraph tg(g, *this);
  g.set_output(tg.apply(g.leaf("x", batch_shape)));
  Bindings b{{"x", x.reshaped(batch_shape)}};
  tg.bind(b, params_);
  const Tensor out = evaluate(g, b);
  return single ? out.reshaped(input_shape_) : out;
}

Tensor apply_residual(const ResidualTransform& t, const Tensor& x) {
  require(!t.blocks.empty(), ErrorCode::invalid_argument, "residual transform has no blocks");
  const std::size_t d = t.blocks.front().bias.size();
  series_length(x, d);
  TransformSpec spec;
  spec.kind = TransformKind::residual;
  spec.residual_blocks = t.blocks.size();
  spec.residual_hidden = t.blocks.front().conv1.extent(0);
  Transform tr = make_identity_transform(spec, x.shape());
  for (std::size_t i = 0; i < t.blocks.size(); ++i) {
    const ResidualBlock& blk = t.blocks[i];
    auto& p = tr.parameters();
    require(blk.conv1.shape() == p.at(block_name(i, "conv1")).shape() &&
                blk.conv2.shape() == p.at(block_name(i, "conv2")).shape() && blk.bias.size() == d,
            ErrorCode::shape_mismatch, "residual block " + std::to_string(i) + " has inconsistent shapes");
    p[block_name(i, "conv1")] = blk.conv1;
    p[block_name(i, "conv2")] = blk.conv2;
    p[block_name(i, "bias")] = blk.bias.reshaped({d, 1});
  }
  return tr.apply(x);
}

namespace {

json tensor_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

}  // namespace

std::string transform_to_json_text(const Transform& t) {
  json params = json::object();
  json roles = json::object();
  for (const auto& [name, v] : t.parameters()) {
    params[name] = tensor_json(v);
    roles[name] = role_name(t.role(name));
  }
  json basis = nullptr;
  if (t.basis()) {
    basis = json{{"kind", to_string(t.basis()->kind)},
                 {"size", t.basis()->size()},
                 {"encoding", to_string(t.basis()->encoding)},
                 {"residual_channel", t.basis()->residual_channel}};
  }
  const json out{{"format", "mind-transform"}, {"schema_version", 1},   {"kind", to_string(t.kind())},
                 {"input_shape", t.input_shape()}, {"basis", basis},   {"parameters", params},
                 {"roles", roles}};
  return out.dump(1);
}

Transform transform_from_json_text(std::string_view text) {
  try {
    const json j = json::parse(text);
    require(j.at("format") == "mind-transform", ErrorCode::parse, "not a transform checkpoint");
    Transform t;
    t.kind_ = parse_transform_kind(j.at("kind").get<std::string>());
    t.input_shape_ = j.at("input_shape").get<Shape>();
    require(t.input_shape_.size() == 1 || t.input_shape_.size() == 2, ErrorCode::parse,
            "transform checkpoint: bad input shape");
    const json& jb = j.at("basis");
    if (!jb.is_null()) {
      require(t.input_shape_.size() == 2, ErrorCode::parse, "basis transform needs (d, T) inputs");
      BasisSet b = make_basis(parse_basis_kind(jb.at("kind").get<std::string>()), t.input_shape_[1],
                              jb.at("size").get<std::size_t>());
      b.encoding = jb.at("encoding") == "window" ? BasisEncoding::window : BasisEncoding::projection;
      b.residual_channel = jb.at("residual_channel").get<bool>();
      t.basis_ = std::move(b);
    }
    for (const auto& [name, v] : j.at("parameters").items()) {
      t.params_[name] = Tensor(v.at("shape").get<Shape>(), v.at("values").get<std::vector<double>>());
      t.roles_[name] = parse_role(j.at("roles").at(name).get<std::string>());
    }
    // Shape-check by building the graph once.
    Graph g;
    TransformGraph tg(g, t);
    Shape s = t.input_shape_;
    s.insert(s.begin(), 1);
    tg.apply(g.leaf("x", s));
    return t;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("transform checkpoint: ") + e.what());
  } catch (const std::out_of_range& e) {
    fail(ErrorCode::parse, std::string("transform checkpoint: missing parameter: ") + e.what());
  }
}

void save_transform(const Transform& t, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write '" + path + "'");
  out << transform_to_json_text(t) << '\n';
  require(static_cast<bool>(out), ErrorCode::io, "write failed for '" + path + "'");
}

Transform load_transform(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return transform_from_json_text(buf.str());
}

}  // namespace mind
