#include "mind/models/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mind/diffcore/error.hpp"

namespace mind {

using nlohmann::json;

std::string_view to_string(Architecture arch) noexcept {
  switch (arch) {
    case Architecture::linear: return "linear";
    case Architecture::mlp: return "mlp";
    case Architecture::seqconv: return "seqconv";
  }
  return "linear";
}

std::string_view to_string(OutputKind kind) noexcept {
  return kind == OutputKind::bernoulli ? "bernoulli" : "regression";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "linear") return Architecture::linear;
  if (text == "mlp") return Architecture::mlp;
  if (text == "seqconv") return Architecture::seqconv;
  fail(ErrorCode::parse, "unknown architecture '" + std::string(text) + "'");
}

OutputKind parse_output_kind(std::string_view text) {
  if (text == "bernoulli") return OutputKind::bernoulli;
  if (text == "regression") return OutputKind::regression;
  fail(ErrorCode::parse, "unknown output kind '" + std::string(text) + "'");
}

namespace {

std::string conv_name(std::size_t layer) { return "conv" + std::to_string(layer); }
std::string dense_name(std::size_t layer) { return "dense" + std::to_string(layer); }

void check_dims(Architecture arch, ModelDims& dims) {
  require(dims.features > 0, ErrorCode::invalid_argument, "model needs at least one feature");
  switch (arch) {
    case Architecture::linear:
      require(dims.timesteps == 0, ErrorCode::invalid_argument,
              "linear model takes vector inputs only");
      require(dims.hidden.empty(), ErrorCode::invalid_argument, "linear model has no hidden layers");
      break;
    case Architecture::mlp:
      if (dims.hidden.empty()) dims.hidden = {16, 16};
      break;
    case Architecture::seqconv:
      require(dims.timesteps > 0, ErrorCode::invalid_argument,
              "seqconv needs sequence inputs (timesteps > 0)");
      if (dims.hidden.empty()) {
        dims.hidden = {16, 16, 8};
        if (dims.dilations.empty()) dims.dilations = {1, 2, 2};
      }
      if (dims.dilations.empty()) dims.dilations.assign(dims.hidden.size(), 1);
      require(dims.dilations.size() == dims.hidden.size(), ErrorCode::invalid_argument,
              "seqconv: one dilation per conv layer");
      require(dims.kernel % 2 == 1, ErrorCode::invalid_argument,
              "seqconv: kernel size must be odd for length-preserving padding");
      break;
  }
  for (std::size_t h : dims.hidden) {
    require(h > 0, ErrorCode::invalid_argument, "hidden widths must be positive");
  }
  for (std::size_t r : dims.dilations) {
    require(r > 0, ErrorCode::invalid_argument, "dilations must be positive");
  }
}

Tensor uniform_init(Rng& rng, Shape shape, std::size_t fan_in) {
  const double a = std::sqrt(3.0 / static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

}  // namespace

Model::Model(Architecture arch, OutputKind output, ModelDims dims)
    : arch_(arch), output_(output), dims_(std::move(dims)) {
  check_dims(arch_, dims_);
}

Shape Model::input_shape() const {
  if (dims_.timesteps == 0) return {dims_.features};
  return {dims_.features, dims_.timesteps};
}

const Tensor& Model::parameter(const std::string& name) const {
  const auto it = params_.find(name);
  require(it != params_.end(), ErrorCode::invalid_argument, "model has no parameter '" + name + "'");
  return it->second;
}

void Model::set_parameter(const std::string& name, const Tensor& value) {
  const auto it = params_.find(name);
  require(it != params_.end(), ErrorCode::invalid_argument, "model has no parameter '" + name + "'");
  require(value.size() == it->second.size(), ErrorCode::shape_mismatch,
          "parameter '" + name + "' expects " + std::to_string(it->second.size()) + " values");
  it->second = value.reshaped(it->second.shape());
}

void Model::set_buffer(const std::string& name, const Tensor& value) {
  const auto it = buffers_.find(name);
  require(it != buffers_.end(), ErrorCode::invalid_argument, "model has no buffer '" + name + "'");
  require(value.size() == it->second.size(), ErrorCode::shape_mismatch,
          "buffer '" + name + "' size mismatch");
  it->second = value.reshaped(it->second.shape());
}

std::vector<LayerInfo> Model::layers() const {
  std::vector<LayerInfo> out;
  switch (arch_) {
    case Architecture::linear:
      out.push_back({"beta", "beta"});
      break;
    case Architecture::mlp:
      for (std::size_t l = 0; l < dims_.hidden.size(); ++l) {
        out.push_back({dense_name(l), dense_name(l) + ".weight"});
      }
      out.push_back({"head", "head.weight"});
      break;
    case Architecture::seqconv:
      for (std::size_t l = 0; l < dims_.hidden.size(); ++l) {
        out.push_back({conv_name(l), conv_name(l) + ".weight"});
      }
      out.push_back({"head", "head.weight"});
      break;
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

std::uint64_t Model::fingerprint() const {
  std::string bytes;
  bytes += to_string(arch_);
  bytes += to_string(output_);
  for (const auto* group : {&params_, &buffers_}) {
    for (const auto& [name, t] : *group) {
      bytes += name;
      bytes.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
    }
  }
  return fnv1a64(bytes);
}

Model build_model(Architecture arch, OutputKind output, ModelDims dims, Rng& rng) {
  Model m(arch, output, std::move(dims));
  m.seed_ = rng.seed();
  const ModelDims& d = m.dims_;
  switch (arch) {
    case Architecture::linear:
      m.params_["beta"] = uniform_init(rng, {d.features, 1}, d.features);
      break;
    case Architecture::mlp: {
      std::size_t in = d.features * std::max<std::size_t>(1, d.timesteps);
      for (std::size_t l = 0; l < d.hidden.size(); ++l) {
        m.params_[dense_name(l) + ".weight"] = uniform_init(rng, {in, d.hidden[l]}, in);
        m.params_[dense_name(l) + ".bias"] = Tensor::zeros({d.hidden[l]});
        in = d.hidden[l];
      }
      m.params_["head.weight"] = uniform_init(rng, {in, 1}, in);
      m.params_["head.bias"] = Tensor::zeros({1});
      break;
    }
    case Architecture::seqconv: {
      std::size_t in = d.features;
      for (std::size_t l = 0; l < d.hidden.size(); ++l) {
        const std::string name = conv_name(l);
        m.params_[name + ".weight"] = uniform_init(rng, {d.hidden[l], in, d.kernel}, in * d.kernel);
        m.buffers_[name + ".mean"] = Tensor::zeros({d.hidden[l]});
        m.buffers_[name + ".var"] = Tensor::full({d.hidden[l]}, 1.0);
        in = d.hidden[l];
      }
      m.params_["head.weight"] = uniform_init(rng, {in, 1}, in);
      m.params_["head.bias"] = Tensor::zeros({1});
      break;
    }
  }
  return m;
}

ModelGraph::ModelGraph(Graph& graph, const Model& model, NormMode mode, std::string prefix)
    : graph_(graph), model_(model), mode_(mode), prefix_(std::move(prefix)) {
  for (const auto& [name, t] : model.parameters()) {
    leaves_.emplace(name, graph_.leaf(prefix_ + name, t.shape()));
  }
}

NodeRef ModelGraph::raw(NodeRef x) {
  const Shape& xs = graph_.shape(x);
  Shape expected = model_.input_shape();
  expected.insert(expected.begin(), xs.empty() ? 0 : xs[0]);
  require(xs == expected, ErrorCode::shape_mismatch,
          "model input " + to_string(xs) + " does not match signature " + to_string(expected));
  const std::size_t n = xs[0];
  const ModelDims& d = model_.dims();
  norm_inputs_.clear();
  NodeRef h = x;
  switch (model_.architecture()) {
    case Architecture::linear:
      h = graph_.matmul(h, leaves_.at("beta"));
      break;
    case Architecture::mlp: {
      if (xs.size() > 2) h = graph_.reshape(h, {n, element_count(model_.input_shape())});
      for (std::size_t l = 0; l < d.hidden.size(); ++l) {
        const std::string name = dense_name(l);
        h = graph_.matmul(h, leaves_.at(name + ".weight"));
        h = graph_.gelu(graph_.add(h, leaves_.at(name + ".bias")));
      }
      h = graph_.add(graph_.matmul(h, leaves_.at("head.weight")), leaves_.at("head.bias"));
      break;
    }
    case Architecture::seqconv: {
      for (std::size_t l = 0; l < d.hidden.size(); ++l) {
        const std::string name = conv_name(l);
        Conv1dOptions opt;
        opt.dilation = d.dilations[l];
        opt.padding = d.dilations[l] * (d.kernel - 1) / 2;
        h = graph_.conv1d(h, leaves_.at(name + ".weight"), opt);
        norm_inputs_.push_back(h);
        if (mode_ == NormMode::batch) {
          h = graph_.batch_norm(h);
        } else {
          const Tensor& mean = model_.buffers().at(name + ".mean");
          const Tensor& var = model_.buffers().at(name + ".var");
          Tensor shift = Tensor::zeros({mean.size(), 1});
          Tensor scale = Tensor::zeros({mean.size(), 1});
          for (std::size_t c = 0; c < mean.size(); ++c) {
            shift[c] = mean[c];
            scale[c] = 1.0 / std::sqrt(var[c] + kBatchNormEpsilon);
          }
          h = graph_.mul(graph_.sub(h, graph_.constant(shift)), graph_.constant(scale));
        }
        h = graph_.gelu(h);
      }
      h = graph_.mean_axis(h, 2);
      h = graph_.add(graph_.matmul(h, leaves_.at("head.weight")), leaves_.at("head.bias"));
      break;
    }
  }
  return graph_.reshape(h, {n});
}

NodeRef ModelGraph::predict(NodeRef x) {
  const NodeRef z = raw(x);
  return model_.output_kind() == OutputKind::bernoulli ? graph_.sigmoid(z) : z;
}

void ModelGraph::bind(Bindings& bindings) const { bind(bindings, model_); }

void ModelGraph::bind(Bindings& bindings, const Model& other) const {
  for (const auto& [name, t] : other.parameters()) {
    require(leaves_.contains(name), ErrorCode::invalid_argument,
            "model graph has no parameter '" + name + "'");
    bindings.insert_or_assign(prefix_ + name, t);
  }
}

std::vector<std::string> ModelGraph::leaf_names() const {
  std::vector<std::string> out;
  for (const auto& [name, ref] : leaves_) out.push_back(prefix_ + name);
  return out;
}

std::vector<double> predict_batch(const Model& model, const Tensor& batch) {
  Graph g;
  ModelGraph mg(g, model, NormMode::frozen);
  g.set_output(mg.predict(g.leaf("x", batch.shape())));
  Bindings b{{"x", batch}};
  mg.bind(b);
  const Tensor out = evaluate(g, b);
  return {out.values().begin(), out.values().end()};
}

double predict(const Model& model, const Tensor& instance) {
  Shape s = instance.shape();
  s.insert(s.begin(), 1);
  return predict_batch(model, instance.reshaped(s)).front();
}

Model shuffle_layer(const Model& model, std::size_t layer_index, Rng& rng) {
  const auto layers = model.layers();
  require(layer_index < layers.size(), ErrorCode::out_of_range,
          "layer index " + std::to_string(layer_index) + " out of range (model has " +
              std::to_string(layers.size()) + " layers)");
  Model out = model;
  Tensor w = model.parameter(layers[layer_index].weight);
  std::vector<double> values(w.values().begin(), w.values().end());
  rng.shuffle(values);
  out.set_parameter(layers[layer_index].weight, Tensor(w.shape(), std::move(values)));
  return out;
}

namespace {

json tensor_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("values").get<std::vector<double>>());
}

}  // namespace

std::string model_to_json_text(const Model& model) {
  json params = json::object();
  for (const auto& [name, t] : model.parameters()) params[name] = tensor_json(t);
  json buffers = json::object();
  for (const auto& [name, t] : model.buffers()) buffers[name] = tensor_json(t);
  const ModelDims& d = model.dims();
  json out{{"format", "mind-model"},
           {"schema_version", 1},
           {"architecture", to_string(model.architecture())},
           {"output", to_string(model.output_kind())},
           {"dims",
            {{"features", d.features},
             {"timesteps", d.timesteps},
             {"hidden", d.hidden},
             {"dilations", d.dilations},
             {"kernel", d.kernel}}},
           {"seed", model.seed()},
           {"parameters", params},
           {"buffers", buffers}};
  return out.dump(1);
}

Model model_from_json_text(std::string_view text) {
  try {
    const json j = json::parse(text);
    require(j.at("format") == "mind-model", ErrorCode::parse, "not a model checkpoint");
    const json& jd = j.at("dims");
    ModelDims d;
    d.features = jd.at("features").get<std::size_t>();
    d.timesteps = jd.at("timesteps").get<std::size_t>();
    d.hidden = jd.at("hidden").get<std::vector<std::size_t>>();
    d.dilations = jd.at("dilations").get<std::vector<std::size_t>>();
    d.kernel = jd.at("kernel").get<std::size_t>();
    Model m(parse_architecture(j.at("architecture").get<std::string>()),
            parse_output_kind(j.at("output").get<std::string>()), d);
    m.seed_ = j.at("seed").get<std::uint64_t>();
    for (const auto& [name, t] : j.at("parameters").items()) m.params_[name] = tensor_from_json(t);
    for (const auto& [name, t] : j.at("buffers").items()) m.buffers_[name] = tensor_from_json(t);

    // The stored tensors must match what the architecture would build.
    Rng probe(0);
    const Model reference = build_model(m.arch_, m.output_, m.dims_, probe);
    require(reference.params_.size() == m.params_.size() && reference.buffers_.size() == m.buffers_.size(),
            ErrorCode::parse, "checkpoint parameter set does not match its architecture");
    for (const auto& [name, t] : reference.params_) {
      const auto it = m.params_.find(name);
      require(it != m.params_.end() && it->second.shape() == t.shape(), ErrorCode::parse,
              "checkpoint parameter '" + name + "' missing or misshapen");
    }
    for (const auto& [name, t] : reference.buffers_) {
      const auto it = m.buffers_.find(name);
      require(it != m.buffers_.end() && it->second.shape() == t.shape(), ErrorCode::parse,
              "checkpoint buffer '" + name + "' missing or misshapen");
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("model checkpoint: ") + e.what());
  }
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write '" + path + "'");
  out << model_to_json_text(model) << '\n';
  require(static_cast<bool>(out), ErrorCode::io, "write failed for '" + path + "'");
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json_text(buf.str());
}

}  // namespace mind
