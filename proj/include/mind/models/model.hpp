#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mind/diffcore/graph.hpp"
#include "mind/diffcore/random.hpp"
#include "mind/diffcore/tensor.hpp"

namespace mind {

enum class Architecture { linear, mlp, seqconv };
enum class OutputKind { bernoulli, regression };

std::string_view to_string(Architecture arch) noexcept;
std::string_view to_string(OutputKind kind) noexcept;
Architecture parse_architecture(std::string_view text);
OutputKind parse_output_kind(std::string_view text);

struct ModelDims {
  std::size_t features = 0;
  std::size_t timesteps = 0;           // 0 for vector inputs
  std::vector<std::size_t> hidden = {};     // mlp widths; seqconv channel widths
  std::vector<std::size_t> dilations = {};  // seqconv only
  std::size_t kernel = 3;              // seqconv only

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// One shuffle-able layer: the tensor whose entries get permuted.
struct LayerInfo {
  std::string name;
  std::string weight;
};

// A fixed predictor. Parameters are plain named tensors; `buffers` hold the
// frozen normalization statistics of seqconv models.
class Model {
 public:
  Model() = default;
  Model(Architecture arch, OutputKind output, ModelDims dims);

  Architecture architecture() const noexcept { return arch_; }
  OutputKind output_kind() const noexcept { return output_; }
  const ModelDims& dims() const noexcept { return dims_; }
  // (d) or (d, T).
  Shape input_shape() const;

  std::uint64_t seed() const noexcept { return seed_; }
  void set_seed(std::uint64_t seed) noexcept { seed_ = seed; }

  const std::map<std::string, Tensor>& parameters() const noexcept { return params_; }
  const std::map<std::string, Tensor>& buffers() const noexcept { return buffers_; }
  const Tensor& parameter(const std::string& name) const;
  // Replaces a parameter; `value` may be any shape with the same element count.
  void set_parameter(const std::string& name, const Tensor& value);
  void set_buffer(const std::string& name, const Tensor& value);

  std::vector<LayerInfo> layers() const;
  std::size_t parameter_count() const;
  // FNV-1a over the parameter bytes; identifies a trained model in reports.
  std::uint64_t fingerprint() const;

  friend bool operator==(const Model&, const Model&) = default;

 private:
  friend Model build_model(Architecture, OutputKind, ModelDims, Rng&);
  friend Model model_from_json_text(std::string_view);

  Architecture arch_ = Architecture::linear;
  OutputKind output_ = OutputKind::regression;
  ModelDims dims_;
  std::uint64_t seed_ = 0;
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> buffers_;
};

// Defaults: mlp hidden {16, 16}; seqconv widths {16, 16, 8}, dilations
// {1, 2, 2}, kernel 3. The linear model is homogeneous: f(x) = beta . x.
Model build_model(Architecture arch, OutputKind output, ModelDims dims, Rng& rng);

enum class NormMode {
  batch,   // normalize with statistics of the current batch
  frozen,  // use the stored statistics; instances are independent
};

// Inserts a model into a caller-owned graph. Parameters become leaves named
// `prefix + name`; `raw` and `predict` may be called repeatedly and share them.
class ModelGraph {
 public:
  ModelGraph(Graph& graph, const Model& model, NormMode mode, std::string prefix = "model/");

  // (N, ...) -> (N) logits / regression values.
  NodeRef raw(NodeRef x);
  // (N, ...) -> (N) predictions: probabilities for bernoulli outputs.
  NodeRef predict(NodeRef x);
  // Pre-normalization activations recorded by the most recent `raw` call.
  const std::vector<NodeRef>& norm_inputs() const noexcept { return norm_inputs_; }

  void bind(Bindings& bindings) const;
  void bind(Bindings& bindings, const Model& other) const;
  std::vector<std::string> leaf_names() const;
  std::string leaf_name(const std::string& parameter) const { return prefix_ + parameter; }

 private:
  Graph& graph_;
  const Model& model_;
  NormMode mode_;
  std::string prefix_;
  std::map<std::string, NodeRef> leaves_;
  std::vector<NodeRef> norm_inputs_;
};

// Predictions for a stack of inputs shaped (N, ...), frozen normalization.
std::vector<double> predict_batch(const Model& model, const Tensor& batch);
double predict(const Model& model, const Tensor& instance);

// Returns a copy with the weight entries of one layer permuted.
Model shuffle_layer(const Model& model, std::size_t layer_index, Rng& rng);

std::string model_to_json_text(const Model& model);
Model model_from_json_text(std::string_view text);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace mind
