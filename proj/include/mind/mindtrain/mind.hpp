#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mind/diffcore/graph.hpp"
#include "mind/diffcore/random.hpp"
#include "mind/models/dataset.hpp"
#include "mind/models/model.hpp"
#include "mind/transforms/transform.hpp"

namespace mind {

enum class SimilarityKind { cosine, inner_product, l1_gate_weights };
// wasserstein1 is the reduced |f - f'|; squared is (f - f')^2, the
// simplified objective that has a closed-form optimum for linear models.
enum class DistanceKind { wasserstein1, squared };
enum class OutputDistribution {
  bernoulli,
  point_mass,
  gaussian_fixed_variance,
  gaussian_learned_variance,
  categorical,
};

std::string_view to_string(SimilarityKind kind) noexcept;
std::string_view to_string(DistanceKind kind) noexcept;
std::string_view to_string(OutputDistribution dist) noexcept;
SimilarityKind parse_similarity_kind(std::string_view text);
DistanceKind parse_distance_kind(std::string_view text);
OutputDistribution parse_output_distribution(std::string_view text);

OutputDistribution output_distribution(const Model& model) noexcept;

// W1 between two predictive distributions of the same family, given their
// location parameters (probability, point, or mean). Families whose W1 is
// not a function of the location alone are rejected.
double w1_reduced(OutputDistribution dist, double f, double f_prime);
// Mean of |f(x) - f(x')| over a batch; also accepts a single instance.
double w1_reduced(const Model& model, const Tensor& x, const Tensor& x_prime);

struct MindConfig {
  double lambda = 1.0;
  SimilarityKind similarity = SimilarityKind::cosine;
  DistanceKind distance = DistanceKind::wasserstein1;
  bool clip_cosine = false;  // use max(cos, 0) instead of the raw cosine
  double w1_limit = 0.05;
  double cosine_limit = 0.5;
  std::size_t restarts = 8;
  std::size_t top_k = 5;
  double learning_rate = 1e-2;
  std::size_t batch_size = 0;  // 0 means min(100, max(1, n_train / 4))
  std::size_t patience = 10;
  double lr_floor = 5e-6;
  std::size_t max_epochs = 300;
  double weight_decay = 0.0;  // gates and residual convolution weights; decays toward 0
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

// Batch means of the two parts of the objective. `similarity` is before
// scaling by lambda; for l1_gate_weights it is the L1 norm itself.
struct MindTerms {
  double loss = 0.0;
  double distance = 0.0;
  double similarity = 0.0;
};

struct MindDiagnostics {
  double w1_term = 0.0;          // validation mean |f(x) - f(T x)|
  double cosine_term = 0.0;      // validation mean cos(x, T x), unclipped
  double similarity_term = 0.0;  // the configured similarity on validation data
  double validation_loss = 0.0;
  std::vector<double> loss_curve;        // mean training loss per epoch
  std::vector<double> validation_curve;  // validation loss per epoch
  std::size_t restart_id = 0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
};

MindTerms mind_terms(const Model& model, const Transform& transform, const Tensor& batch,
                     const MindConfig& config);
double mind_loss(const Model& model, const Transform& transform, const Tensor& batch,
                 const MindConfig& config);

// The objective as a reusable graph for batches of a fixed row count.
// Model predictions on the clean batch are passed in as `reference`.
class MindObjective {
 public:
  MindObjective(const Model& model, const Transform& transform, const MindConfig& config, std::size_t rows);
  ~MindObjective();
  MindObjective(MindObjective&&) noexcept;
  MindObjective& operator=(MindObjective&&) noexcept;

  std::size_t rows() const noexcept;
  MindTerms terms(const std::map<std::string, Tensor>& params, const Tensor& x, const Tensor& reference);
  // Gradients are keyed by transform parameter name.
  ValueAndGradient value_and_gradient(const std::map<std::string, Tensor>& params, const Tensor& x,
                                      const Tensor& reference);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct MindRun {
  Transform transform;  // parameters of the best validation epoch
  MindDiagnostics diagnostics;
};

// Called after every optimizer step, once the gates have been clamped.
using StepObserver = std::function<void(const Transform& transform, std::size_t step)>;

MindRun train_transform(const Model& model, const TransformSpec& spec, const Dataset& data,
                        const MindConfig& config, Rng& rng, const StepObserver& observer = {});

// 1e-4 * 2^k, k = 0..19.
std::vector<double> lambda_grid();

struct LambdaTrial {
  double lambda = 0.0;
  double w1_term = 0.0;
  double cosine_term = 0.0;
  bool feasible = false;
};

struct LambdaSearch {
  double lambda = 0.0;
  bool feasible = false;
  MindRun run;  // the chosen (or closest) grid point
  std::vector<LambdaTrial> trials;
};

// Walks the grid upward and stops at the first lambda whose transform meets
// both limits on validation data. Without one, returns the trial with the
// smallest worst-case limit ratio and `feasible = false`.
LambdaSearch tune_lambda(const Model& model, const TransformSpec& spec, const Dataset& data,
                         const MindConfig& config);

struct RestartRecord {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  MindDiagnostics diagnostics;
  std::optional<Transform> transform;
};

struct RestartSummary {
  std::vector<RestartRecord> runs;
  std::vector<std::size_t> selected;  // top-k ids, best validation loss first
  Tensor mean;                        // per-score mean over the selection
  Tensor stddev;                      // population standard deviation
};

// Restart r draws its seed from the "restart" substream of config.seed.
std::vector<std::uint64_t> restart_seeds(const MindConfig& config);

RestartSummary multi_restart(const Model& model, const TransformSpec& spec, const Dataset& data,
                             const MindConfig& config);
RestartSummary multi_restart(const Model& model, const TransformSpec& spec, const Dataset& data,
                             const MindConfig& config, const std::vector<std::uint64_t>& seeds);

// Config, per-restart diagnostics, and the selected ids.
std::string restart_manifest_json(const RestartSummary& summary, const MindConfig& config,
                                  const TransformSpec& spec);

struct RestartManifest {
  MindConfig config;
  TransformSpec spec;
  RestartSummary summary;  // transforms are not stored; every run has none
};

RestartManifest restart_manifest_from_json(std::string_view text);

}  // namespace mind
