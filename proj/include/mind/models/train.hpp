#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mind/models/dataset.hpp"
#include "mind/models/model.hpp"

namespace mind {

struct PgdConfig {
  double epsilon = 0.1;     // L-infinity radius in normalized feature units
  double step = 0.0;        // 0 means epsilon / 4
  std::size_t iterations = 5;
};

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t batch_size = 0;  // 0 means min(100, max(1, n_train / 4))
  std::size_t patience = 10;
  double lr_floor = 5e-6;
  std::size_t max_epochs = 500;
  bool adversarial = false;
  PgdConfig pgd;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  Model model;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

// Mean training objective of a batch: binary cross-entropy on logits for
// bernoulli outputs, squared error for regression.
double batch_loss(const Model& model, const Tensor& inputs, std::span<const double> labels,
                  NormMode mode = NormMode::frozen);

TrainResult train(const Model& model, const Dataset& data, const TrainConfig& config);
TrainResult train_adversarial(const Model& model, const Dataset& data, const TrainConfig& config);

// Called after every PGD iteration with the current perturbation.
using PgdObserver = std::function<void(const Tensor& delta)>;

// L-infinity PGD ascent on the training loss starting from delta = 0.
// Returns the perturbed inputs.
Tensor pgd_perturb(const Model& model, const Tensor& inputs, std::span<const double> labels,
                   const PgdConfig& pgd, NormMode mode = NormMode::batch,
                   const PgdObserver& observer = {});

// Re-estimates the frozen normalization statistics from one full-batch pass
// over the given inputs. No-op for models without normalization.
void recalibrate_norm(Model& model, const Tensor& inputs);

}  // namespace mind
