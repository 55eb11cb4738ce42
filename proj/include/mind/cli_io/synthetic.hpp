#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mind/models/dataset.hpp"
#include "mind/models/model.hpp"

namespace mind {

struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t d = 8;                 // base features, before indicator columns
  std::size_t timesteps = 0;         // 0 gives vector data
  std::vector<std::size_t> invariant;                            // coefficient forced to 0
  std::vector<std::pair<std::size_t, std::size_t>> duplicated;   // (source, copy)
  std::vector<std::size_t> missing;  // features that get a missing-value indicator
  double missing_rate = 0.2;
  std::vector<double> coefficients;  // optional, length d; default |beta_j| ~ U[1, 2] with random sign
  OutputKind output = OutputKind::bernoulli;
  double label_noise = 0.0;          // flip probability (bernoulli) or noise sd (regression)
  double validation_fraction = 0.2;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Labels come from score(x) = sum_j beta_j * s_j(x), where s_j is x_j for
// vector data and sum_t x_jt / sqrt(T) for series: a one-layer model, so a
// zero coefficient is a zero weight everywhere.
struct GroundTruth {
  std::vector<std::string> feature_names;
  std::vector<double> coefficients;                  // one per column, indicators included
  std::vector<std::size_t> invariant;                // columns the generator ignores
  std::vector<std::size_t> strong;                   // columns with |beta| >= 1
  std::vector<std::pair<std::size_t, std::size_t>> duplicated;
  std::vector<std::pair<std::size_t, std::size_t>> indicators;  // (indicator column, source feature)
  std::size_t timesteps = 0;
  OutputKind output = OutputKind::bernoulli;
  SyntheticSpec spec;
};

struct SyntheticData {
  Dataset data;
  GroundTruth truth;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// The generator as a linear model over vector data (logits for bernoulli).
Model generator_model(const GroundTruth& truth);

std::string ground_truth_to_json_text(const GroundTruth& truth);
GroundTruth ground_truth_from_json_text(const std::string& text);

}  // namespace mind
