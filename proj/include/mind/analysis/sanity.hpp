#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mind/analysis/report.hpp"

namespace mind {

struct SanityConfig {
  MindConfig mind;     // lambda is used as given; restarts and top_k are replaced
  TransformSpec spec;
  std::size_t instances = 5;
  std::size_t restarts = 3;
  std::vector<std::size_t> layers;  // empty means every layer
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct SanityRow {
  static constexpr std::size_t kBaseline = std::numeric_limits<std::size_t>::max();

  std::string label;
  std::size_t layer = kBaseline;
  // Spearman rho against the reference per surviving instance; an undefined
  // rho (constant scores) counts as 0.
  std::vector<double> correlations;
  std::size_t undefined = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<std::string> errors;  // one per excluded instance
};

struct SanityReport {
  SanityRow baseline;  // the unshuffled model retrained with fresh restarts
  std::vector<SanityRow> layers;
};

// Instance i of every row retrains with the same restart seeds, so rows
// differ only through the model they score.
std::vector<std::uint64_t> sanity_restart_seeds(const SanityConfig& config, std::size_t instance);

// Retrains MIND scores on each model and correlates them with `reference`.
SanityRow score_correlations(const std::vector<Model>& models, const Dataset& data, const SanityConfig& config,
                             const std::vector<double>& reference, std::string label);

// Fails with a precondition error unless `reference` was produced for
// `model`.
SanityReport sanity_check(const Model& model, const Dataset& data, const SanityConfig& config,
                          const MindReport& reference);

}  // namespace mind
