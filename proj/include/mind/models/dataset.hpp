#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mind/diffcore/tensor.hpp"

namespace mind {

enum class Split : unsigned char { train, validation, test };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view text);

// Labelled instances, all of one shape: (d) for vector data or (d, T) for
// time series. `ids` may be left empty; `validate` fills nothing in.
struct Dataset {
  std::vector<Tensor> instances;
  std::vector<double> labels;
  std::vector<Split> splits;
  std::vector<std::string> ids;

  std::size_t size() const noexcept { return instances.size(); }
  const Shape& instance_shape() const;
  std::size_t features() const;
  // 0 for vector data.
  std::size_t timesteps() const;

  std::vector<std::size_t> indices(Split split) const;
  // Throws unless instance/label/split/id counts agree and shapes are uniform.
  void validate() const;
};

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Per-feature mean and (population) standard deviation over one split,
// pooled across timestamps. A zero deviation is reported as 1.
FeatureStats feature_statistics(const Dataset& data, Split split = Split::train);
void apply_normalization(Dataset& data, const FeatureStats& stats);
// Standardizes every split with training-split statistics.
FeatureStats normalize_features(Dataset& data);

// Stack the selected instances into one (N, ...) batch.
Tensor gather_instances(const Dataset& data, std::span<const std::size_t> rows);
std::vector<double> gather_labels(const Dataset& data, std::span<const std::size_t> rows);

}  // namespace mind
