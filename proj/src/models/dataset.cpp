#include "mind/models/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "mind/diffcore/error.hpp"

namespace mind {

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  fail(ErrorCode::parse, "unknown split '" + std::string(text) + "'");
}

const Shape& Dataset::instance_shape() const {
  require(!instances.empty(), ErrorCode::precondition, "dataset is empty");
  return instances.front().shape();
}

std::size_t Dataset::features() const { return instance_shape().at(0); }

std::size_t Dataset::timesteps() const {
  const Shape& s = instance_shape();
  return s.size() == 2 ? s[1] : 0;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  require(!instances.empty(), ErrorCode::precondition, "dataset is empty");
  require(labels.size() == instances.size() && splits.size() == instances.size(),
          ErrorCode::shape_mismatch, "dataset: instance, label and split counts differ");
  require(ids.empty() || ids.size() == instances.size(), ErrorCode::shape_mismatch,
          "dataset: id count differs from instance count");
  const Shape& s = instances.front().shape();
  require(s.size() == 1 || s.size() == 2, ErrorCode::shape_mismatch,
          "dataset: instances must be (d) or (d, T), got " + to_string(s));
  for (std::size_t i = 0; i < instances.size(); ++i) {
    require(instances[i].shape() == s, ErrorCode::shape_mismatch,
            "dataset: instance " + std::to_string(i) + " has shape " +
                to_string(instances[i].shape()) + ", expected " + to_string(s));
    require(std::isfinite(labels[i]), ErrorCode::non_finite,
            "dataset: label " + std::to_string(i) + " is not finite");
  }
}

FeatureStats feature_statistics(const Dataset& data, Split split) {
  data.validate();
  const std::size_t d = data.features();
  const std::size_t t = std::max<std::size_t>(1, data.timesteps());
  const auto rows = data.indices(split);
  require(!rows.empty(), ErrorCode::precondition,
          "no instances in split '" + std::string(to_string(split)) + "'");
  FeatureStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  const double count = static_cast<double>(rows.size() * t);
  for (std::size_t r : rows) {
    const Tensor& x = data.instances[r];
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = 0; k < t; ++k) stats.mean[j] += x[j * t + k];
    }
  }
  for (double& m : stats.mean) m /= count;
  for (std::size_t r : rows) {
    const Tensor& x = data.instances[r];
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = 0; k < t; ++k) {
        const double c = x[j * t + k] - stats.mean[j];
        stats.stddev[j] += c * c;
      }
    }
  }
  for (double& s : stats.stddev) {
    s = std::sqrt(s / count);
    if (!(s > 0.0)) s = 1.0;
  }
  return stats;
}

void apply_normalization(Dataset& data, const FeatureStats& stats) {
  const std::size_t d = data.features();
  require(stats.mean.size() == d && stats.stddev.size() == d, ErrorCode::shape_mismatch,
          "normalization statistics do not match the feature count");
  const std::size_t t = std::max<std::size_t>(1, data.timesteps());
  for (Tensor& x : data.instances) {
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = 0; k < t; ++k) {
        x[j * t + k] = (x[j * t + k] - stats.mean[j]) / stats.stddev[j];
      }
    }
  }
}

FeatureStats normalize_features(Dataset& data) {
  FeatureStats stats = feature_statistics(data, Split::train);
  apply_normalization(data, stats);
  return stats;
}

Tensor gather_instances(const Dataset& data, std::span<const std::size_t> rows) {
  require(!rows.empty(), ErrorCode::precondition, "gather of zero rows");
  const Shape& s = data.instance_shape();
  const std::size_t width = element_count(s);
  Shape out = s;
  out.insert(out.begin(), rows.size());
  Tensor batch = Tensor::zeros(std::move(out));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& x = data.instances.at(rows[i]);
    std::copy(x.values().begin(), x.values().end(), batch.data() + i * width);
  }
  return batch;
}

std::vector<double> gather_labels(const Dataset& data, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(data.labels.at(r));
  return out;
}

}  // namespace mind
