#pragma once

#include <string>
#include <vector>

#include "mind/models/dataset.hpp"

namespace mind {

// CSV layout: instance_id[,timestamp],<feature columns...>,label with one row
// per instance (vector data) or per instance and timestamp (series). Splits
// live in a JSON sidecar that lists instance ids per split.
struct DatasetFile {
  Dataset data;
  std::vector<std::string> feature_names;
  std::vector<double> timestamps;  // shared grid; empty for vector data
  FeatureStats stats;              // filled when loaded with normalization
  bool normalized = false;
};

// "dir/name.csv" -> "dir/name.splits.json".
std::string default_sidecar_path(const std::string& csv_path);

// Writes every value in shortest round-trip form, so a reload reproduces
// the tensors bit for bit.
void save_dataset(const Dataset& data, const std::vector<std::string>& feature_names, const std::string& csv_path,
                  std::string sidecar_path = {}, const std::vector<double>& timestamps = {});

// Parses and validates; by default standardizes every split with the
// training-split statistics.
DatasetFile load_dataset(const std::string& csv_path, std::string sidecar_path = {}, bool normalize = true);

}  // namespace mind
