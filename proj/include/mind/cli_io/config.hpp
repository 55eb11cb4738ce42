#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "mind/cli_io/synthetic.hpp"
#include "mind/models/model.hpp"
#include "mind/models/train.hpp"

namespace mind {

// Architecture settings for train-model; the feature count and series
// length come from the dataset.
struct ModelSpec {
  Architecture architecture = Architecture::mlp;
  OutputKind output = OutputKind::bernoulli;
  std::vector<std::size_t> hidden;     // empty keeps the architecture default
  std::vector<std::size_t> dilations;  // seqconv only
  std::size_t kernel = 3;

  ModelDims dims(std::size_t features, std::size_t timesteps) const;
};

// Same conventions as the MIND config: missing keys keep defaults, unknown
// keys are parse errors.
void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);
void to_json(nlohmann::json& j, const PgdConfig& c);
void from_json(const nlohmann::json& j, PgdConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const nlohmann::json& value, const std::string& path);
void write_text_file(const std::string& text, const std::string& path);

}  // namespace mind
