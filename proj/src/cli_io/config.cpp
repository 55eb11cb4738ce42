#include "mind/cli_io/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mind/diffcore/error.hpp"

namespace mind {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  require(j.is_object(), ErrorCode::parse, std::string(what) + " must be a JSON object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    require(known, ErrorCode::parse, std::string(what) + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

ModelDims ModelSpec::dims(std::size_t features, std::size_t timesteps) const {
  ModelDims d;
  d.features = features;
  d.timesteps = timesteps;
  d.hidden = hidden;
  d.dilations = dilations;
  d.kernel = kernel;
  return d;
}

void to_json(json& j, const SyntheticSpec& s) {
  json dup = json::array();
  for (const auto& [a, b] : s.duplicated) dup.push_back({a, b});
  j = json{{"n", s.n},
           {"d", s.d},
           {"timesteps", s.timesteps},
           {"invariant", s.invariant},
           {"duplicated", dup},
           {"missing", s.missing},
           {"missing_rate", s.missing_rate},
           {"coefficients", s.coefficients},
           {"output", to_string(s.output)},
           {"label_noise", s.label_noise},
           {"validation_fraction", s.validation_fraction},
           {"test_fraction", s.test_fraction},
           {"seed", s.seed}};
}

void from_json(const json& j, SyntheticSpec& s) {
  check_keys(j,
             {"n", "d", "timesteps", "invariant", "duplicated", "missing", "missing_rate", "coefficients", "output",
              "label_noise", "validation_fraction", "test_fraction", "seed"},
             "synthetic spec");
  read(j, "n", s.n);
  read(j, "d", s.d);
  read(j, "timesteps", s.timesteps);
  read(j, "invariant", s.invariant);
  if (j.contains("duplicated")) {
    s.duplicated.clear();
    for (const json& p : j.at("duplicated")) {
      require(p.is_array() && p.size() == 2, ErrorCode::parse, "duplicated entries are [source, copy] pairs");
      s.duplicated.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    }
  }
  read(j, "missing", s.missing);
  read(j, "missing_rate", s.missing_rate);
  read(j, "coefficients", s.coefficients);
  if (j.contains("output")) s.output = parse_output_kind(j.at("output").get<std::string>());
  read(j, "label_noise", s.label_noise);
  read(j, "validation_fraction", s.validation_fraction);
  read(j, "test_fraction", s.test_fraction);
  read(j, "seed", s.seed);
  s.validate();
}

void to_json(json& j, const PgdConfig& c) {
  j = json{{"epsilon", c.epsilon}, {"step", c.step}, {"iterations", c.iterations}};
}

void from_json(const json& j, PgdConfig& c) {
  check_keys(j, {"epsilon", "step", "iterations"}, "pgd config");
  read(j, "epsilon", c.epsilon);
  read(j, "step", c.step);
  read(j, "iterations", c.iterations);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"patience", c.patience},
           {"lr_floor", c.lr_floor},           {"max_epochs", c.max_epochs}, {"adversarial", c.adversarial},
           {"pgd", c.pgd},                     {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  check_keys(j, {"learning_rate", "batch_size", "patience", "lr_floor", "max_epochs", "adversarial", "pgd", "seed"},
             "train config");
  read(j, "learning_rate", c.learning_rate);
  read(j, "batch_size", c.batch_size);
  read(j, "patience", c.patience);
  read(j, "lr_floor", c.lr_floor);
  read(j, "max_epochs", c.max_epochs);
  read(j, "adversarial", c.adversarial);
  read(j, "pgd", c.pgd);
  read(j, "seed", c.seed);
  c.validate();
}

void to_json(json& j, const ModelSpec& s) {
  j = json{{"architecture", to_string(s.architecture)},
           {"output", to_string(s.output)},
           {"hidden", s.hidden},
           {"dilations", s.dilations},
           {"kernel", s.kernel}};
}

void from_json(const json& j, ModelSpec& s) {
  check_keys(j, {"architecture", "output", "hidden", "dilations", "kernel"}, "model spec");
  if (j.contains("architecture")) s.architecture = parse_architecture(j.at("architecture").get<std::string>());
  if (j.contains("output")) s.output = parse_output_kind(j.at("output").get<std::string>());
  read(j, "hidden", s.hidden);
  read(j, "dilations", s.dilations);
  read(j, "kernel", s.kernel);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write '" + path + "'");
  out << text;
  require(static_cast<bool>(out), ErrorCode::io, "write to '" + path + "' failed");
}

void write_json_file(const json& value, const std::string& path) { write_text_file(value.dump(2) + "\n", path); }

}  // namespace mind
