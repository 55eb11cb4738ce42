#include "mind/cli_io/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "mind/cli_io/config.hpp"
#include "mind/diffcore/error.hpp"

namespace mind {

using nlohmann::json;

void SyntheticSpec::validate() const {
  require(n >= 3, ErrorCode::invalid_argument, "synthetic data needs at least 3 instances");
  require(d >= 1, ErrorCode::invalid_argument, "synthetic data needs at least one feature");
  require(timesteps != 1, ErrorCode::invalid_argument, "series need at least 2 timestamps (0 gives vector data)");
  for (std::size_t j : invariant) {
    require(j < d, ErrorCode::out_of_range, "planted invariant feature " + std::to_string(j) + " out of range");
  }
  std::set<std::size_t> copies;
  for (const auto& [src, copy] : duplicated) {
    require(src < d && copy < d, ErrorCode::out_of_range, "duplicated pair out of range");
    require(src != copy, ErrorCode::invalid_argument, "a feature cannot duplicate itself");
    require(copies.insert(copy).second, ErrorCode::invalid_argument,
            "feature " + std::to_string(copy) + " is the copy in two pairs");
  }
  for (const auto& [src, copy] : duplicated) {
    require(!copies.contains(src), ErrorCode::invalid_argument, "duplicated pairs must not chain");
  }
  std::set<std::size_t> miss;
  for (std::size_t j : missing) {
    require(j < d, ErrorCode::out_of_range, "missing-indicator feature " + std::to_string(j) + " out of range");
    require(miss.insert(j).second, ErrorCode::invalid_argument, "missing-indicator feature listed twice");
    require(!copies.contains(j), ErrorCode::invalid_argument,
            "a duplicated copy inherits its source's missingness and cannot have its own indicator");
  }
  require(missing_rate >= 0.0 && missing_rate < 1.0, ErrorCode::invalid_argument, "missing_rate must lie in [0, 1)");
  require(coefficients.empty() || coefficients.size() == d, ErrorCode::invalid_argument,
          "coefficients must list one value per base feature");
  for (double b : coefficients) require(std::isfinite(b), ErrorCode::invalid_argument, "non-finite coefficient");
  require(label_noise >= 0.0 && (output == OutputKind::regression || label_noise <= 0.5), ErrorCode::invalid_argument,
          "label_noise must be a flip probability in [0, 0.5] or a nonnegative noise sd");
  require(validation_fraction > 0.0 && test_fraction >= 0.0 && validation_fraction + test_fraction < 1.0,
          ErrorCode::invalid_argument, "split fractions must leave a nonempty training split");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  const std::size_t d = spec.d, t = spec.timesteps, steps = std::max<std::size_t>(t, 1);
  const std::size_t cols = d + spec.missing.size();

  SyntheticData out;
  GroundTruth& truth = out.truth;
  truth.spec = spec;
  truth.timesteps = t;
  truth.output = spec.output;
  truth.duplicated = spec.duplicated;
  for (std::size_t j = 0; j < d; ++j) truth.feature_names.push_back("f" + std::to_string(j));
  for (std::size_t k = 0; k < spec.missing.size(); ++k) {
    truth.feature_names.push_back("f" + std::to_string(spec.missing[k]) + "_missing");
    truth.indicators.emplace_back(d + k, spec.missing[k]);
  }

  Rng coef_rng = root.substream("coefficients");
  truth.coefficients.assign(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    const double sign = coef_rng.bernoulli(0.5) ? 1.0 : -1.0;
    // Indicators get a moderate weight so they are neither planted nor strong.
    const double mag = c < d ? coef_rng.uniform(1.0, 2.0) : coef_rng.uniform(0.25, 0.75);
    truth.coefficients[c] = c < d && !spec.coefficients.empty() ? spec.coefficients[c] : sign * mag;
  }
  for (std::size_t j : spec.invariant) truth.coefficients[j] = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    if (truth.coefficients[c] == 0.0) truth.invariant.push_back(c);
    if (std::abs(truth.coefficients[c]) >= 1.0) truth.strong.push_back(c);
  }

  Rng value_rng = root.substream("values");
  Rng missing_rng = root.substream("missing");
  Rng label_rng = root.substream("labels");
  const double norm = 1.0 / std::sqrt(static_cast<double>(steps));
  Dataset& data = out.data;
  for (std::size_t i = 0; i < spec.n; ++i) {
    Tensor x = t > 0 ? Tensor::zeros({cols, t}) : Tensor::zeros({cols});
    for (std::size_t j = 0; j < d; ++j) {
      // Stationary AR(1) over time, unit marginal variance.
      double prev = value_rng.normal();
      for (std::size_t s = 0; s < steps; ++s) {
        if (s > 0) prev = 0.8 * prev + 0.6 * value_rng.normal();
        x[j * steps + s] = prev;
      }
    }
    for (const auto& [col, src] : truth.indicators) {
      for (std::size_t s = 0; s < steps; ++s) {
        if (missing_rng.bernoulli(spec.missing_rate)) {
          x[src * steps + s] = 0.0;
          x[col * steps + s] = 1.0;
        }
      }
    }
    for (const auto& [src, copy] : spec.duplicated) {
      for (std::size_t s = 0; s < steps; ++s) x[copy * steps + s] = x[src * steps + s];
    }
    double score = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      double sc = 0.0;
      for (std::size_t s = 0; s < steps; ++s) sc += x[c * steps + s];
      score += truth.coefficients[c] * sc * norm;
    }
    double label = 0.0;
    if (spec.output == OutputKind::bernoulli) {
      label = label_rng.bernoulli(1.0 / (1.0 + std::exp(-score))) ? 1.0 : 0.0;
      if (spec.label_noise > 0.0 && label_rng.bernoulli(spec.label_noise)) label = 1.0 - label;
    } else {
      label = score + (spec.label_noise > 0.0 ? label_rng.normal(0.0, spec.label_noise) : 0.0);
    }
    data.instances.push_back(std::move(x));
    data.labels.push_back(label);
    data.ids.push_back("s" + std::to_string(i));
  }

  std::vector<std::size_t> order(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) order[i] = i;
  Rng split_rng = root.substream("split");
  split_rng.shuffle(order);
  const auto count = [&](double f) {
    return f > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(spec.n))))
                   : std::size_t{0};
  };
  const std::size_t n_val = count(spec.validation_fraction), n_test = count(spec.test_fraction);
  require(n_val + n_test < spec.n, ErrorCode::invalid_argument, "split fractions leave no training instances");
  data.splits.assign(spec.n, Split::train);
  for (std::size_t k = 0; k < n_val + n_test; ++k) data.splits[order[k]] = k < n_val ? Split::validation : Split::test;
  data.validate();
  return out;
}

Model generator_model(const GroundTruth& truth) {
  require(truth.timesteps == 0, ErrorCode::precondition,
          "the generator of series data is not a linear model over (d, T) inputs");
  Rng rng(0);
  ModelDims dims;
  dims.features = truth.coefficients.size();
  Model m = build_model(Architecture::linear, truth.output, dims, rng);
  m.set_parameter("beta", Tensor({dims.features, 1}, truth.coefficients));
  return m;
}

std::string ground_truth_to_json_text(const GroundTruth& truth) {
  json ind = json::array(), dup = json::array();
  for (const auto& [c, s] : truth.indicators) ind.push_back({{"column", c}, {"source", s}});
  for (const auto& [s, c] : truth.duplicated) dup.push_back({s, c});
  const json out{{"format", "mind-ground-truth"},
                 {"schema_version", 1},
                 {"features", truth.feature_names},
                 {"coefficients", truth.coefficients},
                 {"invariant", truth.invariant},
                 {"strong", truth.strong},
                 {"duplicated", dup},
                 {"indicators", ind},
                 {"timesteps", truth.timesteps},
                 {"output", to_string(truth.output)},
                 {"spec", truth.spec}};
  return out.dump(2);
}

GroundTruth ground_truth_from_json_text(const std::string& text) {
  try {
    const json j = json::parse(text);
    require(j.at("format") == "mind-ground-truth", ErrorCode::parse, "not a ground-truth manifest");
    require(j.at("schema_version") == 1, ErrorCode::parse, "unsupported ground-truth schema version");
    GroundTruth g;
    g.feature_names = j.at("features").get<std::vector<std::string>>();
    g.coefficients = j.at("coefficients").get<std::vector<double>>();
    g.invariant = j.at("invariant").get<std::vector<std::size_t>>();
    g.strong = j.at("strong").get<std::vector<std::size_t>>();
    for (const json& p : j.at("duplicated")) g.duplicated.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    for (const json& p : j.at("indicators")) {
      g.indicators.emplace_back(p.at("column").get<std::size_t>(), p.at("source").get<std::size_t>());
    }
    g.timesteps = j.at("timesteps").get<std::size_t>();
    g.output = parse_output_kind(j.at("output").get<std::string>());
    g.spec = j.at("spec").get<SyntheticSpec>();
    require(g.coefficients.size() == g.feature_names.size(), ErrorCode::parse,
            "ground truth lists a different number of coefficients and features");
    return g;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed ground-truth manifest: ") + e.what());
  }
}

}  // namespace mind
