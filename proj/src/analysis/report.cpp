#include "mind/analysis/report.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mind/analysis/stats.hpp"
#include "mind/diffcore/error.hpp"
#include "mind/mindtrain/json.hpp"

namespace mind {

using nlohmann::json;

namespace {

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Row means of a (d, channels) score matrix.
std::vector<double> row_means(const std::vector<double>& m, std::size_t d, std::size_t c) {
  std::vector<double> out(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < c; ++k) out[j] += m[j * c + k] / static_cast<double>(c);
  }
  return out;
}

json nullable(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return out;
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

MindReport make_report(const Model& model, const Dataset& data, const TransformSpec& spec, const MindConfig& config,
                       const RestartSummary& summary, std::vector<std::string> feature_names) {
  require(!summary.selected.empty(), ErrorCode::precondition, "make_report: restart summary has no selected runs");
  const RestartRecord& best = summary.runs.at(summary.selected.front());
  require(best.ok && best.transform.has_value(), ErrorCode::precondition, "make_report: best restart has no transform");
  const std::size_t d = model.input_shape().at(0);
  if (feature_names.empty()) {
    for (std::size_t j = 0; j < d; ++j) feature_names.push_back("x" + std::to_string(j));
  }
  require(feature_names.size() == d, ErrorCode::invalid_argument,
          "make_report: " + std::to_string(feature_names.size()) + " names for " + std::to_string(d) + " features");

  MindReport r;
  r.model_fingerprint = model.fingerprint();
  r.spec = spec;
  r.config = config;
  r.feature_names = std::move(feature_names);
  r.selected = summary.selected;
  r.w1_term = best.diagnostics.w1_term;
  r.cosine_term = best.diagnostics.cosine_term;
  if (spec.kind == TransformKind::basis) {
    r.channels = summary.mean.size() / d;
    r.channel_scores = values_of(summary.mean);
    r.channel_std = values_of(summary.stddev);
    r.scores = row_means(r.channel_scores, d, r.channels);
    r.score_std = row_means(r.channel_std, d, r.channels);
  } else if (spec.kind == TransformKind::gating) {
    r.scores = values_of(summary.mean);
    r.score_std = values_of(summary.stddev);
  }

  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Tensor x = gather_instances(data, all);
  const CorrelationProfile profile = correlation_profile(x, best.transform->apply(x));
  r.rho = profile.rho;
  r.rho_defined = profile.defined;
  return r;
}

std::string report_to_json_text(const MindReport& r) {
  json scores = nullptr, channels = nullptr;
  if (!r.scores.empty()) scores = json{{"mean", r.scores}, {"std", r.score_std}};
  if (r.channels > 0) {
    channels = json{{"channels", r.channels}, {"mean", r.channel_scores}, {"std", r.channel_std}};
  }
  const json out{{"format", "mind-report"},
                 {"schema_version", 1},
                 {"model_fingerprint", r.model_fingerprint},
                 {"transform", r.spec},
                 {"config", r.config},
                 {"features", r.feature_names},
                 {"scores", scores},
                 {"channel_scores", channels},
                 {"rho", nullable(r.rho)},
                 {"rho_defined", r.rho_defined},
                 {"selected", r.selected},
                 {"w1_term", r.w1_term},
                 {"cosine_term", r.cosine_term}};
  return out.dump(2);
}

MindReport report_from_json_text(std::string_view text) {
  try {
    const json j = json::parse(text);
    require(j.at("format") == "mind-report", ErrorCode::parse, "not a MIND report");
    require(j.at("schema_version") == 1, ErrorCode::parse,
            "unsupported report schema version " + j.at("schema_version").dump());
    MindReport r;
    r.model_fingerprint = j.at("model_fingerprint").get<std::uint64_t>();
    r.spec = j.at("transform").get<TransformSpec>();
    r.config = j.at("config").get<MindConfig>();
    r.feature_names = j.at("features").get<std::vector<std::string>>();
    if (!j.at("scores").is_null()) {
      r.scores = j.at("scores").at("mean").get<std::vector<double>>();
      r.score_std = j.at("scores").at("std").get<std::vector<double>>();
    }
    if (!j.at("channel_scores").is_null()) {
      const json& c = j.at("channel_scores");
      r.channels = c.at("channels").get<std::size_t>();
      r.channel_scores = c.at("mean").get<std::vector<double>>();
      r.channel_std = c.at("std").get<std::vector<double>>();
    }
    for (const json& v : j.at("rho")) {
      r.rho.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    }
    r.rho_defined = j.at("rho_defined").get<std::vector<bool>>();
    r.selected = j.at("selected").get<std::vector<std::size_t>>();
    r.w1_term = j.at("w1_term").get<double>();
    r.cosine_term = j.at("cosine_term").get<double>();
    const std::size_t d = r.feature_names.size();
    require(r.rho.size() == d && r.rho_defined.size() == d && (r.scores.empty() || r.scores.size() == d),
            ErrorCode::parse, "report vectors disagree with the feature count");
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed report: ") + e.what());
  }
}

std::string plot_csv(const MindReport& r, const std::map<std::string, std::vector<double>>& baselines) {
  const std::size_t d = r.features();
  for (const auto& [name, v] : baselines) {
    require(v.size() == d, ErrorCode::shape_mismatch,
            "baseline '" + name + "' has " + std::to_string(v.size()) + " values for " + std::to_string(d) + " features");
  }
  std::ostringstream out;
  out << "feature,score,score_std,rho";
  for (const auto& [name, v] : baselines) out << ',' << name;
  out << '\n';
  for (std::size_t j = 0; j < d; ++j) {
    out << r.feature_names[j] << ',' << (r.scores.empty() ? "" : csv_number(r.scores[j])) << ','
        << (r.score_std.empty() ? "" : csv_number(r.score_std[j])) << ',' << csv_number(r.rho[j]);
    for (const auto& [name, v] : baselines) out << ',' << csv_number(v[j]);
    out << '\n';
  }
  return out.str();
}

}  // namespace mind
