#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mind/mindtrain/mind.hpp"

namespace mind {

struct MindReport {
  std::uint64_t model_fingerprint = 0;
  TransformSpec spec;
  MindConfig config;
  std::vector<std::string> feature_names;
  // Per-feature scores in [0, 1]. For basis gating this is the mean over a
  // feature's channels; the full matrix is in channel_scores.
  std::vector<double> scores;
  std::vector<double> score_std;
  std::vector<double> channel_scores;  // (d, channels) row-major, basis gating only
  std::vector<double> channel_std;
  std::size_t channels = 0;
  // rho[j] is NaN (null in JSON) where rho_defined[j] is false.
  std::vector<double> rho;
  std::vector<bool> rho_defined;
  std::vector<std::size_t> selected;
  double w1_term = 0.0;      // best selected restart, validation data
  double cosine_term = 0.0;

  std::size_t features() const noexcept { return rho.size(); }
};

// Builds the report from a finished restart run; the correlation profile is
// computed with the best selected transform over every instance in `data`.
MindReport make_report(const Model& model, const Dataset& data, const TransformSpec& spec, const MindConfig& config,
                       const RestartSummary& summary, std::vector<std::string> feature_names = {});

std::string report_to_json_text(const MindReport& report);
MindReport report_from_json_text(std::string_view text);

// One row per feature: name, score, score_std, rho, then one column per
// named baseline.
std::string plot_csv(const MindReport& report, const std::map<std::string, std::vector<double>>& baselines = {});

}  // namespace mind
