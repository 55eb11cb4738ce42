#include "mind/analysis/sanity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "mind/analysis/stats.hpp"
#include "mind/diffcore/error.hpp"

namespace mind {

namespace {

std::vector<double> per_feature(const Tensor& mean, std::size_t d) {
  const std::size_t c = mean.size() / d;
  std::vector<double> out(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < c; ++k) out[j] += mean[j * c + k] / static_cast<double>(c);
  }
  return out;
}

struct Outcome {
  bool ok = false;
  double rho = 0.0;
  bool undefined = false;
  std::string error;
};

void summarize(SanityRow& row, const std::vector<Outcome>& outcomes) {
  for (const Outcome& o : outcomes) {
    if (!o.ok) {
      row.errors.push_back(o.error);
      continue;
    }
    row.correlations.push_back(o.rho);
    row.undefined += o.undefined ? 1 : 0;
  }
  if (row.correlations.empty()) {
    row.mean = row.stddev = std::nan("");
    return;
  }
  const double k = static_cast<double>(row.correlations.size());
  double m = 0.0, v = 0.0;
  for (double r : row.correlations) m += r / k;
  for (double r : row.correlations) v += (r - m) * (r - m) / k;
  row.mean = m;
  row.stddev = std::sqrt(v);
}

}  // namespace

std::vector<std::uint64_t> sanity_restart_seeds(const SanityConfig& config, std::size_t instance) {
  const Rng base = Rng(config.seed).substream("retrain").substream(instance);
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < config.restarts; ++r) seeds.push_back(base.substream(r).seed());
  return seeds;
}

SanityRow score_correlations(const std::vector<Model>& models, const Dataset& data, const SanityConfig& config,
                             const std::vector<double>& reference, std::string label) {
  require(config.restarts > 0, ErrorCode::invalid_argument, "sanity check needs at least one restart");
  MindConfig mc = config.mind;
  mc.restarts = config.restarts;
  mc.top_k = config.restarts;
  mc.threads = 1;
  std::vector<Outcome> outcomes(models.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < models.size(); i = next++) {
      Outcome& o = outcomes[i];
      try {
        const RestartSummary s = multi_restart(models[i], config.spec, data, mc, sanity_restart_seeds(config, i));
        const auto scores = per_feature(s.mean, reference.size());
        const RankCorrelation rc = spearman(scores, reference);
        o.undefined = !rc.defined;
        o.rho = rc.defined ? rc.rho : 0.0;
        o.ok = true;
      } catch (const std::exception& e) {
        o.error = e.what();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, std::max<std::size_t>(1, models.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  SanityRow row;
  row.label = std::move(label);
  summarize(row, outcomes);
  return row;
}

SanityReport sanity_check(const Model& model, const Dataset& data, const SanityConfig& config,
                          const MindReport& reference) {
  require(reference.model_fingerprint == model.fingerprint(), ErrorCode::precondition,
          "reference scores were computed for a different model (fingerprint " +
              std::to_string(reference.model_fingerprint) + ", model " + std::to_string(model.fingerprint()) + ")");
  require(!reference.scores.empty(), ErrorCode::precondition, "reference report has no MIND scores");
  require(reference.spec.kind == config.spec.kind, ErrorCode::precondition,
          "reference scores come from a different transform kind");
  require(config.instances > 0, ErrorCode::invalid_argument, "sanity check needs at least one instance");
  const auto layers = model.layers();
  std::vector<std::size_t> selected = config.layers;
  if (selected.empty()) {
    for (std::size_t l = 0; l < layers.size(); ++l) selected.push_back(l);
  }

  SanityReport report;
  report.baseline = score_correlations(std::vector<Model>(config.instances, model), data, config, reference.scores,
                                       "baseline");
  const Rng shuffles = Rng(config.seed).substream("shuffle");
  for (std::size_t l : selected) {
    require(l < layers.size(), ErrorCode::out_of_range,
            "layer " + std::to_string(l) + " out of range (model has " + std::to_string(layers.size()) + ")");
    std::vector<Model> variants;
    for (std::size_t i = 0; i < config.instances; ++i) {
      Rng rng = shuffles.substream(l).substream(i);
      variants.push_back(shuffle_layer(model, l, rng));
    }
    SanityRow row = score_correlations(variants, data, config, reference.scores, layers[l].name);
    row.layer = l;
    report.layers.push_back(std::move(row));
  }
  return report;
}

}  // namespace mind
