#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "mind/diffcore/error.hpp"
#include "mind/mindtrain/json.hpp"
#include "mind/mindtrain/mind.hpp"

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

void to_json(json& j, const MindConfig& c) {
  j = json{{"lambda", c.lambda},
           {"similarity", to_string(c.similarity)},
           {"distance", to_string(c.distance)},
           {"clip_cosine", c.clip_cosine},
           {"w1_limit", c.w1_limit},
           {"cosine_limit", c.cosine_limit},
           {"restarts", c.restarts},
           {"top_k", c.top_k},
           {"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"patience", c.patience},
           {"lr_floor", c.lr_floor},
           {"max_epochs", c.max_epochs},
           {"weight_decay", c.weight_decay},
           {"seed", c.seed},
           {"threads", c.threads}};
}

void from_json(const json& j, MindConfig& c) {
  check_keys(j,
             {"lambda", "similarity", "distance", "clip_cosine", "w1_limit", "cosine_limit", "restarts", "top_k",
              "learning_rate", "batch_size", "patience", "lr_floor", "max_epochs", "weight_decay", "seed",
              "threads"},
             "mind config");
  read(j, "lambda", c.lambda);
  if (j.contains("similarity")) c.similarity = parse_similarity_kind(j.at("similarity").get<std::string>());
  if (j.contains("distance")) c.distance = parse_distance_kind(j.at("distance").get<std::string>());
  read(j, "clip_cosine", c.clip_cosine);
  read(j, "w1_limit", c.w1_limit);
  read(j, "cosine_limit", c.cosine_limit);
  read(j, "restarts", c.restarts);
  read(j, "top_k", c.top_k);
  read(j, "learning_rate", c.learning_rate);
  read(j, "batch_size", c.batch_size);
  read(j, "patience", c.patience);
  read(j, "lr_floor", c.lr_floor);
  read(j, "max_epochs", c.max_epochs);
  read(j, "weight_decay", c.weight_decay);
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
  c.validate();
}

void to_json(json& j, const TransformSpec& s) {
  j = json{{"kind", to_string(s.kind)},
           {"intercept", s.intercept},
           {"basis", to_string(s.basis)},
           {"basis_size", s.basis_size},
           {"basis_intercept", s.basis_intercept},
           {"residual_hidden", s.residual_hidden},
           {"residual_blocks", s.residual_blocks},
           {"init_noise", s.init_noise}};
}

void from_json(const json& j, TransformSpec& s) {
  check_keys(j,
             {"kind", "intercept", "basis", "basis_size", "basis_intercept", "residual_hidden", "residual_blocks",
              "init_noise"},
             "transform spec");
  if (j.contains("kind")) s.kind = parse_transform_kind(j.at("kind").get<std::string>());
  read(j, "intercept", s.intercept);
  if (j.contains("basis")) s.basis = parse_basis_kind(j.at("basis").get<std::string>());
  read(j, "basis_size", s.basis_size);
  read(j, "basis_intercept", s.basis_intercept);
  read(j, "residual_hidden", s.residual_hidden);
  read(j, "residual_blocks", s.residual_blocks);
  read(j, "init_noise", s.init_noise);
  require(s.init_noise >= 0.0, ErrorCode::invalid_argument, "init_noise must be nonnegative");
}

void to_json(json& j, const MindDiagnostics& d) {
  j = json{{"restart_id", d.restart_id},
           {"seed", d.seed},
           {"w1_term", d.w1_term},
           {"cosine_term", d.cosine_term},
           {"similarity_term", d.similarity_term},
           {"validation_loss", d.validation_loss},
           {"epochs", d.epochs},
           {"best_epoch", d.best_epoch},
           {"loss_curve", d.loss_curve},
           {"validation_curve", d.validation_curve}};
}

void from_json(const json& j, MindDiagnostics& d) {
  j.at("restart_id").get_to(d.restart_id);
  j.at("seed").get_to(d.seed);
  j.at("w1_term").get_to(d.w1_term);
  j.at("cosine_term").get_to(d.cosine_term);
  j.at("similarity_term").get_to(d.similarity_term);
  j.at("validation_loss").get_to(d.validation_loss);
  j.at("epochs").get_to(d.epochs);
  j.at("best_epoch").get_to(d.best_epoch);
  j.at("loss_curve").get_to(d.loss_curve);
  j.at("validation_curve").get_to(d.validation_curve);
}

std::vector<std::uint64_t> restart_seeds(const MindConfig& config) {
  const Rng base = Rng(config.seed).substream("restart");
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < config.restarts; ++r) seeds.push_back(base.substream(r).seed());
  return seeds;
}

RestartSummary multi_restart(const Model& model, const TransformSpec& spec, const Dataset& data,
                             const MindConfig& config) {
  return multi_restart(model, spec, data, config, restart_seeds(config));
}

RestartSummary multi_restart(const Model& model, const TransformSpec& spec, const Dataset& data,
                             const MindConfig& config, const std::vector<std::uint64_t>& seeds) {
  config.validate();
  require(!seeds.empty() && config.top_k <= seeds.size(), ErrorCode::invalid_argument,
          "need at least top_k=" + std::to_string(config.top_k) + " restarts, got " + std::to_string(seeds.size()));
  RestartSummary summary;
  summary.runs.resize(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < seeds.size(); r = next++) {
      RestartRecord& rec = summary.runs[r];
      rec.id = r;
      rec.seed = seeds[r];
      try {
        Rng rng(seeds[r]);
        MindRun run = train_transform(model, spec, data, config, rng);
        run.diagnostics.restart_id = r;
        rec.diagnostics = std::move(run.diagnostics);
        rec.transform = std::move(run.transform);
        rec.ok = true;
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::vector<std::size_t> ok;
  for (const auto& rec : summary.runs) {
    if (rec.ok) ok.push_back(rec.id);
  }
  if (ok.size() < config.top_k) {
    std::string first_error;
    for (const auto& rec : summary.runs) {
      if (!rec.ok) {
        first_error = rec.error;
        break;
      }
    }
    fail(ErrorCode::numerical, std::to_string(ok.size()) + " of " + std::to_string(seeds.size()) +
                                   " restarts succeeded, fewer than top_k=" + std::to_string(config.top_k) +
                                   (first_error.empty() ? "" : "; first failure: " + first_error));
  }
  std::stable_sort(ok.begin(), ok.end(), [&](std::size_t a, std::size_t b) {
    return summary.runs[a].diagnostics.validation_loss < summary.runs[b].diagnostics.validation_loss;
  });
  summary.selected.assign(ok.begin(), ok.begin() + static_cast<std::ptrdiff_t>(config.top_k));

  const Tensor first = summary.runs[summary.selected.front()].transform->scores();
  Tensor mean = Tensor::zeros(first.shape());
  Tensor var = Tensor::zeros(first.shape());
  const double k = static_cast<double>(summary.selected.size());
  for (std::size_t id : summary.selected) {
    const Tensor s = summary.runs[id].transform->scores();
    for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s[i] / k;
  }
  for (std::size_t id : summary.selected) {
    const Tensor s = summary.runs[id].transform->scores();
    for (std::size_t i = 0; i < s.size(); ++i) var[i] += (s[i] - mean[i]) * (s[i] - mean[i]) / k;
  }
  for (std::size_t i = 0; i < var.size(); ++i) var[i] = std::sqrt(var[i]);
  summary.mean = std::move(mean);
  summary.stddev = std::move(var);
  return summary;
}

std::string restart_manifest_json(const RestartSummary& summary, const MindConfig& config,
                                  const TransformSpec& spec) {
  json runs = json::array();
  for (const auto& rec : summary.runs) {
    json r{{"id", rec.id}, {"seed", rec.seed}, {"ok", rec.ok}};
    if (rec.ok) {
      r["diagnostics"] = rec.diagnostics;
    } else {
      r["error"] = rec.error;
    }
    runs.push_back(std::move(r));
  }
  const json out{{"format", "mind-restarts"},
                 {"schema_version", 1},
                 {"config", config},
                 {"transform", spec},
                 {"runs", runs},
                 {"selected", summary.selected},
                 {"mean", std::vector<double>(summary.mean.values().begin(), summary.mean.values().end())},
                 {"stddev", std::vector<double>(summary.stddev.values().begin(), summary.stddev.values().end())},
                 {"score_shape", summary.mean.shape()}};
  return out.dump(2);
}

RestartManifest restart_manifest_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    require(j.at("format") == "mind-restarts", ErrorCode::parse, "not a restart manifest");
    require(j.at("schema_version") == 1, ErrorCode::parse, "unsupported restart manifest version");
    RestartManifest m;
    m.config = j.at("config").get<MindConfig>();
    m.spec = j.at("transform").get<TransformSpec>();
    for (const json& r : j.at("runs")) {
      RestartRecord rec;
      rec.id = r.at("id").get<std::size_t>();
      rec.seed = r.at("seed").get<std::uint64_t>();
      rec.ok = r.at("ok").get<bool>();
      if (rec.ok) {
        rec.diagnostics = r.at("diagnostics").get<MindDiagnostics>();
      } else {
        rec.error = r.at("error").get<std::string>();
      }
      m.summary.runs.push_back(std::move(rec));
    }
    m.summary.selected = j.at("selected").get<std::vector<std::size_t>>();
    const Shape shape = j.at("score_shape").get<Shape>();
    m.summary.mean = Tensor(shape, j.at("mean").get<std::vector<double>>());
    m.summary.stddev = Tensor(shape, j.at("stddev").get<std::vector<double>>());
    for (std::size_t id : m.summary.selected) {
      require(id < m.summary.runs.size() && m.summary.runs[id].ok, ErrorCode::parse,
              "restart manifest selects a missing or failed run");
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed restart manifest: ") + e.what());
  }
}

}  // namespace mind
