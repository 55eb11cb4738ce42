// Command-line driver: synthetic data, model training, MIND scoring and the
// analyses built on top of it. Every subcommand writes JSON into --out and
// prints a one-line JSON summary on stdout.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mind/analysis/attribution.hpp"
#include "mind/analysis/report.hpp"
#include "mind/analysis/sanity.hpp"
#include "mind/analysis/stats.hpp"
#include "mind/analysis/theory.hpp"
#include "mind/cli_io/config.hpp"
#include "mind/cli_io/dataset_io.hpp"
#include "mind/cli_io/synthetic.hpp"
#include "mind/diffcore/error.hpp"
#include "mind/mindtrain/json.hpp"
#include "mind/mindtrain/mind.hpp"
#include "mind/models/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mind;

namespace {

struct Global {
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::string out = ".";
  std::size_t threads = 1;

  std::uint64_t resolve_seed(std::uint64_t configured) const { return seed_opt->count() > 0 ? seed : configured; }
  std::string path(const std::string& name) const { return (fs::path(out) / name).string(); }
  std::string or_default(const std::string& given, const std::string& name) const {
    return given.empty() ? path(name) : given;
  }
};

json nullable(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return out;
}

DatasetFile load_data(const std::string& csv, const std::string& splits) { return load_dataset(csv, splits, true); }

void check_compatible(const Dataset& data, const Model& model) {
  require(data.instance_shape() == model.input_shape(), ErrorCode::shape_mismatch,
          "dataset instances " + to_string(data.instance_shape()) + " do not match model input " +
              to_string(model.input_shape()));
}

Tensor split_rows(const Dataset& data, Split preferred, std::size_t limit) {
  auto rows = data.indices(preferred);
  if (rows.empty()) rows = data.indices(Split::train);
  if (limit > 0 && rows.size() > limit) rows.resize(limit);
  return gather_instances(data, rows);
}

// Transform and MIND settings shared by tune-lambda and train-transform.
struct MindOptions {
  std::string config_file;
  std::string transform_file;
  std::string kind;
  std::string basis;
  std::size_t basis_size = 0;
  bool no_intercept = false;
  std::optional<double> lambda;
  std::optional<std::size_t> restarts;
  std::optional<std::size_t> top_k;

  void add(CLI::App* cmd, bool with_lambda) {
    cmd->add_option("--config", config_file, "MIND config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--transform-config", transform_file, "transform spec JSON")->check(CLI::ExistingFile);
    cmd->add_option("--kind", kind, "gating | residual | basis");
    cmd->add_option("--basis", basis, "chebyshev | pulse");
    cmd->add_option("--basis-size", basis_size, "basis functions per feature");
    cmd->add_flag("--no-intercept", no_intercept, "gating without the additive term");
    if (with_lambda) cmd->add_option("--lambda", lambda, "regularization weight");
    cmd->add_option("--restarts", restarts, "number of restarts");
    cmd->add_option("--top-k", top_k, "restarts kept in the average");
  }

  MindConfig config(const Global& g) const {
    MindConfig c;
    if (!config_file.empty()) c = read_json_file(config_file).get<MindConfig>();
    if (lambda) c.lambda = *lambda;
    if (restarts) c.restarts = *restarts;
    if (top_k) c.top_k = *top_k;
    c.seed = g.resolve_seed(c.seed);
    c.threads = g.threads;
    c.validate();
    return c;
  }

  TransformSpec spec() const {
    TransformSpec s;
    if (!transform_file.empty()) s = read_json_file(transform_file).get<TransformSpec>();
    if (!kind.empty()) s.kind = parse_transform_kind(kind);
    if (!basis.empty()) s.basis = parse_basis_kind(basis);
    if (basis_size > 0) s.basis_size = basis_size;
    if (no_intercept) s.intercept = false;
    return s;
  }
};

struct DataOptions {
  std::string data;
  std::string splits;
  std::string model;

  void add(CLI::App* cmd, bool with_model = true) {
    cmd->add_option("--data", data, "dataset CSV (default <out>/data.csv)");
    cmd->add_option("--splits", splits, "split sidecar (default next to the CSV)");
    if (with_model) cmd->add_option("--model", model, "model checkpoint (default <out>/model.json)");
  }
};

void emit(const json& summary) { std::cout << summary.dump() << std::endl; }

// gen-data --------------------------------------------------------------------

struct GenData {
  std::string config_file;
  std::optional<std::size_t> n, d, timesteps;
  std::vector<std::size_t> invariant, missing;
  std::vector<std::string> duplicate;
  std::optional<double> label_noise;
  std::string output;

  void run(const Global& g) const {
    SyntheticSpec spec;
    if (!config_file.empty()) spec = read_json_file(config_file).get<SyntheticSpec>();
    if (n) spec.n = *n;
    if (d) spec.d = *d;
    if (timesteps) spec.timesteps = *timesteps;
    if (!invariant.empty()) spec.invariant = invariant;
    if (!missing.empty()) spec.missing = missing;
    if (!duplicate.empty()) {
      spec.duplicated.clear();
      for (const std::string& p : duplicate) {
        const auto colon = p.find(':');
        require(colon != std::string::npos, ErrorCode::invalid_argument,
                "--duplicate expects SOURCE:COPY, got '" + p + "'");
        try {
          spec.duplicated.emplace_back(std::stoul(p.substr(0, colon)), std::stoul(p.substr(colon + 1)));
        } catch (const std::logic_error&) {
          fail(ErrorCode::invalid_argument, "--duplicate expects SOURCE:COPY, got '" + p + "'");
        }
      }
    }
    if (label_noise) spec.label_noise = *label_noise;
    if (!output.empty()) spec.output = parse_output_kind(output);
    spec.seed = g.resolve_seed(spec.seed);

    const SyntheticData s = generate_synthetic(spec);
    json outputs{{"data", g.path("data.csv")},
                 {"splits", g.path("data.splits.json")},
                 {"ground_truth", g.path("ground_truth.json")}};
    save_dataset(s.data, s.truth.feature_names, g.path("data.csv"), g.path("data.splits.json"));
    write_text_file(ground_truth_to_json_text(s.truth) + "\n", g.path("ground_truth.json"));
    if (s.truth.timesteps == 0) {
      save_model(generator_model(s.truth), g.path("generator_model.json"));
      outputs["generator_model"] = g.path("generator_model.json");
    }
    emit({{"command", "gen-data"},
          {"instances", s.data.size()},
          {"columns", s.truth.feature_names.size()},
          {"invariant", s.truth.invariant},
          {"outputs", outputs}});
  }
};

// train-model -------------------------------------------------------------------

struct TrainModel {
  DataOptions io;
  std::string config_file;
  bool adversarial = false;
  std::optional<double> epsilon;
  std::string architecture;
  std::string output;

  void run(const Global& g) const {
    ModelSpec mspec;
    TrainConfig tc;
    if (!config_file.empty()) {
      const json j = read_json_file(config_file);
      require(j.is_object(), ErrorCode::parse, "train-model config must be a JSON object");
      for (const auto& item : j.items()) {
        require(item.key() == "model" || item.key() == "train", ErrorCode::parse,
                "train-model config: unknown key '" + item.key() + "'");
      }
      if (j.contains("model")) mspec = j.at("model").get<ModelSpec>();
      if (j.contains("train")) tc = j.at("train").get<TrainConfig>();
    }
    if (!architecture.empty()) mspec.architecture = parse_architecture(architecture);
    if (!output.empty()) mspec.output = parse_output_kind(output);
    if (adversarial) tc.adversarial = true;
    if (epsilon) tc.pgd.epsilon = *epsilon;
    tc.seed = g.resolve_seed(tc.seed);
    tc.validate();

    const DatasetFile file = load_data(g.or_default(io.data, "data.csv"), io.splits);
    const Dataset& data = file.data;
    Rng rng = Rng(tc.seed).substream("model-init");
    Model model = build_model(mspec.architecture, mspec.output, mspec.dims(data.features(), data.timesteps()), rng);
    model.set_seed(tc.seed);
    const TrainResult result = tc.adversarial ? train_adversarial(model, data, tc) : train(model, data, tc);

    json history = json::array();
    for (const EpochRecord& e : result.history) {
      history.push_back({{"train_loss", e.train_loss},
                         {"validation_loss", e.validation_loss},
                         {"learning_rate", e.learning_rate}});
    }
    json test = nullptr;
    const auto test_rows = data.indices(Split::test);
    if (!test_rows.empty()) {
      const Tensor x = gather_instances(data, test_rows);
      const auto y = gather_labels(data, test_rows);
      test = {{"instances", test_rows.size()}, {"loss", batch_loss(result.model, x, y)}};
      if (result.model.output_kind() == OutputKind::bernoulli) {
        const auto p = predict_batch(result.model, x);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < p.size(); ++i) hits += (p[i] >= 0.5) == (y[i] >= 0.5) ? 1 : 0;
        test["accuracy"] = static_cast<double>(hits) / static_cast<double>(p.size());
      }
    }
    const std::string model_path = g.or_default(io.model, "model.json");
    save_model(result.model, model_path);
    const json record{{"format", "mind-train-model"},
                      {"schema_version", 1},
                      {"model", mspec},
                      {"train", tc},
                      {"fingerprint", result.model.fingerprint()},
                      {"parameters", result.model.parameter_count()},
                      {"best_epoch", result.best_epoch},
                      {"history", history},
                      {"normalization", {{"mean", file.stats.mean}, {"stddev", file.stats.stddev}}},
                      {"test", test}};
    write_json_file(record, g.path("train-model.json"));
    emit({{"command", "train-model"},
          {"fingerprint", result.model.fingerprint()},
          {"best_epoch", result.best_epoch},
          {"test", test},
          {"outputs", {{"model", model_path}, {"record", g.path("train-model.json")}}}});
  }
};

// tune-lambda ---------------------------------------------------------------------

struct TuneLambda {
  DataOptions io;
  MindOptions mo;
  bool allow_infeasible = false;

  void run(const Global& g) const {
    const MindConfig config = mo.config(g);
    const TransformSpec spec = mo.spec();
    const Model model = load_model(g.or_default(io.model, "model.json"));
    const DatasetFile file = load_data(g.or_default(io.data, "data.csv"), io.splits);
    check_compatible(file.data, model);
    const LambdaSearch search = tune_lambda(model, spec, file.data, config);
    json trials = json::array();
    for (const LambdaTrial& t : search.trials) {
      trials.push_back(
          {{"lambda", t.lambda}, {"w1_term", t.w1_term}, {"cosine_term", t.cosine_term}, {"feasible", t.feasible}});
    }
    const json record{{"format", "mind-lambda-search"},
                      {"schema_version", 1},
                      {"config", config},
                      {"transform", spec},
                      {"model_fingerprint", model.fingerprint()},
                      {"lambda", search.lambda},
                      {"feasible", search.feasible},
                      {"trials", trials},
                      {"diagnostics", search.run.diagnostics}};
    write_json_file(record, g.path("tune-lambda.json"));
    require(search.feasible || allow_infeasible, ErrorCode::infeasible,
            "no grid lambda meets W1 <= " + std::to_string(config.w1_limit) + " and cosine <= " +
                std::to_string(config.cosine_limit) + "; the closest trial is recorded in " +
                g.path("tune-lambda.json"));
    emit({{"command", "tune-lambda"},
          {"lambda", search.lambda},
          {"feasible", search.feasible},
          {"outputs", {{"search", g.path("tune-lambda.json")}}}});
  }
};

// train-transform -------------------------------------------------------------------

struct TrainTransform {
  DataOptions io;
  MindOptions mo;
  std::string tune_file;

  void run(const Global& g) const {
    MindConfig config = mo.config(g);
    if (!tune_file.empty()) {
      require(!mo.lambda, ErrorCode::invalid_argument, "give either --lambda or --tune, not both");
      const json t = read_json_file(tune_file);
      require(t.value("format", "") == "mind-lambda-search", ErrorCode::parse,
              "'" + tune_file + "' is not a tune-lambda output");
      config.lambda = t.at("lambda").get<double>();
    }
    const TransformSpec spec = mo.spec();
    const Model model = load_model(g.or_default(io.model, "model.json"));
    const DatasetFile file = load_data(g.or_default(io.data, "data.csv"), io.splits);
    check_compatible(file.data, model);
    const RestartSummary summary = multi_restart(model, spec, file.data, config);
    const RestartRecord& best = summary.runs.at(summary.selected.front());
    save_transform(*best.transform, g.path("transform.json"));
    write_text_file(restart_manifest_json(summary, config, spec) + "\n", g.path("restarts.json"));
    std::size_t failed = 0;
    for (const auto& r : summary.runs) failed += r.ok ? 0 : 1;
    emit({{"command", "train-transform"},
          {"lambda", config.lambda},
          {"selected", summary.selected},
          {"failed_restarts", failed},
          {"w1_term", best.diagnostics.w1_term},
          {"cosine_term", best.diagnostics.cosine_term},
          {"outputs", {{"transform", g.path("transform.json")}, {"restarts", g.path("restarts.json")}}}});
  }
};

// score ---------------------------------------------------------------------------------

std::map<std::string, std::vector<double>> baseline_scores(const Model& model, const Tensor& x, std::size_t steps) {
  return {{"saliency", saliency_scores(model, x)}, {"integrated_gradients", integrated_gradients_scores(model, x, steps)}};
}

struct Score {
  DataOptions io;
  std::string restarts_file;
  std::string transform_file;
  bool with_baselines = false;
  std::size_t samples = 256;
  std::size_t steps = 64;

  void run(const Global& g) const {
    const Model model = load_model(g.or_default(io.model, "model.json"));
    const DatasetFile file = load_data(g.or_default(io.data, "data.csv"), io.splits);
    check_compatible(file.data, model);
    RestartManifest manifest =
        restart_manifest_from_json(read_json_file(g.or_default(restarts_file, "restarts.json")).dump());
    require(!manifest.summary.selected.empty(), ErrorCode::precondition, "restart manifest selects no runs");
    Transform best = load_transform(g.or_default(transform_file, "transform.json"));
    require(best.kind() == manifest.spec.kind, ErrorCode::precondition,
            "transform checkpoint does not match the restart manifest");
    manifest.summary.runs.at(manifest.summary.selected.front()).transform = std::move(best);
    const MindReport report =
        make_report(model, file.data, manifest.spec, manifest.config, manifest.summary, file.feature_names);
    write_text_file(report_to_json_text(report) + "\n", g.path("report.json"));
    std::map<std::string, std::vector<double>> baselines;
    if (with_baselines) baselines = baseline_scores(model, split_rows(file.data, Split::validation, samples), steps);
    write_text_file(plot_csv(report, baselines), g.path("plot.csv"));
    emit({{"command", "score"},
          {"scores", nullable(report.scores)},
          {"w1_term", report.w1_term},
          {"cosine_term", report.cosine_term},
          {"outputs", {{"report", g.path("report.json")}, {"plot", g.path("plot.csv")}}}});
  }
};

// oracle ----------------------------------------------------------------------------------

struct Oracle {
  std::vector<double> beta;
  std::string model_file;
  double lambda = 1.0;
  std::string moments_file;
  std::string data;
  std::string splits;

  void run(const Global& g) const {
    require(beta.empty() != model_file.empty(), ErrorCode::invalid_argument, "give exactly one of --beta and --model");
    std::vector<double> b = beta;
    if (!model_file.empty()) {
      const Model m = load_model(model_file);
      require(m.architecture() == Architecture::linear, ErrorCode::precondition,
              "the closed form needs a homogeneous linear model");
      const Tensor& p = m.parameter("beta");
      b.assign(p.values().begin(), p.values().end());
    }
    ClosedFormInputs in;
    const std::size_t d = b.size();
    require(moments_file.empty() || data.empty(), ErrorCode::invalid_argument,
            "give at most one of --moments and --data");
    if (!data.empty()) {
      const DatasetFile file = load_data(data, splits);
      require(file.data.timesteps() == 0, ErrorCode::precondition, "the closed form needs vector data");
      in = closed_form_inputs(b, gather_instances(file.data, file.data.indices(Split::train)), lambda);
    } else {
      in.beta = b;
      in.lambda = lambda;
      in.second_moment = Tensor::zeros({d, d});
      if (moments_file.empty()) {
        for (std::size_t j = 0; j < d; ++j) in.second_moment[j * d + j] = 1.0;
      } else {
        const auto rows = read_json_file(moments_file).get<std::vector<std::vector<double>>>();
        require(rows.size() == d, ErrorCode::shape_mismatch, "second-moment matrix must be d x d");
        for (std::size_t i = 0; i < d; ++i) {
          require(rows[i].size() == d, ErrorCode::shape_mismatch, "second-moment matrix must be d x d");
          for (std::size_t j = 0; j < d; ++j) in.second_moment[i * d + j] = rows[i][j];
        }
      }
    }
    const ClosedFormResult r = closed_form_gating(in);
    const json record{{"format", "mind-oracle"},
                      {"schema_version", 1},
                      {"beta", in.beta},
                      {"lambda", in.lambda},
                      {"g", r.g},
                      {"degenerate", r.degenerate}};
    write_json_file(record, g.path("oracle.json"));
    emit({{"command", "oracle"}, {"g", r.g}, {"degenerate", r.degenerate}, {"outputs", {{"oracle", g.path("oracle.json")}}}});
  }
};

// sanity-check -------------------------------------------------------------------------------

json row_json(const SanityRow& row, double baseline_mean) {
  return {{"label", row.label},
          {"layer", row.layer == SanityRow::kBaseline ? json(nullptr) : json(row.layer)},
          {"correlations", row.correlations},
          {"undefined", row.undefined},
          {"mean", std::isfinite(row.mean) ? json(row.mean) : json(nullptr)},
          {"stddev", std::isfinite(row.stddev) ? json(row.stddev) : json(nullptr)},
          {"drop", std::isfinite(row.mean) ? json(baseline_mean - row.mean) : json(nullptr)},
          {"errors", row.errors}};
}

struct SanityCheck {
  DataOptions io;
  std::string report_file;
  std::size_t instances = 5;
  std::size_t restarts = 3;
  std::vector<std::size_t> layers;

  void run(const Global& g) const {
    const std::string report_path = g.or_default(report_file, "report.json");
    require(fs::exists(report_path), ErrorCode::precondition,
            "sanity-check needs reference MIND scores; run `score` first or pass --report (missing '" + report_path +
                "')");
    const MindReport reference = report_from_json_text(read_json_file(report_path).dump());
    const Model model = load_model(g.or_default(io.model, "model.json"));
    const DatasetFile file = load_data(g.or_default(io.data, "data.csv"), io.splits);
    check_compatible(file.data, model);
    SanityConfig sc;
    sc.mind = reference.config;
    sc.spec = reference.spec;
    sc.instances = instances;
    sc.restarts = restarts;
    sc.layers = layers;
    sc.seed = g.resolve_seed(reference.config.seed);
    sc.threads = g.threads;
    const SanityReport r = sanity_check(model, file.data, sc, reference);
    json rows = json::array();
    for (const SanityRow& row : r.layers) rows.push_back(row_json(row, r.baseline.mean));
    const json record{{"format", "mind-sanity"},
                      {"schema_version", 1},
                      {"model_fingerprint", model.fingerprint()},
                      {"instances", instances},
                      {"restarts", restarts},
                      {"seed", sc.seed},
                      {"baseline", row_json(r.baseline, r.baseline.mean)},
                      {"layers", rows}};
    write_json_file(record, g.path("sanity.json"));
    emit({{"command", "sanity-check"},
          {"baseline_mean", record["baseline"]["mean"]},
          {"layers", rows.size()},
          {"outputs", {{"sanity", g.path("sanity.json")}}}});
  }
};

// baselines ------------------------------------------------------------------------------------

struct Baselines {
  DataOptions io;
  std::string report_file;
  std::size_t samples = 256;
  std::size_t steps = 128;

  void run(const Global& g) const {
    const Model model = load_model(g.or_default(io.model, "model.json"));
    const DatasetFile file = load_data(g.or_default(io.data, "data.csv"), io.splits);
    check_compatible(file.data, model);
    const Tensor x = split_rows(file.data, Split::validation, samples);
    std::map<std::string, std::vector<double>> scores = baseline_scores(model, x, steps);
    if (!report_file.empty()) {
      const MindReport report = report_from_json_text(read_json_file(report_file).dump());
      require(report.model_fingerprint == model.fingerprint(), ErrorCode::precondition,
              "report was computed for a different model");
      require(!report.scores.empty(), ErrorCode::precondition, "report has no per-feature MIND scores");
      scores["mind"] = report.scores;
    }
    json table = json::array();
    for (auto a = scores.begin(); a != scores.end(); ++a) {
      for (auto b = std::next(a); b != scores.end(); ++b) {
        const RankCorrelation rc = spearman(a->second, b->second);
        table.push_back({{"a", a->first},
                         {"b", b->first},
                         {"rho", rc.defined ? json(rc.rho) : json(nullptr)},
                         {"p_value", rc.defined ? json(rc.p_value) : json(nullptr)}});
      }
    }
    json by_method = json::object();
    for (const auto& [name, v] : scores) by_method[name] = v;
    const json record{{"format", "mind-baselines"},
                      {"schema_version", 1},
                      {"model_fingerprint", model.fingerprint()},
                      {"features", file.feature_names},
                      {"samples", x.extent(0)},
                      {"steps", steps},
                      {"scores", by_method},
                      {"spearman", table}};
    write_json_file(record, g.path("baselines.json"));
    emit({{"command", "baselines"}, {"spearman", table}, {"outputs", {{"baselines", g.path("baselines.json")}}}});
  }
};

int report_error(std::string_view code, const std::string& message, int status) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature invariance scores for trained models"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  g.seed_opt = app.add_option("--seed", g.seed, "seed for every random draw (overrides config seeds)");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for restarts")->check(CLI::PositiveNumber);

  GenData gen;
  auto* c_gen = app.add_subcommand("gen-data", "synthetic data with planted ground truth");
  c_gen->add_option("--config", gen.config_file, "synthetic spec JSON")->check(CLI::ExistingFile);
  c_gen->add_option("--n", gen.n, "instances");
  c_gen->add_option("--d", gen.d, "base features");
  c_gen->add_option("--timesteps", gen.timesteps, "series length (0 for vector data)");
  c_gen->add_option("--invariant", gen.invariant, "planted invariant features")->delimiter(',');
  c_gen->add_option("--duplicate", gen.duplicate, "duplicated pairs SOURCE:COPY")->delimiter(',');
  c_gen->add_option("--missing", gen.missing, "features with a missing-value indicator")->delimiter(',');
  c_gen->add_option("--label-noise", gen.label_noise, "label flip probability or noise sd");
  c_gen->add_option("--output", gen.output, "bernoulli | regression");

  TrainModel tm;
  auto* c_tm = app.add_subcommand("train-model", "train the predictor");
  tm.io.add(c_tm);
  c_tm->add_option("--config", tm.config_file, "JSON with optional \"model\" and \"train\" objects")
      ->check(CLI::ExistingFile);
  c_tm->add_option("--architecture", tm.architecture, "linear | mlp | seqconv");
  c_tm->add_option("--output", tm.output, "bernoulli | regression");
  c_tm->add_flag("--adversarial", tm.adversarial, "PGD adversarial training");
  c_tm->add_option("--epsilon", tm.epsilon, "PGD radius");

  TuneLambda tl;
  auto* c_tl = app.add_subcommand("tune-lambda", "grid search for the regularization weight");
  tl.io.add(c_tl);
  tl.mo.add(c_tl, false);
  c_tl->add_flag("--allow-infeasible", tl.allow_infeasible, "exit 0 even when no lambda meets the limits");

  TrainTransform tt;
  auto* c_tt = app.add_subcommand("train-transform", "train MIND transforms with restarts");
  tt.io.add(c_tt);
  tt.mo.add(c_tt, true);
  c_tt->add_option("--tune", tt.tune_file, "take lambda from a tune-lambda output")->check(CLI::ExistingFile);

  Score sc;
  auto* c_sc = app.add_subcommand("score", "MIND report and plot data");
  sc.io.add(c_sc);
  c_sc->add_option("--restarts", sc.restarts_file, "restart manifest (default <out>/restarts.json)");
  c_sc->add_option("--transform", sc.transform_file, "best transform (default <out>/transform.json)");
  c_sc->add_flag("--with-baselines", sc.with_baselines, "add saliency and integrated-gradient columns to the plot");
  c_sc->add_option("--samples", sc.samples, "instances used for the baselines");
  c_sc->add_option("--steps", sc.steps, "integrated-gradient steps")->check(CLI::Range(32, 100000));

  Oracle orc;
  auto* c_or = app.add_subcommand("oracle", "closed-form gates for a linear model");
  c_or->add_option("--beta", orc.beta, "coefficients")->delimiter(',');
  c_or->add_option("--model", orc.model_file, "linear model checkpoint")->check(CLI::ExistingFile);
  c_or->add_option("--lambda", orc.lambda, "regularization weight")->capture_default_str();
  c_or->add_option("--moments", orc.moments_file, "second-moment matrix as a JSON array of rows")
      ->check(CLI::ExistingFile);
  c_or->add_option("--data", orc.data, "estimate the second moments from the training split");
  c_or->add_option("--splits", orc.splits, "split sidecar for --data");

  SanityCheck sn;
  auto* c_sn = app.add_subcommand("sanity-check", "layer randomization test");
  sn.io.add(c_sn);
  c_sn->add_option("--report", sn.report_file, "reference MIND report (default <out>/report.json)");
  c_sn->add_option("--instances", sn.instances, "shuffled copies per layer")->check(CLI::PositiveNumber);
  c_sn->add_option("--restarts", sn.restarts, "restarts per copy")->check(CLI::PositiveNumber);
  c_sn->add_option("--layers", sn.layers, "layer indices (default all)")->delimiter(',');

  Baselines bl;
  auto* c_bl = app.add_subcommand("baselines", "saliency, integrated gradients and rank correlations");
  bl.io.add(c_bl);
  c_bl->add_option("--report", bl.report_file, "include MIND scores from this report");
  c_bl->add_option("--samples", bl.samples, "instances averaged over");
  c_bl->add_option("--steps", bl.steps, "integrated-gradient steps")->check(CLI::Range(32, 100000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    fs::create_directories(g.out);
    if (c_gen->parsed()) gen.run(g);
    if (c_tm->parsed()) tm.run(g);
    if (c_tl->parsed()) tl.run(g);
    if (c_tt->parsed()) tt.run(g);
    if (c_sc->parsed()) sc.run(g);
    if (c_or->parsed()) orc.run(g);
    if (c_sn->parsed()) sn.run(g);
    if (c_bl->parsed()) bl.run(g);
  } catch (const Error& e) {
    return report_error(to_string(e.code()), e.what(), 1);
  } catch (const json::exception& e) {
    return report_error("parse", e.what(), 1);
  } catch (const fs::filesystem_error& e) {
    return report_error("io", e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
  return 0;
}
