// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is nonzero if any ran and failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mind/analysis/attribution.hpp"
#include "mind/analysis/report.hpp"
#include "mind/analysis/sanity.hpp"
#include "mind/analysis/stats.hpp"
#include "mind/analysis/theory.hpp"
#include "mind/cli_io/synthetic.hpp"
#include "mind/diffcore/error.hpp"
#include "mind/mindtrain/mind.hpp"
#include "mind/models/train.hpp"
#include "support/fixtures.hpp"
#include "support/graph_fuzz.hpp"

#ifndef MIND_CLI_PATH
#error "MIND_CLI_PATH must point at the mind executable"
#endif

using namespace mind;
using namespace mind::test_support;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Training set == validation set, full batch, squared distance with the
// inner-product similarity: the setting the closed form describes.
MindConfig closed_form_config(double lambda, std::size_t rows) {
  MindConfig c;
  c.lambda = lambda;
  c.similarity = SimilarityKind::inner_product;
  c.distance = DistanceKind::squared;
  c.batch_size = rows;
  c.learning_rate = 2e-2;
  c.max_epochs = 6000;
  c.patience = 6000;
  c.lr_floor = 1e-12;
  c.restarts = 1;
  c.top_k = 1;
  return c;
}

TransformSpec pure_gating() {
  TransformSpec s;
  s.intercept = false;
  return s;
}

Tensor stack(const std::vector<Tensor>& rows) {
  Dataset d;
  for (const Tensor& r : rows) {
    d.instances.push_back(r);
    d.labels.push_back(0.0);
    d.splits.push_back(Split::train);
  }
  std::vector<std::size_t> all(rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return gather_instances(d, all);
}

std::vector<double> trained_gates(const std::vector<double>& beta, const std::vector<Tensor>& rows, double lambda,
                                  std::uint64_t seed) {
  Rng rng(seed);
  const MindRun run = train_transform(linear_model(beta), pure_gating(), mirrored(rows),
                                      closed_form_config(lambda, rows.size()), rng);
  const Tensor g = run.transform.scores();
  return {g.values().begin(), g.values().end()};
}

// Population objective of the homogeneous linear case for d = 2:
// (1-g)' BCB (1-g) + lambda g' diag(C).
double objective_2d(const ClosedFormInputs& in, double g0, double g1) {
  const double* c = in.second_moment.values().data();
  const double u0 = 1.0 - g0, u1 = 1.0 - g1, b0 = in.beta[0], b1 = in.beta[1];
  return b0 * b0 * c[0] * u0 * u0 + 2.0 * b0 * b1 * c[1] * u0 * u1 + b1 * b1 * c[3] * u1 * u1 +
         in.lambda * (g0 * c[0] + g1 * c[3]);
}

// ---------------------------------------------------------------------------

Outcome gradient_fuzz() {
  const auto start = Clock::now();
  Rng rng(20240611);
  double worst = 0.0;
  const std::size_t cases = 150;
  for (std::size_t i = 0; i < cases; ++i) {
    FuzzCase c = make_fuzz_case(i, rng);
    const auto grads = gradient(c.graph, c.bindings, c.leaves);
    for (const auto& name : c.leaves) {
      worst = std::max(worst, relative_error(grads.at(name), finite_difference(c.graph, c.bindings, name)));
    }
  }
  const double t = seconds_since(start);
  return {worst < 1e-4 && t < 30.0,
          std::to_string(cases) + " graphs, max relative error " + fmt(worst) + ", " + fmt(t) + " s"};
}

Outcome closed_form_equivalence() {
  const auto start = Clock::now();
  const double lambda = 0.5;
  const std::size_t n = 2000;

  // (a) Exactly diagonal empirical moments: every sign pattern of 4
  // features repeated, columns scaled.
  const std::vector<double> beta_a{1.0, 1.5, 2.0, -1.2};
  const std::vector<double> scale{1.0, 0.8, 1.3, 0.6};
  std::vector<Tensor> rows_a;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor x = Tensor::zeros({4});
    for (std::size_t j = 0; j < 4; ++j) x[j] = ((i >> j) & 1 ? 1.0 : -1.0) * scale[j];
    rows_a.push_back(std::move(x));
  }
  const ClosedFormResult cf_a = closed_form_gating(closed_form_inputs(beta_a, stack(rows_a), lambda));
  const double err_a = max_abs_diff(trained_gates(beta_a, rows_a, lambda, 1), cf_a.g);

  // (b) Equicorrelated features, off-diagonal 0.5.
  Rng rng(77);
  const std::vector<double> beta_b{1.0, 1.3, 1.6, -1.2, 0.8, 1.1};
  const auto rows_b = equicorrelated_rows(n, beta_b.size(), 0.5, rng);
  const ClosedFormResult cf_b = closed_form_gating(closed_form_inputs(beta_b, stack(rows_b), lambda));
  const double err_b = max_abs_diff(trained_gates(beta_b, rows_b, lambda, 2), cf_b.g);

  // Closed form against a 1e-3 grid over [0, 1]^2. Clamping the unconstrained
  // solution is the box minimizer when that solution is interior or C is
  // diagonal, so the cases stay in that regime (one clipped diagonal case).
  double err_grid = 0.0;
  for (const auto& [b, rho, lam] : std::vector<std::tuple<std::vector<double>, double, double>>{
           {{1.0, 1.0}, 0.9, 0.5}, {{1.0, 2.0}, 0.5, 0.7}, {{0.4, 1.5}, 0.0, 0.6}, {{1.0, -1.5}, -0.4, 0.9}}) {
    ClosedFormInputs in;
    in.beta = b;
    in.lambda = lam;
    in.second_moment = Tensor({2, 2}, {1.0, rho, rho, 1.0});
    const ClosedFormResult cf = closed_form_gating(in);
    double best = std::numeric_limits<double>::infinity(), g0 = 0, g1 = 0;
    for (int i = 0; i <= 1000; ++i) {
      for (int j = 0; j <= 1000; ++j) {
        const double v = objective_2d(in, i * 1e-3, j * 1e-3);
        if (v < best) best = v, g0 = i * 1e-3, g1 = j * 1e-3;
      }
    }
    err_grid = std::max({err_grid, std::abs(cf.g[0] - g0), std::abs(cf.g[1] - g1)});
  }
  const double t = seconds_since(start);
  return {err_a < 1e-3 && err_b < 1e-3 && err_grid < 1e-3 && t < 120.0,
          "diagonal " + fmt(err_a) + ", correlated " + fmt(err_b) + ", grid " + fmt(err_grid) + " (max-norm), " +
              fmt(t) + " s"};
}

Outcome diagonal_formulas() {
  Rng rng(4);
  std::size_t checked = 0, mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 1 + rng.index(8);
    ClosedFormInputs in;
    in.second_moment = Tensor::zeros({d, d});
    for (std::size_t j = 0; j < d; ++j) {
      in.beta.push_back(rng.uniform(-3.0, 3.0));
      in.second_moment[j * d + j] = 1.0;
    }
    in.lambda = rng.uniform(0.0, 6.0);
    const ClosedFormResult r = closed_form_gating(in);
    for (std::size_t j = 0; j < d; ++j, ++checked) {
      const double b = in.beta[j];
      if (r.g[j] != std::clamp(1.0 - in.lambda / (2.0 * b * b), 0.0, 1.0)) ++mismatches;
    }
  }
  std::size_t threshold_misses = 0;
  for (double b : {0.25, 0.5, 1.0, 1.7, 2.0, 3.0}) {
    ClosedFormInputs in{{b, 1.0}, Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}), 2.0 * b * b};
    const ClosedFormResult r = closed_form_gating(in);
    if (r.g[0] != 0.0) ++threshold_misses;
    ++checked;
  }
  return {mismatches == 0 && threshold_misses == 0,
          std::to_string(checked) + " gates, " + std::to_string(mismatches + threshold_misses) + " inexact"};
}

Outcome weak_invariance_recovery() {
  const auto start = Clock::now();
  SyntheticSpec spec;
  spec.n = 600;
  spec.d = 5;
  spec.invariant = {2};
  spec.seed = 41;
  SyntheticData s = generate_synthetic(spec);
  normalize_features(s.data);
  // An MLP whose first layer ignores feature 2, trained on the labels.
  Rng init(5);
  Model m = build_model(Architecture::mlp, OutputKind::bernoulli, ModelDims{5, 0}, init);
  TrainConfig tc;
  tc.max_epochs = 40;
  m = train(m, s.data, tc).model;
  Tensor w = m.parameter("dense0.weight");
  const std::size_t out = w.extent(1);
  for (std::size_t k = 0; k < out; ++k) w[2 * out + k] = 0.0;
  m.set_parameter("dense0.weight", w);

  std::vector<double> xj;
  for (std::size_t i : s.data.indices(Split::train)) xj.push_back(s.data.instances[i][2]);
  MindConfig c;
  c.lambda = weak_invariance_lambda(0.01, xj);
  c.similarity = SimilarityKind::inner_product;
  c.restarts = 8;
  c.top_k = 8;
  c.max_epochs = 150;
  c.seed = 9;
  const RestartSummary r = multi_restart(m, pure_gating(), s.data, c);
  double worst = 0.0;
  for (const auto& run : r.runs) worst = std::max(worst, run.transform->scores()[2]);
  const double t = seconds_since(start);
  return {worst < 0.01 && t < 120.0,
          "lambda " + fmt(c.lambda) + ", max g_j over 8 restarts " + fmt(worst) + ", " + fmt(t) + " s"};
}

Outcome collinear_sharing() {
  SyntheticSpec spec;
  spec.n = 2000;
  spec.d = 4;
  spec.duplicated = {{1, 2}};
  spec.coefficients = {1.0, 0.7, 0.7, 1.5};
  spec.output = OutputKind::regression;
  spec.seed = 12;
  const SyntheticData s = generate_synthetic(spec);
  std::vector<Tensor> rows = s.data.instances;
  const std::vector<double> beta = spec.coefficients;
  const double lambda = 0.3;
  const ClosedFormResult cf = closed_form_gating(closed_form_inputs(beta, stack(rows), lambda));
  const double cf_gap = std::abs(cf.g[1] - cf.g[2]);

  MindConfig c = closed_form_config(lambda, rows.size());
  c.max_epochs = 3000;
  c.restarts = 5;
  c.top_k = 5;
  const RestartSummary r = multi_restart(linear_model(beta), pure_gating(), mirrored(rows), c);
  const double trained_gap = std::abs(r.mean[1] - r.mean[2]);
  return {cf.degenerate && cf_gap < 1e-6 && trained_gap < 0.05,
          "closed form |g1 - g2| " + fmt(cf_gap) + (cf.degenerate ? " (ridge)" : " (no ridge?)") +
              ", trained " + fmt(trained_gap) + " (" + fmt(r.mean[1]) + " vs " + fmt(r.mean[2]) + ")"};
}

Outcome basis_losslessness() {
  Rng rng(8);
  const BasisSet cheb = make_basis(BasisKind::chebyshev, 60);
  const BasisSet pulse = make_basis(BasisKind::pulse, 60);
  double recon = 0.0, gram = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Tensor x = random_tensor(rng, {60}, 5.0);
    for (const BasisSet* b : {&cheb, &pulse}) {
      const Tensor back = decode(encode(*b, x));
      for (std::size_t t = 0; t < 60; ++t) recon = std::max(recon, std::abs(back[t] - x[t]));
    }
  }
  for (const BasisSet* b : {&cheb, &pulse}) {
    const Tensor g = b->gram();
    const std::size_t k = b->size();
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) gram = std::max(gram, std::abs(g[i * k + j] - (i == j ? 1.0 : 0.0)));
    }
  }
  return {recon < 1e-10 && gram < 1e-10 && cheb.residual_channel && pulse.encoding == BasisEncoding::window,
          "max reconstruction error " + fmt(recon) + ", max Gram deviation " + fmt(gram)};
}

Outcome w1_reduction() {
  Rng rng(3);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double p = rng.uniform(), q = rng.uniform();
    // Minimum transport cost over the vertices of the coupling polytope.
    const double lo = std::max(0.0, (1.0 - q) - p), hi = std::min(1.0 - p, 1.0 - q);
    double brute = std::numeric_limits<double>::infinity();
    for (double a : {lo, hi}) brute = std::min(brute, ((1.0 - p) - a) + ((1.0 - q) - a));
    worst = std::max(worst, std::abs(w1_reduced(OutputDistribution::bernoulli, p, q) - brute));
  }
  return {worst <= 1e-12, "100 pairs, max deviation " + fmt(worst)};
}

Outcome proximal_contract() {
  Rng rng(10);
  SyntheticSpec spec;
  spec.n = 150;
  spec.d = 3;
  spec.timesteps = 12;
  spec.invariant = {0};
  spec.seed = 10;
  const SyntheticData s = generate_synthetic(spec);
  const Model m = build_model(Architecture::seqconv, OutputKind::bernoulli, ModelDims{3, 12, {6, 4}, {1, 2}}, rng);
  MindConfig c;
  c.lambda = 2.0;
  c.learning_rate = 0.2;
  std::size_t steps = 0, violations = 0;
  for (TransformKind kind : {TransformKind::gating, TransformKind::basis}) {
    for (BasisKind basis : {BasisKind::chebyshev, BasisKind::pulse}) {
      if (kind == TransformKind::gating && basis == BasisKind::pulse) continue;
      TransformSpec ts;
      ts.kind = kind;
      ts.basis = basis;
      Rng run(steps + 1);
      train_transform(m, ts, s.data, c, run, [&](const Transform& t, std::size_t) {
        ++steps;
        if (!t.gates_in_box()) ++violations;
      });
    }
  }
  return {steps > 0 && violations == 0,
          std::to_string(steps) + " steps over 3 full runs, " + std::to_string(violations) + " outside [0,1]"};
}

Outcome sanity_check_drop() {
  const auto start = Clock::now();
  SyntheticSpec spec;
  spec.n = 400;
  spec.d = 8;
  spec.timesteps = 12;
  spec.invariant = {0, 1, 2};
  spec.coefficients = {0.0, 0.0, 0.0, 0.6, 1.0, 1.4, 1.8, 2.2};
  spec.seed = 21;
  SyntheticData s = generate_synthetic(spec);
  normalize_features(s.data);
  Rng init(21);
  Model m = build_model(Architecture::seqconv, OutputKind::bernoulli, ModelDims{8, 12, {8, 8}, {1, 2}}, init);
  TrainConfig tc;
  tc.max_epochs = 60;
  m = train(m, s.data, tc).model;

  MindConfig c;
  c.similarity = SimilarityKind::inner_product;
  c.lambda = 0.01;
  c.max_epochs = 60;
  c.restarts = 3;
  c.top_k = 3;
  c.seed = 4;
  const TransformSpec ts = pure_gating();
  const MindReport ref = make_report(m, s.data, ts, c, multi_restart(m, ts, s.data, c));

  SanityConfig sc;
  sc.mind = c;
  sc.spec = ts;
  sc.instances = 5;
  sc.restarts = 3;
  sc.seed = 8;
  const SanityReport r = sanity_check(m, s.data, sc, ref);
  const SanityRow& head = r.layers.back();
  const SanityRow& early = r.layers.front();
  const double t = seconds_since(start);
  std::string detail = "baseline " + fmt(r.baseline.mean);
  for (const SanityRow& row : r.layers) {
    detail += ", " + row.label + " " + fmt(row.mean);
    if (row.undefined > 0) detail += " (" + std::to_string(row.undefined) + " constant)";
  }
  detail += "; " + fmt(t) + " s";
  return {r.baseline.mean - head.mean >= 0.3 && early.mean < r.baseline.mean && t < 900.0, detail};
}

Outcome baseline_identities() {
  Rng rng(30);
  const std::vector<double> beta{1.5, -0.25, 0.0, 2.0};
  const Tensor x = Tensor({3, 4}, {0.3, -1.0, 2.0, 0.5, 1.1, 0.2, -0.7, -2.0, 0.0, 0.4, 1.0, -0.1});
  const auto sal = saliency_scores(linear_model(beta), x);
  bool exact = true;
  for (std::size_t j = 0; j < 4; ++j) exact = exact && sal[j] == std::abs(beta[j]);

  const Model mlp = build_model(Architecture::mlp, OutputKind::bernoulli, ModelDims{4, 0}, rng);
  const Tensor ig = integrated_gradients(mlp, x, 128);
  double residual = 0.0;
  const auto fx = predict_batch(mlp, x);
  const double f0 = predict(mlp, Tensor::zeros({4}));
  for (std::size_t i = 0; i < 3; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) sum += ig[i * 4 + j];
    residual = std::max(residual, std::abs(sum - (fx[i] - f0)));
  }
  const std::vector<double> a{0.1, 0.5, 0.2, 3.0, -1.0}, b{std::exp(0.1), std::exp(0.5), std::exp(0.2),
                                                          std::exp(3.0), std::exp(-1.0)};
  const RankCorrelation rc = spearman(a, b);
  return {exact && residual < 1e-3 && rc.defined && rc.rho == 1.0,
          std::string("saliency ") + (exact ? "exact" : "inexact") + ", IG completeness residual " + fmt(residual) +
              ", monotone Spearman " + fmt(rc.rho)};
}

// Runs the CLI; returns its stdout parsed as JSON.
nlohmann::json cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.json";
  const std::string cmd = std::string("\"") + MIND_CLI_PATH + "\" --out \"" + dir.string() + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream text;
  text << in.rdbuf();
  if (status != 0) {
    std::ifstream err(dir / "stderr.txt");
    std::stringstream e;
    e << err.rdbuf();
    fail(ErrorCode::precondition, "`mind " + args + "` failed: " + e.str());
  }
  return nlohmann::json::parse(text.str());
}

Outcome cli_pipeline() {
  const auto start = Clock::now();
  const fs::path dir = fs::temp_directory_path() / "mind_acceptance_pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);
  // Four planted zeros, nine weakly used features and three strong ones. The
  // cosine limit keeps at most a quarter of the input norm, so the weak
  // features must switch off before any lambda is feasible, which puts the
  // selected lambda well above what fitting noise on planted features survives.
  {
    std::ofstream(dir / "mind.json") << R"({"similarity": "inner_product", "restarts": 8, "top_k": 5})";
    std::ofstream(dir / "synthetic.json")
        << R"({"n": 4000, "d": 16, "output": "regression", "label_noise": 0.01, "coefficients":)"
        << R"( [0, 0, 0, 0, 0.01, -0.01, 0.01, -0.01, 0.01, -0.01, 0.01, -0.01, 0.01, 1.5, -1.2, 1.8]})";
  }
  const std::string mind_cfg = "--config \"" + (dir / "mind.json").string() + "\" --no-intercept";
  cli("--seed 7 gen-data --config \"" + (dir / "synthetic.json").string() + "\"", dir);
  cli("--seed 7 train-model --architecture linear --output regression", dir);
  cli("--seed 7 tune-lambda " + mind_cfg, dir);
  cli("--seed 7 train-transform " + mind_cfg + " --tune \"" + (dir / "tune-lambda.json").string() + "\"", dir);
  cli("--seed 7 score", dir);

  std::ifstream rin(dir / "report.json"), gin(dir / "ground_truth.json");
  std::stringstream rtext, gtext;
  rtext << rin.rdbuf();
  gtext << gin.rdbuf();
  const MindReport report = report_from_json_text(rtext.str());
  const GroundTruth truth = ground_truth_from_json_text(gtext.str());
  double planted_max = 0.0, strong_min = 1.0;
  for (std::size_t j : truth.invariant) planted_max = std::max(planted_max, report.scores.at(j));
  for (std::size_t j : truth.strong) strong_min = std::min(strong_min, report.scores.at(j));
  const bool limits = report.w1_term <= report.config.w1_limit && report.cosine_term <= report.config.cosine_limit;
  const double t = seconds_since(start);
  return {planted_max < 0.05 && strong_min > 0.5 && limits && t < 600.0,
          "max planted score " + fmt(planted_max) + ", min strong score " + fmt(strong_min) + ", W1 " +
              fmt(report.w1_term) + ", cosine " + fmt(report.cosine_term) + ", " + fmt(t) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_fuzz},
      {"closed-form equivalence", closed_form_equivalence},
      {"diagonal formulas", diagonal_formulas},
      {"weak invariance recovery", weak_invariance_recovery},
      {"collinear score sharing", collinear_sharing},
      {"basis losslessness", basis_losslessness},
      {"W1 reduction", w1_reduction},
      {"proximal contract", proximal_contract},
      {"sanity check", sanity_check_drop},
      {"baseline identities", baseline_identities},
      {"end-to-end pipeline", cli_pipeline},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!selected.empty() && !selected.contains(k + 1)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
