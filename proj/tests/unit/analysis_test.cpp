#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mind/analysis/attribution.hpp"
#include "mind/analysis/report.hpp"
#include "mind/analysis/sanity.hpp"
#include "mind/analysis/stats.hpp"
#include "mind/analysis/theory.hpp"
#include "mind/diffcore/error.hpp"
#include "support/fixtures.hpp"

using namespace mind;
using namespace mind::test_support;

namespace {

Tensor normal_batch(Shape shape, Rng& rng) {
  Tensor x = Tensor::zeros(std::move(shape));
  for (double& v : x.values()) v = rng.normal();
  return x;
}

ClosedFormInputs with_moments(std::vector<double> beta, std::vector<double> c, double lambda) {
  const std::size_t d = beta.size();
  return {std::move(beta), Tensor({d, d}, std::move(c)), lambda};
}

// Squared-loss objective in second-moment form: (1-g)^T BCB (1-g) + lambda g^T diag(C).
double simplified_loss(const ClosedFormInputs& in, double g0, double g1) {
  const double u0 = 1.0 - g0, u1 = 1.0 - g1;
  const double b0 = in.beta[0], b1 = in.beta[1];
  const Tensor& c = in.second_moment;
  const double quad = b0 * b0 * c[0] * u0 * u0 + 2.0 * b0 * b1 * c[1] * u0 * u1 + b1 * b1 * c[3] * u1 * u1;
  return quad + in.lambda * (g0 * c[0] + g1 * c[3]);
}

}  // namespace

TEST(CorrelationProfile, IdentityNegationShift) {
  Rng rng(1);
  const Tensor x = normal_batch({50, 3, 4}, rng);
  Tensor neg = x, shifted = x;
  for (double& v : neg.values()) v = -v;
  for (double& v : shifted.values()) v += 3.5;
  for (double r : correlation_profile(x, x).rho) EXPECT_NEAR(r, 1.0, 1e-12);
  for (double r : correlation_profile(x, neg).rho) EXPECT_NEAR(r, -1.0, 1e-12);
  for (double r : correlation_profile(x, shifted).rho) EXPECT_NEAR(r, 1.0, 1e-12);
}

TEST(CorrelationProfile, ConstantOutputIsUndefinedNotZero) {
  Rng rng(2);
  const Tensor x = normal_batch({40, 3}, rng);
  Tensor y = x;
  for (std::size_t i = 0; i < 40; ++i) y[i * 3 + 1] = 0.1;
  const CorrelationProfile p = correlation_profile(x, y);
  EXPECT_TRUE(p.defined[0]);
  EXPECT_FALSE(p.defined[1]);
  EXPECT_TRUE(std::isnan(p.rho[1]));
  EXPECT_FALSE(p.all_defined());
  EXPECT_THROW(correlation_profile(x, normal_batch({40, 2}, rng)), Error);
}

TEST(CorrelationProfile, PoolsTimestampsAndInstances) {
  // Feature 0 is mapped to x^3: positive but not perfect pooled correlation.
  Rng rng(3);
  const Tensor x = normal_batch({30, 2, 5}, rng);
  Tensor y = x;
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t t = 0; t < 5; ++t) y[(i * 2) * 5 + t] = std::pow(x[(i * 2) * 5 + t], 3);
  }
  const CorrelationProfile p = correlation_profile(x, y);
  EXPECT_GT(p.rho[0], 0.5);
  EXPECT_LT(p.rho[0], 0.99);
  EXPECT_NEAR(p.rho[1], 1.0, 1e-12);
}

TEST(ClosedForm, DiagonalExamples) {
  const ClosedFormResult a = closed_form_gating(with_moments({1.0}, {1.0}, 2.0));
  EXPECT_EQ(a.g[0], 0.0);
  const ClosedFormResult b = closed_form_gating(with_moments({1.0, 2.0}, {1.0, 0.0, 0.0, 1.0}, 1.0));
  EXPECT_EQ(b.g[0], 0.5);
  EXPECT_EQ(b.g[1], 0.875);
  EXPECT_FALSE(b.degenerate);
}

TEST(ClosedForm, MatchesGridSearchOnCorrelatedPair) {
  const ClosedFormInputs in = with_moments({1.0, 1.0}, {1.0, 0.9, 0.9, 1.0}, 0.5);
  const ClosedFormResult cf = closed_form_gating(in);
  double best = std::numeric_limits<double>::infinity(), g0 = 0, g1 = 0;
  for (int i = 0; i <= 1000; ++i) {
    for (int j = 0; j <= 1000; ++j) {
      const double a = i * 1e-3, b = j * 1e-3;
      const double v = simplified_loss(in, a, b);
      if (v < best) best = v, g0 = a, g1 = b;
    }
  }
  EXPECT_NEAR(cf.g[0], g0, 1e-3);
  EXPECT_NEAR(cf.g[1], g1, 1e-3);
  EXPECT_GT(cf.g[0], 0.0);
  EXPECT_LT(cf.g[0], 1.0);
}

TEST(ClosedForm, DiagonalUnitVarianceEqualsRemarkFormulaExactly) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.index(6);
    std::vector<double> beta(d), c(d * d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      beta[j] = rng.uniform(-3.0, 3.0);
      c[j * d + j] = 1.0;
    }
    const double lambda = rng.uniform(0.0, 5.0);
    const ClosedFormResult r = closed_form_gating(with_moments(beta, c, lambda));
    for (std::size_t j = 0; j < d; ++j) {
      EXPECT_EQ(r.g[j], std::clamp(1.0 - lambda / (2.0 * beta[j] * beta[j]), 0.0, 1.0));
    }
  }
  // The sparsity threshold lambda = 2 beta^2 lands on exactly zero.
  for (double b : {0.5, 1.0, 1.7, 3.0}) {
    EXPECT_EQ(closed_form_gating(with_moments({b}, {1.0}, 2.0 * b * b)).g[0], 0.0);
  }
}

TEST(ClosedForm, OrderedCoefficientsGiveOrderedScores) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double b1 = rng.uniform(0.1, 3.0), b2 = rng.uniform(0.1, 3.0);
    const ClosedFormResult r = closed_form_gating(with_moments({b1, -b2}, {1, 0, 0, 1}, rng.uniform(0.0, 4.0)));
    if (b1 < b2) {
      EXPECT_LE(r.g[0], r.g[1]);
    } else {
      EXPECT_GE(r.g[0], r.g[1]);
    }
  }
}

TEST(ClosedForm, OutputStaysInBoxForRandomMoments) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.index(5);
    const Tensor rows = normal_batch({3 * d, d}, rng);
    std::vector<double> beta(d);
    for (double& b : beta) b = rng.uniform(-2.0, 2.0);
    const ClosedFormResult r = closed_form_gating(closed_form_inputs(beta, rows, rng.uniform(0.0, 3.0)));
    for (double g : r.g) {
      EXPECT_GE(g, 0.0);
      EXPECT_LE(g, 1.0);
    }
  }
}

TEST(ClosedForm, DuplicatedFeaturesShareScores) {
  Rng rng(7);
  Tensor rows = normal_batch({500, 4}, rng);
  for (std::size_t i = 0; i < 500; ++i) rows[i * 4 + 2] = rows[i * 4 + 1];
  const ClosedFormResult r = closed_form_gating(closed_form_inputs(std::vector<double>{1.0, 0.7, 0.7, 1.5}, rows, 0.3));
  EXPECT_TRUE(r.degenerate);
  EXPECT_NEAR(r.g[1], r.g[2], 1e-6);
  for (double g : r.g) EXPECT_TRUE(g >= 0.0 && g <= 1.0);
}

TEST(ClosedForm, ZeroCoefficientIsFlaggedAndGated) {
  const ClosedFormResult r = closed_form_gating(with_moments({0.0, 1.0}, {1.0, 0.3, 0.3, 1.0}, 0.1));
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.g[0], 0.0);
}

TEST(ClosedForm, RejectsBadInputs) {
  EXPECT_THROW(closed_form_gating(with_moments({1.0, 1.0}, {1.0, 0.5, 0.2, 1.0}, 1.0)), Error);
  EXPECT_THROW(closed_form_gating(with_moments({1.0, 1.0}, {1.0, 0.0, 0.0, 1.0}, -1.0)), Error);
  EXPECT_THROW(closed_form_inputs(std::vector<double>{1.0}, Tensor::zeros({3, 2}), 1.0), Error);
}

TEST(WeakInvariance, Threshold) {
  const std::vector<double> alt{1.0, -1.0, 1.0, -1.0};
  EXPECT_DOUBLE_EQ(weak_invariance_lambda(1.0, alt), 1.0);
  EXPECT_EQ(weak_invariance_lambda(0.0, alt), 0.0);
  Rng rng(8);
  std::vector<double> z(10000);
  for (double& v : z) v = rng.normal();
  EXPECT_NEAR(weak_invariance_lambda(1.0, z), std::sqrt(2.0 / M_PI), 0.03);
  EXPECT_THROW(weak_invariance_lambda(1.0, std::vector<double>{0.0, 0.0}), Error);
  EXPECT_THROW(weak_invariance_lambda(-1.0, alt), Error);
}

TEST(Saliency, LinearModelReproducesAbsoluteCoefficients) {
  const std::vector<double> beta{0.5, -2.0, 0.0, 1.25};
  Rng rng(9);
  const auto s = saliency_scores(linear_model(beta), normal_batch({10, 4}, rng));
  for (std::size_t j = 0; j < beta.size(); ++j) EXPECT_EQ(s[j], std::abs(beta[j]));
}

TEST(Saliency, DeadInputScoresZero) {
  Rng rng(10);
  Model m = build_model(Architecture::mlp, OutputKind::bernoulli, ModelDims{3, 0}, rng);
  Tensor w = m.parameter("dense0.weight");
  for (std::size_t k = 0; k < w.extent(1); ++k) w[1 * w.extent(1) + k] = 0.0;
  m.set_parameter("dense0.weight", w);
  const auto s = saliency_scores(m, normal_batch({8, 3}, rng));
  EXPECT_EQ(s[1], 0.0);
  EXPECT_GT(s[0], 0.0);
}

TEST(Saliency, MlpMatchesFiniteDifferences) {
  Rng rng(11);
  const Model m = build_model(Architecture::mlp, OutputKind::bernoulli, ModelDims{4, 0}, rng);
  const Tensor x = normal_batch({6, 4}, rng);
  const auto s = saliency_scores(m, x);
  const double h = 1e-5;
  for (std::size_t j = 0; j < 4; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      Tensor up = row(x, i), down = row(x, i);
      up[j] += h;
      down[j] -= h;
      total += std::abs((predict(m, up) - predict(m, down)) / (2.0 * h));
    }
    EXPECT_NEAR(s[j], total / 6.0, 1e-3);
  }
}

TEST(Saliency, SequenceModelAveragesOverTimestamps) {
  Rng rng(12);
  const Model m = build_model(Architecture::seqconv, OutputKind::bernoulli, ModelDims{2, 6}, rng);
  const Tensor x = normal_batch({3, 2, 6}, rng);
  const Tensor g = input_gradients(m, x);
  const auto s = saliency_scores(m, x);
  double manual = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t t = 0; t < 6; ++t) manual += std::abs(g[(i * 2 + 1) * 6 + t]);
  }
  EXPECT_NEAR(s[1], manual / 18.0, 1e-15);
}

TEST(IntegratedGradients, LinearModelIsExact) {
  const std::vector<double> beta{0.5, -2.0, 1.5};
  Rng rng(13);
  const Tensor x = normal_batch({4, 3}, rng);
  for (std::size_t steps : {1u, 7u, 32u}) {
    const Tensor ig = integrated_gradients(linear_model(beta), x, steps);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(ig[i * 3 + j], beta[j] * x[i * 3 + j], 1e-14);
    }
  }
}

TEST(IntegratedGradients, CompletenessAndRefinement) {
  Rng rng(14);
  const Model m = build_model(Architecture::mlp, OutputKind::bernoulli, ModelDims{5, 0}, rng);
  const Tensor x = normal_batch({5, 5}, rng);
  const double f0 = predict(m, Tensor::zeros({5}));
  auto residual = [&](std::size_t steps) {
    const Tensor ig = integrated_gradients(m, x, steps);
    double worst = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) s += ig[i * 5 + j];
      worst = std::max(worst, std::abs(s - (predict(m, row(x, i)) - f0)));
    }
    return worst;
  };
  const double r32 = residual(32), r64 = residual(64), r128 = residual(128);
  EXPECT_LT(r128, 1e-3);
  EXPECT_LT(r64, r32);
  EXPECT_LT(r128, r64);
  EXPECT_THROW(integrated_gradients_scores(m, x, 16), Error);
  EXPECT_EQ(integrated_gradients_scores(m, x, 32).size(), 5u);
}

TEST(Spearman, ReferenceCases) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(spearman(a, std::vector<double>{2, 4, 8, 16, 32}).rho, 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, std::vector<double>{5, 4, 3, 2, 1}).rho, -1.0);
  const RankCorrelation r = spearman(a, std::vector<double>{1, 3, 2, 5, 4});
  EXPECT_NEAR(r.rho, 0.8, 1e-12);
  // t = 0.8 sqrt(3 / 0.36) with 3 degrees of freedom, two-sided.
  EXPECT_NEAR(r.p_value, 0.1040880, 1e-6);
  EXPECT_EQ(spearman(a, std::vector<double>{2, 4, 8, 16, 32}).p_value, 0.0);
}

TEST(Spearman, TiesUseAverageRanks) {
  const auto ranks = average_ranks(std::vector<double>{3.0, 1.0, 3.0, 2.0});
  EXPECT_EQ(ranks, (std::vector<double>{3.5, 1.0, 3.5, 2.0}));
  const RankCorrelation r = spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4});
  EXPECT_NEAR(r.rho, 0.9486832980505138, 1e-12);
}

TEST(Spearman, ConstantInputIsUndefined) {
  const RankCorrelation r = spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3});
  EXPECT_FALSE(r.defined);
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
  EXPECT_THROW(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), Error);
}

TEST(KolmogorovSmirnov, Statistics) {
  const std::vector<double> a{0.1, 0.5, 0.9, 1.3};
  EXPECT_EQ(ks_two_sample(a, a).statistic, 0.0);
  EXPECT_EQ(ks_two_sample(a, a).p_value, 1.0);
  EXPECT_EQ(ks_two_sample(a, std::vector<double>{5.0, 6.0}).statistic, 1.0);
  Rng rng(15);
  std::vector<double> x(1000), y(1000);
  for (double& v : x) v = rng.normal();
  for (double& v : y) v = rng.normal(1.0, 1.0);
  const KsResult r = ks_two_sample(x, y);
  // max_x Phi(x) - Phi(x - 1) = 2 Phi(1/2) - 1.
  EXPECT_NEAR(r.statistic, std::erf(0.5 / std::sqrt(2.0)), 0.05);
  EXPECT_LT(r.p_value, 1e-10);
  EXPECT_THROW(ks_two_sample(a, std::vector<double>{}), Error);
}

TEST(KolmogorovSmirnov, SurvivalFunctionValues) {
  EXPECT_NEAR(kolmogorov_survival(1.0), 0.26999967167735456, 1e-12);
  EXPECT_NEAR(kolmogorov_survival(0.5), 0.9639452436648751, 1e-12);
  EXPECT_NEAR(kolmogorov_survival(1.3580986), 0.05, 1e-6);
  EXPECT_NEAR(kolmogorov_survival(1.18 - 1e-12), kolmogorov_survival(1.18), 1e-12);
  EXPECT_EQ(kolmogorov_survival(0.0), 1.0);
  double prev = 1.0;
  for (double x = 0.05; x < 3.0; x += 0.05) {
    const double q = kolmogorov_survival(x);
    EXPECT_LE(q, prev);
    prev = q;
  }
}

namespace {

struct SmallRun {
  Dataset data;
  Model model;
  TransformSpec spec;
  MindConfig config;
  RestartSummary summary;
};

SmallRun small_run(std::size_t hidden_last = 4) {
  Rng rng(16);
  SmallRun s;
  s.data = gaussian_dataset(60, {4}, rng);
  s.model = build_model(Architecture::mlp, OutputKind::bernoulli, ModelDims{4, 0, {6, hidden_last}}, rng);
  s.config.lambda = 0.3;
  s.config.restarts = 2;
  s.config.top_k = 2;
  s.config.max_epochs = 10;
  s.summary = multi_restart(s.model, s.spec, s.data, s.config);
  return s;
}

}  // namespace

TEST(Report, JsonRoundTripAndCsv) {
  const SmallRun s = small_run();
  const MindReport r = make_report(s.model, s.data, s.spec, s.config, s.summary);
  EXPECT_EQ(r.scores.size(), 4u);
  EXPECT_EQ(r.rho.size(), 4u);
  EXPECT_EQ(r.model_fingerprint, s.model.fingerprint());
  const MindReport back = report_from_json_text(report_to_json_text(r));
  EXPECT_EQ(back.scores, r.scores);
  EXPECT_EQ(back.score_std, r.score_std);
  EXPECT_EQ(back.feature_names, r.feature_names);
  EXPECT_EQ(back.model_fingerprint, r.model_fingerprint);
  EXPECT_EQ(back.selected, r.selected);
  for (std::size_t j = 0; j < 4; ++j) {
    if (r.rho_defined[j]) {
      EXPECT_EQ(back.rho[j], r.rho[j]);
    }
  }
  const std::string csv = plot_csv(r, {{"saliency", {1, 2, 3, 4}}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "feature,score,score_std,rho,saliency");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_THROW(plot_csv(r, {{"bad", {1, 2}}}), Error);
  EXPECT_THROW(report_from_json_text("{\"format\": \"other\"}"), Error);
}

TEST(Report, BasisGatingHasChannelScores) {
  Rng rng(17);
  const Dataset data = gaussian_dataset(40, {2, 8}, rng);
  const Model m = build_model(Architecture::seqconv, OutputKind::bernoulli, ModelDims{2, 8}, rng);
  TransformSpec spec;
  spec.kind = TransformKind::basis;
  spec.basis = BasisKind::pulse;
  MindConfig c;
  c.restarts = 1;
  c.top_k = 1;
  c.max_epochs = 3;
  const RestartSummary s = multi_restart(m, spec, data, c);
  const MindReport r = make_report(m, data, spec, c, s);
  EXPECT_EQ(r.channels, 4u);
  EXPECT_EQ(r.channel_scores.size(), 8u);
  EXPECT_NEAR(r.scores[0], (r.channel_scores[0] + r.channel_scores[1] + r.channel_scores[2] + r.channel_scores[3]) / 4,
              1e-15);
}

TEST(Sanity, RejectsReferenceFromAnotherModel) {
  const SmallRun s = small_run();
  const MindReport r = make_report(s.model, s.data, s.spec, s.config, s.summary);
  Rng rng(18);
  const Model other = shuffle_layer(s.model, 0, rng);
  SanityConfig sc;
  sc.mind = s.config;
  EXPECT_THROW(sanity_check(other, s.data, sc, r), Error);
}

TEST(Sanity, UnchangedAndNoOpShuffledModelsMatchBaseline) {
  // hidden {6, 1} makes the head a 1x1 layer whose shuffle is a no-op.
  const SmallRun s = small_run(1);
  const MindReport r = make_report(s.model, s.data, s.spec, s.config, s.summary);
  SanityConfig sc;
  sc.mind = s.config;
  sc.instances = 3;
  sc.restarts = 2;
  sc.threads = 2;
  const std::size_t head = s.model.layers().size() - 1;
  ASSERT_EQ(s.model.parameter(s.model.layers()[head].weight).size(), 1u);
  sc.layers = {head};
  const SanityReport rep = sanity_check(s.model, s.data, sc, r);
  ASSERT_EQ(rep.layers.size(), 1u);
  EXPECT_EQ(rep.layers[0].correlations, rep.baseline.correlations);
  EXPECT_EQ(rep.layers[0].label, "head");
  const SanityRow same = score_correlations(std::vector<Model>(3, s.model), s.data, sc, r.scores, "copies");
  EXPECT_EQ(same.correlations, rep.baseline.correlations);
  EXPECT_EQ(same.mean, rep.baseline.mean);
}
