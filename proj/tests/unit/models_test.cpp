#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mind/diffcore/error.hpp"
#include "mind/models/dataset.hpp"
#include "mind/models/model.hpp"
#include "mind/models/optimizer.hpp"
#include "mind/models/train.hpp"

using namespace mind;

namespace {

Split split_for(std::size_t i) {
  switch (i % 5) {
    case 3: return Split::validation;
    case 4: return Split::test;
    default: return Split::train;
  }
}

// Two classes whose feature-0 means sit `gap` standard deviations apart.
Dataset blobs(std::size_t n, Shape shape, double gap, Rng& rng) {
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = static_cast<double>(i % 2);
    Tensor x = Tensor::zeros(shape);
    for (double& v : x.values()) v = rng.normal();
    const std::size_t t = shape.size() == 2 ? shape[1] : 1;
    for (std::size_t k = 0; k < t; ++k) x[k] += (y - 0.5) * gap;
    data.instances.push_back(std::move(x));
    data.labels.push_back(y);
    data.splits.push_back(split_for(i));
  }
  return data;
}

double accuracy(const Model& m, const Dataset& data, Split split) {
  const auto rows = data.indices(split);
  const auto p = predict_batch(m, gather_instances(data, rows));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    hits += (p[i] > 0.5) == (data.labels[rows[i]] > 0.5);
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

std::vector<double> sorted_values(const Tensor& t) {
  std::vector<double> v(t.values().begin(), t.values().end());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(Models, LinearWithExplicitBeta) {
  Rng rng(1);
  Model m = build_model(Architecture::linear, OutputKind::regression, {3}, rng);
  m.set_parameter("beta", Tensor::vector({1, 2, 3}));
  EXPECT_DOUBLE_EQ(predict(m, Tensor::vector({1, 1, 1})), 6.0);
  EXPECT_EQ(m.parameters().size(), 1u);
}

TEST(Models, MlpWithZeroHeadIsConstantHalf) {
  Rng rng(2);
  Model m = build_model(Architecture::mlp, OutputKind::bernoulli, {5}, rng);
  m.set_parameter("head.weight", Tensor::zeros({16}));
  Rng data_rng(3);
  for (int i = 0; i < 10; ++i) {
    Tensor x = Tensor::zeros({5});
    for (double& v : x.values()) v = data_rng.normal(0, 10);
    EXPECT_EQ(predict(m, x), 0.5);
  }
}

TEST(Models, SeqconvForwardIsFiniteProbability) {
  Rng rng(4);
  const Model m = build_model(Architecture::seqconv, OutputKind::bernoulli, {4, 16}, rng);
  EXPECT_EQ(m.layers().size(), 4u);
  Tensor x = Tensor::zeros({7, 4, 16});
  for (double& v : x.values()) v = rng.normal();
  for (double p : predict_batch(m, x)) {
    EXPECT_TRUE(std::isfinite(p));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Models, ClassifierOutputStaysInUnitInterval) {
  Rng rng(5);
  const Model m = build_model(Architecture::mlp, OutputKind::bernoulli, {3, 4}, rng);
  Tensor x = Tensor::zeros({200, 3, 4});
  for (double& v : x.values()) v = rng.normal(0, 1e3);
  for (double p : predict_batch(m, x)) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Models, InvalidDimsAndShapes) {
  Rng rng(6);
  auto code = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::numerical;
  };
  EXPECT_EQ(code([&] { build_model(Architecture::linear, OutputKind::regression, {0}, rng); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(code([&] { build_model(Architecture::seqconv, OutputKind::bernoulli, {3, 0}, rng); }),
            ErrorCode::invalid_argument);
  const Model m = build_model(Architecture::linear, OutputKind::regression, {3}, rng);
  EXPECT_EQ(code([&] { predict(m, Tensor::vector({1, 2})); }), ErrorCode::shape_mismatch);
  EXPECT_EQ(code([&] { shuffle_layer(m, 1, rng); }), ErrorCode::out_of_range);
}

TEST(Train, LinearFitsExactlyLinearData) {
  Rng rng(7);
  const std::vector<double> beta{0.5, -1.5, 2.0, 0.0};
  Dataset data;
  for (std::size_t i = 0; i < 400; ++i) {
    Tensor x = Tensor::zeros({4});
    double y = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      x[j] = rng.normal();
      y += beta[j] * x[j];
    }
    data.instances.push_back(x);
    data.labels.push_back(y);
    data.splits.push_back(split_for(i));
  }
  const Model init = build_model(Architecture::linear, OutputKind::regression, {4}, rng);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  const TrainResult r = train(init, data, cfg);
  const auto rows = data.indices(Split::train);
  const double mse = batch_loss(r.model, gather_instances(data, rows), gather_labels(data, rows));
  EXPECT_LT(mse, 1e-6);
}

TEST(Train, ConstantInputsConvergeToBaseRate) {
  Rng rng(8);
  Dataset data;
  for (std::size_t i = 0; i < 500; ++i) {
    data.instances.push_back(Tensor::zeros({2}));
    data.labels.push_back(rng.bernoulli(0.3) ? 1.0 : 0.0);
    data.splits.push_back(split_for(i));
  }
  const Model init = build_model(Architecture::mlp, OutputKind::bernoulli, {2, 0, {4}}, rng);
  const TrainResult r = train(init, data, TrainConfig{});
  const auto val = data.indices(Split::validation);
  double val_rate = 0.0;
  for (std::size_t i : val) val_rate += data.labels[i];
  val_rate /= static_cast<double>(val.size());
  // The best-validation checkpoint is the constant that minimizes validation
  // cross-entropy, i.e. the validation base rate.
  EXPECT_NEAR(predict(r.model, Tensor::zeros({2})), val_rate, 0.02);
}

TEST(Train, SeparableBlobsAreLearned) {
  Rng rng(9);
  const Dataset data = blobs(600, {2}, 4.0, rng);
  const Model init = build_model(Architecture::mlp, OutputKind::bernoulli, {2}, rng);
  const TrainResult r = train(init, data, TrainConfig{});
  EXPECT_GT(accuracy(r.model, data, Split::validation), 0.95);
}

TEST(Train, FixedSeedReproducesHistory) {
  Rng rng(10);
  const Dataset data = blobs(200, {3, 8}, 1.0, rng);
  const Model init = build_model(Architecture::seqconv, OutputKind::bernoulli, {3, 8}, rng);
  TrainConfig cfg;
  cfg.max_epochs = 6;
  cfg.seed = 77;
  const TrainResult a = train(init, data, cfg);
  const TrainResult b = train(init, data, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].validation_loss, b.history[i].validation_loss);
  }
  EXPECT_EQ(a.model, b.model);
}

TEST(Train, SelectedCheckpointsHaveNonIncreasingValidationLoss) {
  Rng rng(11);
  const Dataset data = blobs(300, {2}, 2.0, rng);
  const Model init = build_model(Architecture::mlp, OutputKind::bernoulli, {2}, rng);
  TrainConfig cfg;
  cfg.max_epochs = 60;
  const TrainResult r = train(init, data, cfg);
  double best = INFINITY;
  for (std::size_t i = 0; i <= r.best_epoch; ++i) best = std::min(best, r.history[i].validation_loss);
  EXPECT_EQ(best, r.history[r.best_epoch].validation_loss);
  for (const auto& h : r.history) EXPECT_GE(h.validation_loss, best);
}

TEST(Train, NanInputAbortsWithDiagnostic) {
  Rng rng(12);
  Dataset data = blobs(40, {2}, 2.0, rng);
  Model init = build_model(Architecture::mlp, OutputKind::bernoulli, {2}, rng);
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.max_epochs = 50;
  try {
    train(init, data, cfg);
    FAIL() << "expected a non-finite loss";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_finite);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Adversarial, ZeroRadiusMatchesRegularTraining) {
  Rng rng(13);
  const Dataset data = blobs(120, {3, 8}, 1.5, rng);
  const Model init = build_model(Architecture::seqconv, OutputKind::bernoulli, {3, 8}, rng);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.seed = 5;
  const TrainResult plain = train(init, data, cfg);
  cfg.adversarial = true;
  cfg.pgd.epsilon = 0.0;
  const TrainResult adv = train_adversarial(init, data, cfg);
  EXPECT_EQ(plain.model, adv.model);
  ASSERT_EQ(plain.history.size(), adv.history.size());
  for (std::size_t i = 0; i < plain.history.size(); ++i) {
    EXPECT_EQ(plain.history[i].train_loss, adv.history[i].train_loss);
  }
}

TEST(Adversarial, PerturbationStaysInsideBall) {
  Rng rng(14);
  const Dataset data = blobs(32, {3, 8}, 1.0, rng);
  const Model m = build_model(Architecture::seqconv, OutputKind::bernoulli, {3, 8}, rng);
  std::vector<std::size_t> rows(32);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Tensor x = gather_instances(data, rows);
  for (double eps : {0.0, 0.01, 0.1, 0.7}) {
    PgdConfig pgd;
    pgd.epsilon = eps;
    pgd.step = eps * 0.6;  // large steps so the projection actually binds
    pgd.iterations = 7;
    std::size_t calls = 0;
    const Tensor adv = pgd_perturb(m, x, gather_labels(data, rows), pgd, NormMode::batch,
                                   [&](const Tensor& delta) {
                                     ++calls;
                                     for (double v : delta.values()) ASSERT_LE(std::abs(v), eps);
                                   });
    EXPECT_EQ(calls, 7u);
    EXPECT_LE(max_abs_difference(adv, x), eps + 1e-15);
  }
}

TEST(Adversarial, PerturbationIncreasesLoss) {
  Rng rng(15);
  const Dataset data = blobs(64, {2}, 2.0, rng);
  const Model init = build_model(Architecture::mlp, OutputKind::bernoulli, {2}, rng);
  const Model m = train(init, data, TrainConfig{}).model;
  std::vector<std::size_t> rows(64);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Tensor x = gather_instances(data, rows);
  const auto y = gather_labels(data, rows);
  PgdConfig pgd;
  pgd.epsilon = 0.3;
  const Tensor adv = pgd_perturb(m, x, y, pgd, NormMode::frozen);
  EXPECT_GT(batch_loss(m, adv, y), batch_loss(m, x, y));
}

TEST(Adversarial, CleanAccuracyCloseToRegular) {
  Rng rng(16);
  const Dataset data = blobs(400, {4, 16}, 1.0, rng);
  const Model init = build_model(Architecture::seqconv, OutputKind::bernoulli, {4, 16}, rng);
  TrainConfig cfg;
  cfg.max_epochs = 40;
  const double regular = accuracy(train(init, data, cfg).model, data, Split::test);
  cfg.adversarial = true;
  const double robust = accuracy(train_adversarial(init, data, cfg).model, data, Split::test);
  EXPECT_GT(regular, 0.9);
  EXPECT_LE(std::abs(regular - robust), 0.05);
}

TEST(Shuffle, PreservesMultisetAndLeavesOtherLayers) {
  Rng rng(17);
  const Model m = build_model(Architecture::seqconv, OutputKind::bernoulli, {4, 16}, rng);
  const Model before = m;
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    Rng srng(100 + l);
    const Model s = shuffle_layer(m, l, srng);
    EXPECT_EQ(m, before);
    EXPECT_EQ(s.parameter_count(), m.parameter_count());
    for (const auto& info : m.layers()) {
      const Tensor& a = m.parameter(info.weight);
      const Tensor& b = s.parameter(info.weight);
      if (info.name == m.layers()[l].name) {
        EXPECT_EQ(sorted_values(a), sorted_values(b));
        EXPECT_NE(a, b);
      } else {
        EXPECT_EQ(a, b);
      }
    }
    EXPECT_EQ(s.parameter("head.bias"), m.parameter("head.bias"));
    EXPECT_EQ(s.buffers(), m.buffers());
  }
}

TEST(Shuffle, SingleElementLayerIsIdentity) {
  Rng rng(18);
  const Model m = build_model(Architecture::linear, OutputKind::regression, {1}, rng);
  EXPECT_EQ(shuffle_layer(m, 0, rng), m);
}

TEST(Shuffle, SeqconvHeadChangesMostPredictions) {
  Rng rng(19);
  const Model m = build_model(Architecture::seqconv, OutputKind::bernoulli, {4, 16}, rng);
  Tensor x = Tensor::zeros({200, 4, 16});
  for (double& v : x.values()) v = rng.normal();
  const Model s = shuffle_layer(m, 3, rng);
  const auto a = predict_batch(m, x);
  const auto b = predict_batch(s, x);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < a.size(); ++i) changed += std::abs(a[i] - b[i]) > 1e-12;
  EXPECT_GE(changed, 180u);
}

TEST(Checkpoint, JsonRoundTripIsBitExact) {
  Rng rng(20);
  Model m = build_model(Architecture::seqconv, OutputKind::bernoulli, {3, 8}, rng);
  Tensor x = Tensor::zeros({50, 3, 8});
  for (double& v : x.values()) v = rng.normal();
  recalibrate_norm(m, x);
  const Model back = model_from_json_text(model_to_json_text(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  EXPECT_THROW(model_from_json_text("{\"format\": \"other\"}"), Error);
}

TEST(Norm, FrozenStatisticsReproduceFullBatchForward) {
  Rng rng(21);
  Model m = build_model(Architecture::seqconv, OutputKind::regression, {3, 8}, rng);
  Tensor x = Tensor::zeros({64, 3, 8});
  for (double& v : x.values()) v = rng.normal(1.0, 2.0);
  recalibrate_norm(m, x);
  Graph g;
  ModelGraph mg(g, m, NormMode::batch);
  g.set_output(mg.predict(g.leaf("x", x.shape())));
  Bindings b{{"x", x}};
  mg.bind(b);
  const Tensor batch_mode = evaluate(g, b);
  const auto frozen = predict_batch(m, x);
  for (std::size_t i = 0; i < frozen.size(); ++i) EXPECT_NEAR(frozen[i], batch_mode[i], 1e-10);
}

TEST(Dataset, NormalizationUsesTrainingSplitOnly) {
  Rng rng(22);
  Dataset data;
  for (std::size_t i = 0; i < 100; ++i) {
    Tensor x = Tensor::zeros({2, 3});
    for (double& v : x.values()) v = rng.normal(5.0, 3.0);
    if (split_for(i) != Split::train) x[0] += 100.0;
    data.instances.push_back(x);
    data.labels.push_back(0.0);
    data.splits.push_back(split_for(i));
  }
  normalize_features(data);
  const FeatureStats s = feature_statistics(data, Split::train);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(s.mean[j], 0.0, 1e-12);
    EXPECT_NEAR(s.stddev[j], 1.0, 1e-12);
  }
}

TEST(Optimizer, PlateauHalvesAfterPatience) {
  PlateauSchedule s(1.0, 2, 0.1);
  EXPECT_TRUE(s.observe(1.0));
  EXPECT_FALSE(s.observe(1.0));
  EXPECT_FALSE(s.observe(0.99995));  // below the relative threshold
  EXPECT_EQ(s.lr(), 1.0);
  s.observe(1.0);
  EXPECT_EQ(s.lr(), 0.5);
  EXPECT_TRUE(s.observe(0.5));
  EXPECT_FALSE(s.finished());
}
