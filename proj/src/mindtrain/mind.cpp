#include "mind/mindtrain/mind.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mind/diffcore/error.hpp"
#include "mind/models/optimizer.hpp"

namespace mind {

std::string_view to_string(SimilarityKind kind) noexcept {
  switch (kind) {
    case SimilarityKind::cosine: return "cosine";
    case SimilarityKind::inner_product: return "inner_product";
    case SimilarityKind::l1_gate_weights: return "l1_gate_weights";
  }
  return "?";
}

std::string_view to_string(DistanceKind kind) noexcept {
  return kind == DistanceKind::wasserstein1 ? "wasserstein1" : "squared";
}

std::string_view to_string(OutputDistribution dist) noexcept {
  switch (dist) {
    case OutputDistribution::bernoulli: return "bernoulli";
    case OutputDistribution::point_mass: return "point_mass";
    case OutputDistribution::gaussian_fixed_variance: return "gaussian_fixed_variance";
    case OutputDistribution::gaussian_learned_variance: return "gaussian_learned_variance";
    case OutputDistribution::categorical: return "categorical";
  }
  return "?";
}

SimilarityKind parse_similarity_kind(std::string_view text) {
  for (auto k : {SimilarityKind::cosine, SimilarityKind::inner_product, SimilarityKind::l1_gate_weights}) {
    if (text == to_string(k)) return k;
  }
  fail(ErrorCode::parse, "unknown similarity '" + std::string(text) + "'");
}

DistanceKind parse_distance_kind(std::string_view text) {
  if (text == "wasserstein1") return DistanceKind::wasserstein1;
  if (text == "squared") return DistanceKind::squared;
  fail(ErrorCode::parse, "unknown distance '" + std::string(text) + "'");
}

OutputDistribution parse_output_distribution(std::string_view text) {
  for (auto d : {OutputDistribution::bernoulli, OutputDistribution::point_mass,
                 OutputDistribution::gaussian_fixed_variance, OutputDistribution::gaussian_learned_variance,
                 OutputDistribution::categorical}) {
    if (text == to_string(d)) return d;
  }
  fail(ErrorCode::parse, "unknown output distribution '" + std::string(text) + "'");
}

OutputDistribution output_distribution(const Model& model) noexcept {
  return model.output_kind() == OutputKind::bernoulli ? OutputDistribution::bernoulli
                                                      : OutputDistribution::point_mass;
}

double w1_reduced(OutputDistribution dist, double f, double f_prime) {
  switch (dist) {
    case OutputDistribution::bernoulli:
      require(f >= 0.0 && f <= 1.0 && f_prime >= 0.0 && f_prime <= 1.0, ErrorCode::invalid_argument,
              "bernoulli probabilities must lie in [0, 1]");
      [[fallthrough]];
    case OutputDistribution::point_mass:
    case OutputDistribution::gaussian_fixed_variance:
      require(std::isfinite(f) && std::isfinite(f_prime), ErrorCode::non_finite, "w1_reduced: non-finite input");
      return std::abs(f - f_prime);
    case OutputDistribution::gaussian_learned_variance:
    case OutputDistribution::categorical:
      break;
  }
  fail(ErrorCode::precondition, "W1 does not reduce to |f - f'| for " + std::string(to_string(dist)) + " outputs");
}

namespace {

Tensor as_batch(const Model& model, const Tensor& x) {
  if (x.shape() == model.input_shape()) {
    Shape s = x.shape();
    s.insert(s.begin(), 1);
    return x.reshaped(s);
  }
  return x;
}

std::size_t default_batch(std::size_t configured, std::size_t n) {
  if (configured > 0) return std::min(configured, n);
  return std::min<std::size_t>(100, std::max<std::size_t>(1, n / 4));
}

Tensor row_tensor(const std::vector<double>& v) { return Tensor({v.size()}, v); }

double mean_row_cosine(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.extent(0), m = a.size() / n;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor ra({m}, std::vector<double>(a.values().begin() + i * m, a.values().begin() + (i + 1) * m));
    Tensor rb({m}, std::vector<double>(b.values().begin() + i * m, b.values().begin() + (i + 1) * m));
    total += cosine_similarity(ra, rb);
  }
  return total / static_cast<double>(n);
}

}  // namespace

double w1_reduced(const Model& model, const Tensor& x, const Tensor& x_prime) {
  require(x.shape() == x_prime.shape(), ErrorCode::shape_mismatch,
          "w1_reduced: " + to_string(x.shape()) + " vs " + to_string(x_prime.shape()));
  const OutputDistribution dist = output_distribution(model);
  const auto a = predict_batch(model, as_batch(model, x));
  const auto b = predict_batch(model, as_batch(model, x_prime));
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += w1_reduced(dist, a[i], b[i]);
  return total / static_cast<double>(a.size());
}

void MindConfig::validate() const {
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::invalid_argument, "lambda must be finite and >= 0");
  require(w1_limit > 0.0 && w1_limit <= 1.0 && cosine_limit > 0.0 && cosine_limit <= 1.0,
          ErrorCode::invalid_argument, "limits must lie in (0, 1]");
  require(restarts > 0 && top_k > 0 && top_k <= restarts, ErrorCode::invalid_argument,
          "need 0 < top_k <= restarts (got top_k=" + std::to_string(top_k) + ", restarts=" +
              std::to_string(restarts) + ")");
  require(learning_rate > 0.0 && lr_floor > 0.0, ErrorCode::invalid_argument,
          "learning rate and its floor must be positive");
  require(max_epochs > 0, ErrorCode::invalid_argument, "max_epochs must be positive");
  require(weight_decay >= 0.0, ErrorCode::invalid_argument, "weight decay must be nonnegative");
}

struct MindObjective::Impl {
  Transform transform;
  Graph graph;
  Bindings base;
  std::size_t rows = 0;
  NodeRef distance, similarity, loss;
  std::vector<std::string> leaves;
};

MindObjective::MindObjective(const Model& model, const Transform& transform, const MindConfig& config,
                             std::size_t rows)
    : impl_(std::make_unique<Impl>()) {
  require(transform.input_shape() == model.input_shape(), ErrorCode::shape_mismatch,
          "transform input " + to_string(transform.input_shape()) + " does not match model input " +
              to_string(model.input_shape()));
  require(rows > 0, ErrorCode::invalid_argument, "objective needs a nonempty batch");
  Impl& m = *impl_;
  m.transform = transform;
  m.rows = rows;
  Graph& g = m.graph;
  Shape s = model.input_shape();
  s.insert(s.begin(), rows);
  const NodeRef x = g.leaf("x", s);
  const NodeRef ref = g.leaf("ref", {rows});
  TransformGraph tg(g, m.transform, "");
  const NodeRef tx = tg.apply(x);
  ModelGraph mg(g, model, NormMode::frozen);
  const NodeRef diff = g.sub(ref, mg.predict(tx));
  m.distance = g.mean(config.distance == DistanceKind::wasserstein1 ? g.abs(diff) : g.mul(diff, diff));
  switch (config.similarity) {
    case SimilarityKind::cosine: {
      const NodeRef c = g.row_cosine(x, tx);
      m.similarity = g.mean(config.clip_cosine ? g.relu(c) : c);
      break;
    }
    case SimilarityKind::inner_product:
      m.similarity = g.mean(g.row_sum(g.mul(x, tx)));
      break;
    case SimilarityKind::l1_gate_weights:
      m.similarity = tg.weight_l1();
      break;
  }
  m.loss = g.add(m.distance, g.scale(m.similarity, config.lambda));
  g.set_output(m.loss);
  mg.bind(m.base);
  m.leaves = tg.leaf_names();
}

MindObjective::~MindObjective() = default;
MindObjective::MindObjective(MindObjective&&) noexcept = default;
MindObjective& MindObjective::operator=(MindObjective&&) noexcept = default;

std::size_t MindObjective::rows() const noexcept { return impl_->rows; }

namespace {

void bind_step(Bindings& b, const std::map<std::string, Tensor>& params, const Tensor& x, const Tensor& ref) {
  for (const auto& [name, t] : params) b.insert_or_assign(name, t);
  b.insert_or_assign("x", x);
  b.insert_or_assign("ref", ref);
}

}  // namespace

MindTerms MindObjective::terms(const std::map<std::string, Tensor>& params, const Tensor& x,
                               const Tensor& reference) {
  Impl& m = *impl_;
  bind_step(m.base, params, x, reference);
  const std::vector<NodeRef> nodes{m.loss, m.distance, m.similarity};
  const auto v = evaluate(m.graph, m.base, nodes);
  return {v[0].item(), v[1].item(), v[2].item()};
}

ValueAndGradient MindObjective::value_and_gradient(const std::map<std::string, Tensor>& params,
                                                   const Tensor& x, const Tensor& reference) {
  Impl& m = *impl_;
  bind_step(m.base, params, x, reference);
  return mind::value_and_gradient(m.graph, m.base, m.leaves);
}

MindTerms mind_terms(const Model& model, const Transform& transform, const Tensor& batch,
                     const MindConfig& config) {
  const Tensor x = as_batch(model, batch);
  MindObjective objective(model, transform, config, x.extent(0));
  return objective.terms(transform.parameters(), x, row_tensor(predict_batch(model, x)));
}

double mind_loss(const Model& model, const Transform& transform, const Tensor& batch, const MindConfig& config) {
  return mind_terms(model, transform, batch, config).loss;
}

MindRun train_transform(const Model& model, const TransformSpec& spec, const Dataset& data,
                        const MindConfig& config, Rng& rng, const StepObserver& observer) {
  config.validate();
  data.validate();
  require(data.instance_shape() == model.input_shape(), ErrorCode::shape_mismatch,
          "dataset instances " + to_string(data.instance_shape()) + " do not match model input " +
              to_string(model.input_shape()));
  const auto train_rows = data.indices(Split::train);
  const auto val_rows = data.indices(Split::validation);
  require(!train_rows.empty(), ErrorCode::precondition, "training split is empty");
  require(!val_rows.empty(), ErrorCode::precondition, "validation split is empty");

  Rng init_rng = rng.substream("init");
  Rng order_rng = rng.substream("order");
  Transform t = make_transform(spec, model.input_shape(), init_rng);
  t.clamp();

  // Clean predictions never change, so compute them once.
  std::vector<double> reference(data.size(), 0.0);
  {
    const auto ref_train = predict_batch(model, gather_instances(data, train_rows));
    for (std::size_t i = 0; i < train_rows.size(); ++i) reference[train_rows[i]] = ref_train[i];
  }
  const Tensor val_x = gather_instances(data, val_rows);
  const Tensor val_ref = row_tensor(predict_batch(model, val_x));

  const std::size_t n = train_rows.size();
  const std::size_t batch = default_batch(config.batch_size, n);
  std::map<std::size_t, MindObjective> objectives;
  auto objective_for = [&](std::size_t rows) -> MindObjective& {
    auto it = objectives.find(rows);
    if (it == objectives.end()) it = objectives.emplace(rows, MindObjective(model, t, config, rows)).first;
    return it->second;
  };
  MindObjective val_objective(model, t, config, val_rows.size());

  std::map<std::string, double> decay;
  for (const auto& [name, role] : t.roles()) {
    if (role != ParamRole::free && config.weight_decay > 0.0) decay.emplace(name, config.weight_decay);
  }

  Adam adam;
  PlateauSchedule schedule(config.learning_rate, config.patience, config.lr_floor);
  MindRun result;
  result.transform = t;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = train_rows;
  std::size_t steps = 0;
  auto& diag = result.diagnostics;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      const std::span<const std::size_t> rows(order.data() + start, count);
      std::vector<double> ref(count);
      for (std::size_t i = 0; i < count; ++i) ref[i] = reference[rows[i]];
      const ValueAndGradient vg =
          objective_for(count).value_and_gradient(t.parameters(), gather_instances(data, rows), row_tensor(ref));
      require(std::isfinite(vg.value), ErrorCode::non_finite,
              "MIND loss became non-finite at epoch " + std::to_string(epoch) + " (lambda " +
                  std::to_string(config.lambda) + ", learning rate " + std::to_string(schedule.lr()) + ")");
      adam.step(t.parameters(), vg.gradients, schedule.lr(), decay);
      t.clamp();
      ++steps;
      if (observer) observer(t, steps);
      total += vg.value * static_cast<double>(count);
    }
    const double val_loss = val_objective.terms(t.parameters(), val_x, val_ref).loss;
    require(std::isfinite(val_loss), ErrorCode::non_finite,
            "MIND validation loss became non-finite at epoch " + std::to_string(epoch));
    diag.loss_curve.push_back(total / static_cast<double>(n));
    diag.validation_curve.push_back(val_loss);
    diag.epochs = epoch + 1;
    if (val_loss < best) {
      best = val_loss;
      result.transform = t;
      diag.best_epoch = epoch;
    }
    schedule.observe(val_loss);
    if (schedule.finished()) break;
  }

  const Tensor tx = result.transform.apply(val_x);
  const auto pred = predict_batch(model, tx);
  double w1 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) w1 += std::abs(val_ref[i] - pred[i]);
  diag.w1_term = w1 / static_cast<double>(pred.size());
  diag.cosine_term = mean_row_cosine(val_x, tx);
  const MindTerms final_terms = val_objective.terms(result.transform.parameters(), val_x, val_ref);
  diag.similarity_term = final_terms.similarity;
  diag.validation_loss = final_terms.loss;
  diag.seed = rng.seed();
  return result;
}

std::vector<double> lambda_grid() {
  std::vector<double> grid;
  for (int k = 0; k < 20; ++k) grid.push_back(1e-4 * std::ldexp(1.0, k));
  return grid;
}

LambdaSearch tune_lambda(const Model& model, const TransformSpec& spec, const Dataset& data,
                         const MindConfig& config) {
  config.validate();
  LambdaSearch search;
  double closest = std::numeric_limits<double>::infinity();
  for (double lambda : lambda_grid()) {
    MindConfig c = config;
    c.lambda = lambda;
    Rng rng = Rng(config.seed).substream("tune");
    MindRun run = train_transform(model, spec, data, c, rng);
    const auto& d = run.diagnostics;
    const bool ok = d.w1_term <= config.w1_limit && d.cosine_term <= config.cosine_limit;
    search.trials.push_back({lambda, d.w1_term, d.cosine_term, ok});
    const double ratio = std::max(d.w1_term / config.w1_limit, d.cosine_term / config.cosine_limit);
    if (ok) {
      search.lambda = lambda;
      search.feasible = true;
      search.run = std::move(run);
      return search;
    }
    if (ratio < closest) {
      closest = ratio;
      search.lambda = lambda;
      search.run = std::move(run);
    }
  }
  return search;
}

}  // namespace mind
