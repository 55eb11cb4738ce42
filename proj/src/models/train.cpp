#include "mind/models/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "mind/diffcore/error.hpp"
#include "mind/models/optimizer.hpp"

namespace mind {

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && lr_floor > 0.0, ErrorCode::invalid_argument,
          "learning rate and its floor must be positive");
  require(max_epochs > 0, ErrorCode::invalid_argument, "max_epochs must be positive");
  require(pgd.epsilon >= 0.0 && std::isfinite(pgd.epsilon), ErrorCode::invalid_argument,
          "PGD epsilon must be a finite nonnegative number");
  require(pgd.step >= 0.0, ErrorCode::invalid_argument, "PGD step must be nonnegative");
}

namespace {

constexpr const char* kPrefix = "model/";

struct LossGraph {
  Graph graph;
  std::vector<std::string> parameters;
};

std::unique_ptr<LossGraph> make_loss_graph(const Model& model, const Shape& input_shape, NormMode mode) {
  auto lg = std::make_unique<LossGraph>();
  Graph& g = lg->graph;
  ModelGraph mg(g, model, mode, kPrefix);
  const NodeRef x = g.leaf("x", input_shape);
  const NodeRef y = g.leaf("y", {input_shape.at(0)});
  const NodeRef z = mg.raw(x);
  if (model.output_kind() == OutputKind::bernoulli) {
    // -log p(y | z) = softplus(z) - y z
    g.set_output(g.mean(g.sub(g.softplus(z), g.mul(y, z))));
  } else {
    const NodeRef r = g.sub(z, y);
    g.set_output(g.mean(g.mul(r, r)));
  }
  lg->parameters = mg.leaf_names();
  return lg;
}

void bind_parameters(Bindings& b, const std::map<std::string, Tensor>& params) {
  for (const auto& [name, t] : params) b.insert_or_assign(name, t);
}

std::map<std::string, Tensor> prefixed_parameters(const Model& model) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : model.parameters()) out.emplace(kPrefix + name, t);
  return out;
}

void write_back(Model& model, const std::map<std::string, Tensor>& params) {
  const std::size_t skip = std::char_traits<char>::length(kPrefix);
  for (const auto& [name, t] : params) model.set_parameter(name.substr(skip), t);
}

void check_labels(const Model& model, std::span<const double> labels) {
  if (model.output_kind() != OutputKind::bernoulli) return;
  for (double y : labels) {
    require(y == 0.0 || y == 1.0, ErrorCode::precondition,
            "bernoulli model needs 0/1 labels, found " + std::to_string(y));
  }
}

Tensor label_tensor(std::span<const double> labels) {
  return Tensor({labels.size()}, std::vector<double>(labels.begin(), labels.end()));
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor run_pgd(const LossGraph& lg, const std::map<std::string, Tensor>& params, const Tensor& inputs,
               const Tensor& labels, const PgdConfig& pgd, const PgdObserver& observer) {
  const double eps = pgd.epsilon;
  const double step = pgd.step > 0.0 ? pgd.step : eps / 4.0;
  Tensor delta = Tensor::zeros(inputs.shape());
  Tensor perturbed = inputs;
  Bindings b;
  bind_parameters(b, params);
  b.insert_or_assign("y", labels);
  const std::vector<std::string> wrt{"x"};
  for (std::size_t it = 0; it < pgd.iterations; ++it) {
    b.insert_or_assign("x", perturbed);
    const GradientMap grads = gradient(lg.graph, b, wrt);
    const Tensor& g = grads.at("x");
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] = std::clamp(delta[i] + step * sign(g[i]), -eps, eps);
      perturbed[i] = inputs[i] + delta[i];
    }
    if (observer) observer(delta);
  }
  return perturbed;
}

TrainResult train_impl(const Model& model, const Dataset& data, const TrainConfig& config,
                       bool adversarial) {
  config.validate();
  data.validate();
  require(data.instance_shape() == model.input_shape(), ErrorCode::shape_mismatch,
          "dataset instances " + to_string(data.instance_shape()) + " do not match model input " +
              to_string(model.input_shape()));
  const auto train_rows = data.indices(Split::train);
  const auto val_rows = data.indices(Split::validation);
  require(!train_rows.empty(), ErrorCode::precondition, "training split is empty");
  require(!val_rows.empty(), ErrorCode::precondition, "validation split is empty");
  check_labels(model, data.labels);

  const std::size_t n = train_rows.size();
  const std::size_t batch =
      config.batch_size > 0 ? std::min(config.batch_size, n) : std::min<std::size_t>(100, std::max<std::size_t>(1, n / 4));
  const bool use_pgd = adversarial && config.pgd.epsilon > 0.0 && config.pgd.iterations > 0;
  const bool has_norm = !model.buffers().empty();

  Rng order_rng = Rng(config.seed).substream("batch-order");
  Model current = model;
  auto params = prefixed_parameters(model);
  std::map<std::size_t, std::unique_ptr<LossGraph>> graphs;
  auto graph_for = [&](std::size_t rows) -> const LossGraph& {
    auto& slot = graphs[rows];
    if (!slot) {
      Shape s = model.input_shape();
      s.insert(s.begin(), rows);
      slot = make_loss_graph(model, s, NormMode::batch);
    }
    return *slot;
  };

  const Tensor val_x = gather_instances(data, val_rows);
  const auto val_y = gather_labels(data, val_rows);
  Tensor train_x_all;
  if (has_norm) train_x_all = gather_instances(data, train_rows);

  Adam adam;
  PlateauSchedule schedule(config.learning_rate, config.patience, config.lr_floor);
  TrainResult result;
  result.model = current;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = train_rows;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      const std::span<const std::size_t> rows(order.data() + start, count);
      const LossGraph& lg = graph_for(count);
      Tensor x = gather_instances(data, rows);
      const Tensor y = label_tensor(gather_labels(data, rows));
      if (use_pgd) x = run_pgd(lg, params, x, y, config.pgd, {});
      Bindings b;
      bind_parameters(b, params);
      b.insert_or_assign("x", std::move(x));
      b.insert_or_assign("y", y);
      const ValueAndGradient vg = value_and_gradient(lg.graph, b, lg.parameters);
      require(std::isfinite(vg.value), ErrorCode::non_finite,
              "training loss became non-finite at epoch " + std::to_string(epoch) + ", batch starting at " +
                  std::to_string(start) + " (learning rate " + std::to_string(schedule.lr()) + ")");
      adam.step(params, vg.gradients, schedule.lr());
      total += vg.value * static_cast<double>(count);
    }
    write_back(current, params);
    if (has_norm) recalibrate_norm(current, train_x_all);
    const double val_loss = batch_loss(current, val_x, val_y, NormMode::frozen);
    require(std::isfinite(val_loss), ErrorCode::non_finite,
            "validation loss became non-finite at epoch " + std::to_string(epoch));
    result.history.push_back({total / static_cast<double>(n), val_loss, schedule.lr()});
    if (val_loss < best) {
      best = val_loss;
      result.model = current;
      result.best_epoch = epoch;
    }
    schedule.observe(val_loss);
    if (schedule.finished()) break;
  }
  return result;
}

}  // namespace

double batch_loss(const Model& model, const Tensor& inputs, std::span<const double> labels, NormMode mode) {
  require(!inputs.shape().empty() && inputs.shape()[0] == labels.size(), ErrorCode::shape_mismatch,
          "batch_loss: one label per instance required");
  const auto lg = make_loss_graph(model, inputs.shape(), mode);
  Bindings b;
  bind_parameters(b, prefixed_parameters(model));
  b.insert_or_assign("x", inputs);
  b.insert_or_assign("y", label_tensor(labels));
  return evaluate(lg->graph, b).item();
}

TrainResult train(const Model& model, const Dataset& data, const TrainConfig& config) {
  return train_impl(model, data, config, config.adversarial);
}

TrainResult train_adversarial(const Model& model, const Dataset& data, const TrainConfig& config) {
  require(config.adversarial, ErrorCode::precondition, "train_adversarial needs the adversarial flag set");
  return train_impl(model, data, config, true);
}

Tensor pgd_perturb(const Model& model, const Tensor& inputs, std::span<const double> labels,
                   const PgdConfig& pgd, NormMode mode, const PgdObserver& observer) {
  require(pgd.epsilon >= 0.0, ErrorCode::invalid_argument, "PGD epsilon must be nonnegative");
  require(!inputs.shape().empty() && inputs.shape()[0] == labels.size(), ErrorCode::shape_mismatch,
          "pgd_perturb: one label per instance required");
  check_labels(model, labels);
  const auto lg = make_loss_graph(model, inputs.shape(), mode);
  return run_pgd(*lg, prefixed_parameters(model), inputs, label_tensor(labels), pgd, observer);
}

void recalibrate_norm(Model& model, const Tensor& inputs) {
  if (model.buffers().empty()) return;
  Graph g;
  ModelGraph mg(g, model, NormMode::batch);
  const NodeRef x = g.leaf("x", inputs.shape());
  g.set_output(mg.raw(x));
  Bindings b{{"x", inputs}};
  mg.bind(b);
  const std::vector<NodeRef> nodes = mg.norm_inputs();
  const auto values = evaluate(g, b, nodes);
  const auto layers = model.layers();
  for (std::size_t l = 0; l < values.size(); ++l) {
    const Tensor& a = values[l];
    const std::size_t batch = a.extent(0), channels = a.extent(1), len = a.extent(2);
    const double count = static_cast<double>(batch * len);
    Tensor mean = Tensor::zeros({channels});
    Tensor var = Tensor::zeros({channels});
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t t = 0; t < len; ++t) s += a[(i * channels + c) * len + t];
      }
      const double m = s / count;
      double v = 0.0;
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t t = 0; t < len; ++t) {
          const double dlt = a[(i * channels + c) * len + t] - m;
          v += dlt * dlt;
        }
      }
      mean[c] = m;
      var[c] = v / count;
    }
    model.set_buffer(layers[l].name + ".mean", mean);
    model.set_buffer(layers[l].name + ".var", var);
  }
}

}  // namespace mind
