#include "mind/models/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mind/diffcore/error.hpp"

namespace mind {

void Adam::step(std::map<std::string, Tensor>& params, const GradientMap& grads, double lr,
                const std::map<std::string, double>& weight_decay) {
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    require(it != params.end(), ErrorCode::invalid_argument, "optimizer: unknown parameter '" + name + "'");
    Tensor& p = it->second;
    require(p.shape() == g.shape(), ErrorCode::shape_mismatch, "optimizer: gradient shape for '" + name + "'");
    auto [st, fresh] = state_.try_emplace(name);
    Moments& s = st->second;
    if (fresh) {
      s.m = Tensor::zeros(p.shape());
      s.v = Tensor::zeros(p.shape());
      s.vmax = Tensor::zeros(p.shape());
    }
    const auto decay = weight_decay.find(name);
    const double wd = decay == weight_decay.end() ? 0.0 : decay->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * gi;
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * gi * gi;
      s.vmax[i] = std::max(s.vmax[i], s.v[i]);
      const double mhat = s.m[i] / c1;
      const double vhat = s.vmax[i] / c2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + options_.epsilon) + wd * p[i]);
    }
  }
}

PlateauSchedule::PlateauSchedule(double lr, std::size_t patience, double floor, double threshold)
    : lr_(lr),
      patience_(patience),
      floor_(floor),
      threshold_(threshold),
      best_(std::numeric_limits<double>::infinity()) {
  require(lr > 0.0 && floor > 0.0 && threshold >= 0.0, ErrorCode::invalid_argument,
          "learning rate, floor and threshold must be positive");
}

bool PlateauSchedule::observe(double loss) {
  if (std::isinf(best_) || loss < best_ - threshold_ * std::abs(best_)) {
    best_ = loss;
    bad_epochs_ = 0;
    return true;
  }
  if (++bad_epochs_ > patience_) {
    lr_ *= 0.5;
    bad_epochs_ = 0;
  }
  return false;
}

}  // namespace mind
