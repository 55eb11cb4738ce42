#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "mind/diffcore/graph.hpp"

namespace mind {

// Adam with the AMSGrad running maximum of the second moment. Optional
// decoupled weight decay is applied per tensor on request.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options options) : options_(options) {}

  // One update of `params[name]` for every entry of `grads`.
  void step(std::map<std::string, Tensor>& params, const GradientMap& grads, double lr,
            const std::map<std::string, double>& weight_decay = {});

  std::size_t steps() const noexcept { return t_; }

 private:
  struct Moments {
    Tensor m, v, vmax;
  };
  Options options_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

// Halves the learning rate when the monitored loss has not improved by a
// relative 1e-4 for `patience` consecutive epochs.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, std::size_t patience, double floor, double threshold = 1e-4);

  // Returns true if `loss` is a new best.
  bool observe(double loss);
  double lr() const noexcept { return lr_; }
  bool finished() const noexcept { return lr_ < floor_; }
  double best() const noexcept { return best_; }

 private:
  double lr_;
  std::size_t patience_;
  double floor_;
  double threshold_;
  double best_;
  std::size_t bad_epochs_ = 0;
};

}  // namespace mind
