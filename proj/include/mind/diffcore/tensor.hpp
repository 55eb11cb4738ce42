#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mind {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The public value constructor rejects NaN/Inf and size mismatches; tensors
/// produced by `zeros`/`full` are filled in place by kernels.
class Tensor {
 public:
  Tensor();  // rank-0 zero
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const;

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  const double* data() const noexcept { return data_.data(); }
  double* data() noexcept { return data_.data(); }

  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }

  // Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Stack equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);
// Inverse of `stack` for a single row.
Tensor row(const Tensor& batch, std::size_t index);

double max_abs_difference(const Tensor& a, const Tensor& b);

}  // namespace mind
