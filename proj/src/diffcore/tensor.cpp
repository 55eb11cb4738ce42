#include "mind/diffcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mind/diffcore/error.hpp"

namespace mind {

std::size_t element_count(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  require(element_count(shape_) == data_.size(), ErrorCode::shape_mismatch,
          "tensor of shape " + to_string(shape_) + " cannot hold " +
              std::to_string(data_.size()) + " values");
  require(all_finite(), ErrorCode::non_finite, "tensor values must be finite");
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  Tensor t;
  t.data_.assign(element_count(shape), value);
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::extent(std::size_t axis) const {
  require(axis < shape_.size(), ErrorCode::out_of_range,
          "axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  return shape_[axis];
}

double Tensor::item() const {
  require(data_.size() == 1, ErrorCode::shape_mismatch,
          "item() needs a single-element tensor, got " + to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  require(element_count(shape) == data_.size(), ErrorCode::shape_mismatch,
          "cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
  require(!items.empty(), ErrorCode::invalid_argument, "cannot stack an empty list");
  const Shape& inner = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  Tensor out = Tensor::zeros(shape);
  const std::size_t stride = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    require(items[i].shape() == inner, ErrorCode::shape_mismatch,
            "stack: item " + std::to_string(i) + " has shape " +
                to_string(items[i].shape()) + ", expected " + to_string(inner));
    std::copy(items[i].values().begin(), items[i].values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

Tensor row(const Tensor& batch, std::size_t index) {
  require(batch.rank() >= 1 && index < batch.shape()[0], ErrorCode::out_of_range,
          "row index out of range");
  Shape inner(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t stride = element_count(inner);
  Tensor out = Tensor::zeros(inner);
  std::copy_n(batch.values().begin() + static_cast<std::ptrdiff_t>(index * stride), stride,
              out.values().begin());
  return out;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::shape_mismatch,
          "max_abs_difference: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mind
