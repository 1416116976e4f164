#include "fade/tensor.hpp"

#include <cmath>
#include <string>

namespace fade {

namespace {

std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("tensor dimension must be non-negative");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(checked_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  const std::int64_t n = checked_numel(shape_);
  if (n != static_cast<std::int64_t>(data_.size()))
    throw ShapeError("tensor value count " + std::to_string(data_.size()) +
                     " does not match shape numel " + std::to_string(n));
}

std::int64_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw ShapeError("rows() requires a rank-1 or rank-2 tensor");
}

std::int64_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw ShapeError("cols() requires a rank-1 or rank-2 tensor");
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  Tensor out(std::move(shape), data_);
  return out;
}

}  // namespace fade
