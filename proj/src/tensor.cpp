#include "fqkl/tensor.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fqkl/errors.hpp"

namespace fqkl {

namespace {
std::size_t shape_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_count(shape_), fill) {}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape_ = {1};
  t.data_ = {v};
  return t;
}

Tensor Tensor::vec(std::vector<double> values) {
  Tensor t;
  t.shape_ = {values.size()};
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  if (shape_count(shape) != values.size()) {
    throw ShapeError("tensor value count " + std::to_string(values.size()) +
                     " does not match shape product " + std::to_string(shape_count(shape)));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

}  // namespace fqkl
