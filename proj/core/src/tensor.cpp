#include "streamrec/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "streamrec/errors.hpp"

namespace streamrec {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.data.assign(shape_size(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t;
  t.data.assign(shape_size(shape), value);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::from_vector(std::vector<double> values) {
  Tensor t;
  t.shape = {values.size()};
  t.data = std::move(values);
  return t;
}

double Tensor::scalar() const {
  if (data.size() != 1)
    throw ShapeError("scalar() on tensor of shape " + shape_str(shape));
  return data[0];
}

std::size_t Tensor::rows() const {
  if (shape.size() != 2)
    throw ShapeError("rows() on tensor of shape " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2)
    throw ShapeError("cols() on tensor of shape " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data[r * cols() + c];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  if (a.data.size() != b.data.size()) return false;
  return std::memcmp(a.data.data(), b.data.data(),
                     a.data.size() * sizeof(double)) == 0;
}

}  // namespace streamrec
