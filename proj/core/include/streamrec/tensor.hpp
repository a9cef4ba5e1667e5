#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace streamrec {

// Dense row-major tensor of 64-bit floats. Rank is 1 or 2 everywhere in this
// codebase; the shape vector is kept general so checkpoints stay
// self-describing. Values are treated as immutable once an operation has
// produced them.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::initializer_list<double> values)
      : shape{values.size()}, data(values) {}

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor from_vector(std::vector<double> values);

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool is_scalar() const { return data.size() == 1; }
  double scalar() const;

  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace streamrec
