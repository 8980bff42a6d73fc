#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gti/errors.hpp"

namespace gti {

// Dense row-major array of doubles. Rank is at most 2: vectors are
// stored with cols == 1, scalars as 1x1. All training math is 64-bit.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor vec(std::size_t n, double fill = 0.0) { return Tensor(n, 1, fill); }
  static Tensor mat(std::size_t r, std::size_t c, double fill = 0.0) {
    return Tensor(r, c, fill);
  }
  static Tensor from(const std::vector<double>& v) {
    Tensor t(v.size(), 1);
    t.data = v;
    return t;
  }

  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool is_vector() const { return cols == 1; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  void fill(double v) { data.assign(data.size(), v); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                         b.shape_str() + " differ");
}

}  // namespace gti
