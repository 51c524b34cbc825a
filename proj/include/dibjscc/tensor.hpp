#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "dibjscc/errors.hpp"

namespace dibjscc {

// Dense row-major tensor of doubles. Shapes used throughout the project:
//   images      N x C x H x W
//   codewords   N x M
//   probability N x S
// Value semantics; all numerics run in double so finite-difference checks
// hold tight tolerances.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  Tensor(std::initializer_list<std::size_t> shape)
      : Tensor(std::vector<std::size_t>(shape)) {}

  static Tensor full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors (row-major): t(n, j)
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  // Reinterprets the buffer under a new shape with identical element count.
  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (count(shape) != size()) {
      throw input_error("reshape: element count mismatch (" +
                        shape_string(shape_) + " -> " + shape_string(shape) + ")");
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  double mean_square() const {
    if (empty()) return 0.0;
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s / static_cast<double>(size());
  }

  static std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << "x";
      os << shape[i];
    }
    os << "]";
    return os.str();
  }

  std::string shape_string() const { return shape_string(shape_); }

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Row i of a 2-D tensor as [begin, end) pointers.
inline const double* row(const Tensor& t, std::size_t i) {
  return t.data() + i * t.dim(1);
}
inline double* row(Tensor& t, std::size_t i) { return t.data() + i * t.dim(1); }

// Horizontal concatenation of two 2-D tensors with equal row counts.
inline Tensor hconcat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw input_error("hconcat: need 2-D tensors with matching row counts");
  }
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor out({n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(row(a, i), row(a, i) + da, row(out, i));
    std::copy(row(b, i), row(b, i) + db, row(out, i) + da);
  }
  return out;
}

// Splits a 2-D tensor column-wise at `at`.
inline std::pair<Tensor, Tensor> hsplit(const Tensor& t, std::size_t at) {
  if (t.rank() != 2 || at > t.dim(1)) throw input_error("hsplit: bad split point");
  const std::size_t n = t.dim(0), d = t.dim(1);
  Tensor a({n, at}), b({n, d - at});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(row(t, i), row(t, i) + at, row(a, i));
    std::copy(row(t, i) + at, row(t, i) + d, row(b, i));
  }
  return {a, b};
}

// Gathers rows of a 2-D tensor by index.
inline Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
  if (t.rank() < 2) throw input_error("take_rows: need at least 2-D tensor");
  std::size_t stride = t.size() / t.dim(0);
  std::vector<std::size_t> shape = t.shape();
  shape[0] = idx.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double* src = t.data() + idx[i] * stride;
    std::copy(src, src + stride, out.data() + i * stride);
  }
  return out;
}

}  // namespace dibjscc
