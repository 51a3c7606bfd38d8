#ifndef NTC_TENSOR_HPP
#define NTC_TENSOR_HPP

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "ntc/common.hpp"

namespace ntc {

using Shape = std::vector<int64_t>;

// Dense row-major array of doubles. Immutable by convention once handed to a
// tape; mutation is confined to construction and optimizer updates.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != count(shape_))
      throw DimensionError("tensor data length does not match shape");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  // Checked construction: rejects NaN/Inf.
  static Tensor checked(Shape shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    for (double v : t.data_)
      if (!std::isfinite(v)) throw DomainError("non-finite value in checked tensor");
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }

  // 2-D accessors; most of the codebase works with [batch x features].
  int64_t rows() const {
    assert(ndim() == 2);
    return shape_[0];
  }
  int64_t cols() const {
    assert(ndim() == 2);
    return shape_[1];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> values() const { return data_; }
  std::span<double> values() { return std::span<double>(data_); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static int64_t count(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) {
      if (e < 0) throw DimensionError("negative extent");
      n *= e;
    }
    return n;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace ntc

#endif
