#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "diffcap/kernels.hpp"

namespace diffcap {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array with an optional gradient buffer of the same shape.
/// Rank 0, 1 and 2 are supported; rank-1 tensors behave as a single row.
template <typename Real>
class BasicTensor {
 public:
  using value_type = Real;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, bool requires_grad = false);
  BasicTensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<Real> row(std::size_t r) { return std::span<Real>(data_).subspan(r * cols(), cols()); }
  std::span<const Real> row(std::size_t r) const {
    return std::span<const Real>(data_).subspan(r * cols(), cols());
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return !grad_.empty(); }
  /// Gradient buffer, zero-allocated on first access.
  std::span<Real> grad();
  /// Empty when no gradient has been accumulated.
  std::span<const Real> grad() const { return grad_; }
  void zero_grad();

  kernels::MatView<const Real> view() const { return {data_.data(), rows(), cols()}; }
  kernels::MatView<Real> mut_view() { return {data_.data(), rows(), cols()}; }

 private:
  Shape shape_;
  std::vector<Real> data_;
  std::vector<Real> grad_;
  bool requires_grad_ = false;
};

using Tensor = BasicTensor<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace diffcap
