#include "diffcap/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "diffcap/error.hpp"

namespace diffcap {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, bool requires_grad)
    : shape_(std::move(shape)), data_(shape_numel(shape_), Real(0)), requires_grad_(requires_grad) {
  if (shape_.size() > 2) throw DimensionError("tensor rank > 2 unsupported: " + shape_string(shape_));
}

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, std::vector<Real> data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
  if (shape_.size() > 2) throw DimensionError("tensor rank > 2 unsupported: " + shape_string(shape_));
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

template <typename Real>
std::size_t BasicTensor<Real>::rows() const {
  return shape_.size() == 2 ? shape_[0] : 1;
}

template <typename Real>
std::size_t BasicTensor<Real>::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

template <typename Real>
std::span<Real> BasicTensor<Real>::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), Real(0));
  return grad_;
}

template <typename Real>
void BasicTensor<Real>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), Real(0));
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace diffcap
