#pragma once

// Tape-based reverse-mode automatic differentiation over BasicTensor.
//
// A tape owns every intermediate produced while it is alive and records one
// backward closure per differentiable op, in creation order. Parameters live
// outside the tape and are attached with watch(); their gradients accumulate
// additively across backward() calls until zero_grad().

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "diffcap/tensor.hpp"

namespace diffcap {

template <typename Real>
class BasicTape;

/// Non-owning handle to a tensor participating in a tape.
template <typename Real>
class BasicVar {
 public:
  BasicVar() = default;
  BasicVar(BasicTape<Real>* tape, BasicTensor<Real>* tensor) : tape_(tape), tensor_(tensor) {}

  BasicTape<Real>& tape() const { return *tape_; }
  BasicTensor<Real>& value() const { return *tensor_; }
  BasicTensor<Real>* get() const { return tensor_; }
  const Shape& shape() const { return tensor_->shape(); }
  std::size_t rows() const { return tensor_->rows(); }
  std::size_t cols() const { return tensor_->cols(); }
  std::size_t size() const { return tensor_->size(); }
  bool requires_grad() const { return tensor_->requires_grad(); }

 private:
  BasicTape<Real>* tape_ = nullptr;
  BasicTensor<Real>* tensor_ = nullptr;
};

template <typename Real>
class BasicTape {
 public:
  using Var = BasicVar<Real>;
  using Tensor = BasicTensor<Real>;

  /// With `record_gradients` false no backward closures are kept and every
  /// result is a constant; used for inference.
  explicit BasicTape(bool record_gradients = true) : record_(record_gradients) {}
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Var watch(Tensor& parameter) { return Var(this, &parameter); }
  Var constant(Tensor value);
  Var constant(Shape shape, std::vector<Real> data);

  /// Seeds d(loss)/d(loss) = 1 and runs the recorded closures in reverse.
  /// Throws UsageError unless `loss` is a single-element tensor on this tape
  /// that depends on at least one gradient-requiring input.
  void backward(Var loss);

  bool recording() const { return record_; }
  std::size_t node_count() const { return backward_.size(); }

  // Used by ops.
  Var emplace(Shape shape, bool requires_grad);
  void record(std::function<void()> fn);

 private:
  std::deque<Tensor> storage_;
  std::vector<std::function<void()>> backward_;
  bool record_;
};

using Var = BasicVar<float>;
using Tape = BasicTape<float>;

namespace ops {

// Shape mismatches throw DimensionError naming both shapes. Only the leading
// (row) axis broadcasts, and only where stated.

template <typename Real>
BasicVar<Real> matmul(BasicVar<Real> a, BasicVar<Real> b);
template <typename Real>
BasicVar<Real> add(BasicVar<Real> a, BasicVar<Real> b);
/// a[m, n] + row[n] broadcast over the m rows.
template <typename Real>
BasicVar<Real> add_row(BasicVar<Real> a, BasicVar<Real> row);
/// x * W + b with W: [in, out], b: [out].
template <typename Real>
BasicVar<Real> linear(BasicVar<Real> x, BasicVar<Real> weight, BasicVar<Real> bias);
template <typename Real>
BasicVar<Real> mul(BasicVar<Real> a, BasicVar<Real> b);
template <typename Real>
BasicVar<Real> scale(BasicVar<Real> a, Real s);
template <typename Real>
BasicVar<Real> concat_rows(std::span<const BasicVar<Real>> parts);
template <typename Real>
BasicVar<Real> slice_rows(BasicVar<Real> a, std::size_t begin, std::size_t count);
template <typename Real>
BasicVar<Real> concat_cols(std::span<const BasicVar<Real>> parts);
template <typename Real>
BasicVar<Real> slice_cols(BasicVar<Real> a, std::size_t begin, std::size_t count);
template <typename Real>
BasicVar<Real> transpose(BasicVar<Real> a);
/// Row-wise softmax over the last axis.
template <typename Real>
BasicVar<Real> softmax(BasicVar<Real> a);
template <typename Real>
BasicVar<Real> layer_norm(BasicVar<Real> x, BasicVar<Real> gain, BasicVar<Real> bias, Real eps = Real(1e-5));
/// tanh approximation.
template <typename Real>
BasicVar<Real> gelu(BasicVar<Real> x);
/// Rows of `table` selected by `ids`; throws DimensionError on a bad id.
template <typename Real>
BasicVar<Real> embedding_gather(BasicVar<Real> table, std::span<const int> ids);
template <typename Real>
BasicVar<Real> sum(BasicVar<Real> a);
/// Mean over all elements of (a - b)^2.
template <typename Real>
BasicVar<Real> mean_square_error(BasicVar<Real> a, BasicVar<Real> b);
/// Per-row sum of (a - b)^2, shape [rows].
template <typename Real>
BasicVar<Real> row_squared_error(BasicVar<Real> a, BasicVar<Real> b);
/// Per-row -log softmax(logits)[target], shape [rows].
template <typename Real>
BasicVar<Real> row_cross_entropy(BasicVar<Real> logits, std::span<const int> targets);
/// Mean of row_cross_entropy.
template <typename Real>
BasicVar<Real> cross_entropy_with_logits(BasicVar<Real> logits, std::span<const int> targets);

}  // namespace ops
}  // namespace diffcap
