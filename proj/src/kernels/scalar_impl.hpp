#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

#include "diffcap/kernels.hpp"

namespace diffcap::kernels::detail {

template <typename T>
std::vector<double>& row_accumulator(std::size_t n) {
  thread_local std::vector<double> acc;
  acc.assign(n, 0.0);
  return acc;
}

template <typename T>
void store_row(const std::vector<double>& acc, T* out, std::size_t n, bool accumulate) {
  if (accumulate) {
    for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<T>(static_cast<double>(out[j]) + acc[j]);
  } else {
    for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<T>(acc[j]);
  }
}

// Row i of C accumulates a(i, p) * B[p, :] over p, with A addressed through
// (row_stride, col_stride) so the same loop serves A and A^T.
template <typename T>
void gemm_rows(const T* a, std::size_t a_row_stride, std::size_t a_col_stride, MatView<const T> b,
               MatView<T> c, std::size_t k, bool accumulate) {
  const std::size_t n = c.cols;
  for (std::size_t i = 0; i < c.rows; ++i) {
    auto& acc = row_accumulator<T>(n);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = static_cast<double>(a[i * a_row_stride + p * a_col_stride]);
      const T* brow = b.data + p * b.cols;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    store_row(acc, c.data + i * n, n, accumulate);
  }
}

template <typename T>
void gemm_nn(MatView<const T> a, MatView<const T> b, MatView<T> c, bool accumulate) {
  assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
  gemm_rows(a.data, a.cols, 1, b, c, a.cols, accumulate);
}

template <typename T>
void gemm_tn(MatView<const T> a, MatView<const T> b, MatView<T> c, bool accumulate) {
  assert(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols);
  gemm_rows(a.data, 1, a.cols, b, c, a.rows, accumulate);
}

template <typename T>
double dot(std::span<const T> x, std::span<const T> y) {
  assert(x.size() == y.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return s;
}

template <typename T>
void gemm_nt(MatView<const T> a, MatView<const T> b, MatView<T> c, bool accumulate) {
  assert(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows);
  const std::size_t k = a.cols;
  for (std::size_t i = 0; i < c.rows; ++i) {
    std::span<const T> arow(a.data + i * k, k);
    for (std::size_t j = 0; j < c.cols; ++j) {
      const double s = dot<T>(arow, std::span<const T>(b.data + j * k, k));
      T& out = c.data[i * c.cols + j];
      out = accumulate ? static_cast<T>(static_cast<double>(out) + s) : static_cast<T>(s);
    }
  }
}

template <typename T>
double squared_distance(std::span<const T> x, std::span<const T> y) {
  assert(x.size() == y.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    s += d * d;
  }
  return s;
}

template <typename T>
void axpy(T alpha, std::span<const T> x, std::span<T> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace diffcap::kernels::detail
