#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

#include "diffcap/kernels.hpp"

#if defined(DIFFCAP_HAVE_AVX2_KERNELS)

#include <immintrin.h>

#define DIFFCAP_AVX2 __attribute__((target("avx2,fma")))

namespace diffcap::kernels::avx2 {
namespace {

DIFFCAP_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

DIFFCAP_AVX2 inline void store4(float* out, __m256d acc, bool accumulate) {
  if (accumulate) acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm_loadu_ps(out)));
  _mm_storeu_ps(out, _mm256_cvtpd_ps(acc));
}

// Same traversal as the scalar reference: row i of C accumulates
// a(i, p) * B[p, :] over p, in double lanes, 16 columns at a time.
DIFFCAP_AVX2 void gemm_rows(const float* a, std::size_t a_row_stride, std::size_t a_col_stride,
                            MatView<const float> b, MatView<float> c, std::size_t k, bool accumulate) {
  const std::size_t n = c.cols;
  for (std::size_t i = 0; i < c.rows; ++i) {
    const float* arow = a + i * a_row_stride;
    float* crow = c.data + i * n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
      __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(static_cast<double>(arow[p * a_col_stride]));
        const float* bp = b.data + p * b.cols + j;
        const __m256 b01 = _mm256_loadu_ps(bp);
        const __m256 b23 = _mm256_loadu_ps(bp + 8);
        c0 = _mm256_fmadd_pd(av, _mm256_cvtps_pd(_mm256_castps256_ps128(b01)), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_cvtps_pd(_mm256_extractf128_ps(b01, 1)), c1);
        c2 = _mm256_fmadd_pd(av, _mm256_cvtps_pd(_mm256_castps256_ps128(b23)), c2);
        c3 = _mm256_fmadd_pd(av, _mm256_cvtps_pd(_mm256_extractf128_ps(b23, 1)), c3);
      }
      store4(crow + j, c0, accumulate);
      store4(crow + j + 4, c1, accumulate);
      store4(crow + j + 8, c2, accumulate);
      store4(crow + j + 12, c3, accumulate);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(static_cast<double>(arow[p * a_col_stride]));
        c0 = _mm256_fmadd_pd(av, _mm256_cvtps_pd(_mm_loadu_ps(b.data + p * b.cols + j)), c0);
      }
      store4(crow + j, c0, accumulate);
    }
    for (; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        s += static_cast<double>(arow[p * a_col_stride]) * static_cast<double>(b.data[p * b.cols + j]);
      crow[j] = accumulate ? static_cast<float>(static_cast<double>(crow[j]) + s) : static_cast<float>(s);
    }
  }
}

DIFFCAP_AVX2 double dot_impl(const float* x, const float* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    a0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                         _mm256_cvtps_pd(_mm256_castps256_ps128(yv)), a0);
    a1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                         _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)), a1);
  }
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return s;
}

}  // namespace

void gemm_nn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate) {
  assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
  gemm_rows(a.data, a.cols, 1, b, c, a.cols, accumulate);
}

void gemm_tn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate) {
  assert(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols);
  gemm_rows(a.data, 1, a.cols, b, c, a.rows, accumulate);
}

void gemm_nt(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate) {
  assert(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows);
  const std::size_t k = a.cols;
  for (std::size_t i = 0; i < c.rows; ++i) {
    for (std::size_t j = 0; j < c.cols; ++j) {
      const double s = dot_impl(a.data + i * k, b.data + j * k, k);
      float& out = c.data[i * c.cols + j];
      out = accumulate ? static_cast<float>(static_cast<double>(out) + s) : static_cast<float>(s);
    }
  }
}

double dot(std::span<const float> x, std::span<const float> y) {
  assert(x.size() == y.size());
  return dot_impl(x.data(), y.data(), x.size());
}

DIFFCAP_AVX2 double squared_distance(std::span<const float> x, std::span<const float> y) {
  assert(x.size() == y.size());
  const std::size_t n = x.size();
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x.data() + i);
    const __m256 yv = _mm256_loadu_ps(y.data() + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                                     _mm256_cvtps_pd(_mm256_castps256_ps128(yv)));
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                                     _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)));
    a0 = _mm256_fmadd_pd(d0, d0, a0);
    a1 = _mm256_fmadd_pd(d1, d1, a1);
  }
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    s += d * d;
  }
  return s;
}

DIFFCAP_AVX2 void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  assert(x.size() == y.size());
  const std::size_t n = x.size();
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    // mul then add, matching the scalar rounding exactly
    const __m256 prod = _mm256_mul_ps(av, _mm256_loadu_ps(x.data() + i));
    _mm256_storeu_ps(y.data() + i, _mm256_add_ps(_mm256_loadu_ps(y.data() + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace diffcap::kernels::avx2

#endif
