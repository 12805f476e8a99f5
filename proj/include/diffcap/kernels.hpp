#pragma once

// Dense inner-loop kernels. Every kernel has a portable scalar reference
// implementation; float kernels additionally have an AVX2+FMA variant that is
// selected at runtime when the CPU supports it. Reductions accumulate in
// double regardless of the storage type.

#include <cstddef>
#include <span>
#include <string_view>

namespace diffcap::kernels {

enum class Isa { kScalar, kAvx2 };

/// Row-major matrix view. `cols` is also the row stride.
template <typename T>
struct MatView {
  T* data;
  std::size_t rows;
  std::size_t cols;
};

bool isa_supported(Isa isa);
/// ISA used by the float kernels. Initialized from the CPU and the
/// DIFFCAP_SIMD environment variable ("scalar" or "avx2").
Isa active_isa();
/// Forces an ISA; falls back to scalar if `isa` is unsupported. Returns the
/// ISA actually selected.
Isa set_isa(Isa isa);
std::string_view isa_name(Isa isa);

// C = A * B (or C += A * B), A: m x k, B: k x n, C: m x n.
void gemm_nn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate);
void gemm_nn(MatView<const double> a, MatView<const double> b, MatView<double> c, bool accumulate);

// C = A * B^T (or +=), A: m x k, B: n x k.
void gemm_nt(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate);
void gemm_nt(MatView<const double> a, MatView<const double> b, MatView<double> c, bool accumulate);

// C = A^T * B (or +=), A: k x m, B: k x n.
void gemm_tn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate);
void gemm_tn(MatView<const double> a, MatView<const double> b, MatView<double> c, bool accumulate);

double dot(std::span<const float> x, std::span<const float> y);
double dot(std::span<const double> x, std::span<const double> y);

double squared_distance(std::span<const float> x, std::span<const float> y);
double squared_distance(std::span<const double> x, std::span<const double> y);

/// y += alpha * x
void axpy(float alpha, std::span<const float> x, std::span<float> y);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// Scalar reference implementations, always available for equivalence tests.
namespace scalar {
void gemm_nn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate);
void gemm_nt(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate);
void gemm_tn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate);
double dot(std::span<const float> x, std::span<const float> y);
double squared_distance(std::span<const float> x, std::span<const float> y);
void axpy(float alpha, std::span<const float> x, std::span<float> y);
}  // namespace scalar

#if defined(__x86_64__) || defined(__i386__)
#define DIFFCAP_HAVE_AVX2_KERNELS 1
namespace avx2 {
void gemm_nn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate);
void gemm_nt(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate);
void gemm_tn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate);
double dot(std::span<const float> x, std::span<const float> y);
double squared_distance(std::span<const float> x, std::span<const float> y);
void axpy(float alpha, std::span<const float> x, std::span<float> y);
}  // namespace avx2
#endif

}  // namespace diffcap::kernels
