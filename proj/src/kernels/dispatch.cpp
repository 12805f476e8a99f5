#include <atomic>
#include <cstdlib>
#include <string_view>

#include "diffcap/kernels.hpp"
#include "scalar_impl.hpp"

namespace diffcap::kernels {
namespace {

struct FloatKernels {
  void (*gemm_nn)(MatView<const float>, MatView<const float>, MatView<float>, bool);
  void (*gemm_nt)(MatView<const float>, MatView<const float>, MatView<float>, bool);
  void (*gemm_tn)(MatView<const float>, MatView<const float>, MatView<float>, bool);
  double (*dot)(std::span<const float>, std::span<const float>);
  double (*squared_distance)(std::span<const float>, std::span<const float>);
  void (*axpy)(float, std::span<const float>, std::span<float>);
};

constexpr FloatKernels kScalarTable{scalar::gemm_nn, scalar::gemm_nt,          scalar::gemm_tn,
                                    scalar::dot,     scalar::squared_distance, scalar::axpy};
#if defined(DIFFCAP_HAVE_AVX2_KERNELS)
constexpr FloatKernels kAvx2Table{avx2::gemm_nn, avx2::gemm_nt,          avx2::gemm_tn,
                                  avx2::dot,     avx2::squared_distance, avx2::axpy};
#endif

const FloatKernels& table_for(Isa isa) {
#if defined(DIFFCAP_HAVE_AVX2_KERNELS)
  if (isa == Isa::kAvx2) return kAvx2Table;
#endif
  (void)isa;
  return kScalarTable;
}

Isa initial_isa() {
  if (const char* env = std::getenv("DIFFCAP_SIMD")) {
    if (std::string_view(env) == "scalar") return Isa::kScalar;
  }
  return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

const FloatKernels& active() { return table_for(current().load(std::memory_order_relaxed)); }

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(DIFFCAP_HAVE_AVX2_KERNELS)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(); }

Isa set_isa(Isa isa) {
  if (!isa_supported(isa)) isa = Isa::kScalar;
  current().store(isa);
  return isa;
}

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

void gemm_nn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate) {
  active().gemm_nn(a, b, c, accumulate);
}
void gemm_nt(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate) {
  active().gemm_nt(a, b, c, accumulate);
}
void gemm_tn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate) {
  active().gemm_tn(a, b, c, accumulate);
}
double dot(std::span<const float> x, std::span<const float> y) { return active().dot(x, y); }
double squared_distance(std::span<const float> x, std::span<const float> y) {
  return active().squared_distance(x, y);
}
void axpy(float alpha, std::span<const float> x, std::span<float> y) { active().axpy(alpha, x, y); }

// Double precision is only used by gradient checks; scalar is enough.
void gemm_nn(MatView<const double> a, MatView<const double> b, MatView<double> c, bool accumulate) {
  detail::gemm_nn(a, b, c, accumulate);
}
void gemm_nt(MatView<const double> a, MatView<const double> b, MatView<double> c, bool accumulate) {
  detail::gemm_nt(a, b, c, accumulate);
}
void gemm_tn(MatView<const double> a, MatView<const double> b, MatView<double> c, bool accumulate) {
  detail::gemm_tn(a, b, c, accumulate);
}
double dot(std::span<const double> x, std::span<const double> y) { return detail::dot(x, y); }
double squared_distance(std::span<const double> x, std::span<const double> y) {
  return detail::squared_distance(x, y);
}
void axpy(double alpha, std::span<const double> x, std::span<double> y) { detail::axpy(alpha, x, y); }

}  // namespace diffcap::kernels
