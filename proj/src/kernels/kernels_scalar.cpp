#include "scalar_impl.hpp"

namespace diffcap::kernels::scalar {

void gemm_nn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate) {
  detail::gemm_nn(a, b, c, accumulate);
}
void gemm_nt(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate) {
  detail::gemm_nt(a, b, c, accumulate);
}
void gemm_tn(MatView<const float> a, MatView<const float> b, MatView<float> c, bool accumulate) {
  detail::gemm_tn(a, b, c, accumulate);
}
double dot(std::span<const float> x, std::span<const float> y) { return detail::dot(x, y); }
double squared_distance(std::span<const float> x, std::span<const float> y) {
  return detail::squared_distance(x, y);
}
void axpy(float alpha, std::span<const float> x, std::span<float> y) { detail::axpy(alpha, x, y); }

}  // namespace diffcap::kernels::scalar
