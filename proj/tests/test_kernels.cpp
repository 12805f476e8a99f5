#include <doctest.h>

#include <random>
#include <vector>

#include "diffcap/kernels.hpp"

using namespace diffcap::kernels;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

struct Case {
  std::size_t m, k, n;
};

const Case kCases[] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 16}, {17, 9, 33}, {6, 64, 48}, {2, 3, 100}};

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("active isa is reported and can be forced to scalar") {
    const Isa before = active_isa();
    CHECK(set_isa(Isa::kScalar) == Isa::kScalar);
    CHECK(active_isa() == Isa::kScalar);
    CHECK(isa_name(Isa::kScalar) == "scalar");
    CHECK(isa_name(Isa::kAvx2) == "avx2");
    set_isa(before);
  }

  TEST_CASE("unsupported isa falls back to scalar") {
    const Isa before = active_isa();
    const Isa got = set_isa(Isa::kAvx2);
    CHECK(got == (isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar));
    set_isa(before);
  }

  TEST_CASE("gemm matches a naive triple loop") {
    for (const auto& c : kCases) {
      auto a = random_floats(c.m * c.k, 1);
      auto b = random_floats(c.k * c.n, 2);
      std::vector<float> out(c.m * c.n);
      gemm_nn({a.data(), c.m, c.k}, {b.data(), c.k, c.n}, {out.data(), c.m, c.n}, false);
      for (std::size_t i = 0; i < c.m; ++i) {
        for (std::size_t j = 0; j < c.n; ++j) {
          double s = 0;
          for (std::size_t p = 0; p < c.k; ++p) s += double(a[i * c.k + p]) * b[p * c.n + j];
          CHECK(out[i * c.n + j] == doctest::Approx(s).epsilon(1e-6));
        }
      }
    }
  }

  TEST_CASE("transposed gemm variants agree with explicit transposes") {
    const std::size_t m = 5, k = 7, n = 9;
    auto a = random_floats(m * k, 3);
    auto b = random_floats(k * n, 4);
    std::vector<float> at(k * m), bt(n * k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
    std::vector<float> ref(m * n), nt(m * n), tn(m * n);
    gemm_nn({a.data(), m, k}, {b.data(), k, n}, {ref.data(), m, n}, false);
    gemm_nt({a.data(), m, k}, {bt.data(), n, k}, {nt.data(), m, n}, false);
    gemm_tn({at.data(), k, m}, {b.data(), k, n}, {tn.data(), m, n}, false);
    for (std::size_t i = 0; i < m * n; ++i) {
      CHECK(nt[i] == doctest::Approx(ref[i]).epsilon(1e-6));
      CHECK(tn[i] == ref[i]);
    }
  }

  TEST_CASE("accumulate adds into the destination") {
    std::vector<float> a = {1, 2}, b = {3, 4}, c = {10};
    gemm_nn({a.data(), 1, 2}, {b.data(), 2, 1}, {c.data(), 1, 1}, true);
    CHECK(c[0] == 21.0f);
    gemm_nn({a.data(), 1, 2}, {b.data(), 2, 1}, {c.data(), 1, 1}, false);
    CHECK(c[0] == 11.0f);
  }

  TEST_CASE("double overloads") {
    std::vector<double> a = {1, 2, 3, 4}, b = {5, 6, 7, 8}, c(4);
    gemm_nn({a.data(), 2, 2}, {b.data(), 2, 2}, {c.data(), 2, 2}, false);
    CHECK(c == std::vector<double>{19, 22, 43, 50});
    CHECK(dot(std::span<const double>(a), std::span<const double>(b)) == 70.0);
    CHECK(squared_distance(std::span<const double>(a), std::span<const double>(b)) == 64.0);
  }

  TEST_CASE("avx2 variants are equivalent to the scalar reference") {
#if defined(DIFFCAP_HAVE_AVX2_KERNELS)
    if (!isa_supported(Isa::kAvx2)) {
      MESSAGE("CPU lacks AVX2/FMA; equivalence not exercised");
      return;
    }
    for (const auto& c : kCases) {
      CAPTURE(c.m);
      CAPTURE(c.k);
      CAPTURE(c.n);
      auto a = random_floats(c.m * c.k, 10 + c.n);
      auto b = random_floats(c.k * c.n, 20 + c.m);
      auto bt = random_floats(c.n * c.k, 30 + c.k);
      auto at = random_floats(c.k * c.m, 40 + c.k);
      for (bool acc : {false, true}) {
        auto init = random_floats(c.m * c.n, 50);
        auto s = init, v = init;
        scalar::gemm_nn({a.data(), c.m, c.k}, {b.data(), c.k, c.n}, {s.data(), c.m, c.n}, acc);
        avx2::gemm_nn({a.data(), c.m, c.k}, {b.data(), c.k, c.n}, {v.data(), c.m, c.n}, acc);
        for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(v[i] == doctest::Approx(s[i]).epsilon(1e-6));

        s = init, v = init;
        scalar::gemm_nt({a.data(), c.m, c.k}, {bt.data(), c.n, c.k}, {s.data(), c.m, c.n}, acc);
        avx2::gemm_nt({a.data(), c.m, c.k}, {bt.data(), c.n, c.k}, {v.data(), c.m, c.n}, acc);
        for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(v[i] == doctest::Approx(s[i]).epsilon(1e-6));

        s = init, v = init;
        scalar::gemm_tn({at.data(), c.k, c.m}, {b.data(), c.k, c.n}, {s.data(), c.m, c.n}, acc);
        avx2::gemm_tn({at.data(), c.k, c.m}, {b.data(), c.k, c.n}, {v.data(), c.m, c.n}, acc);
        for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(v[i] == doctest::Approx(s[i]).epsilon(1e-6));
      }
    }
    for (std::size_t n : {1u, 3u, 8u, 15u, 16u, 31u, 257u}) {
      auto x = random_floats(n, n);
      auto y = random_floats(n, n + 1);
      CHECK(avx2::dot(x, y) == doctest::Approx(scalar::dot(x, y)).epsilon(1e-12));
      CHECK(avx2::squared_distance(x, y) == doctest::Approx(scalar::squared_distance(x, y)).epsilon(1e-12));
      auto ys = y, yv = y;
      scalar::axpy(0.37f, x, ys);
      avx2::axpy(0.37f, x, yv);
      CHECK(ys == yv);
    }
#else
    MESSAGE("AVX2 kernels not compiled for this target");
#endif
  }
}
