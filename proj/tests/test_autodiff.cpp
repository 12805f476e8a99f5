#include <doctest.h>

#include <cmath>
#include <string>

#include "diffcap/autodiff.hpp"
#include "diffcap/error.hpp"
#include "support.hpp"

using namespace diffcap;
using namespace diffcap::testing;

TEST_SUITE("autodiff") {
  TEST_CASE("matmul by the identity returns the input") {
    Tape tape;
    auto eye = tape.constant(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto x = tape.constant(random_tensor_f({3, 4}, 1));
    auto y = ops::matmul(eye, x);
    CHECK(y.shape() == Shape{3, 4});
    for (std::size_t i = 0; i < 12; ++i) CHECK(y.value().data()[i] == x.value().data()[i]);
  }

  TEST_CASE("softmax of zeros is uniform") {
    Tape tape;
    auto y = ops::softmax(tape.constant(Shape{4}, {0, 0, 0, 0}));
    for (float v : y.value().data()) CHECK(v == doctest::Approx(0.25));
  }

  TEST_CASE("gradient of sum is all ones") {
    Tensor x = random_tensor_f({2, 3}, 2);
    x.set_requires_grad(true);
    Tape tape;
    tape.backward(ops::sum(tape.watch(x)));
    for (float g : x.grad()) CHECK(g == 1.0f);
  }

  TEST_CASE("mse of a tensor with itself has zero gradient") {
    Tensor x = random_tensor_f({2, 3}, 3);
    x.set_requires_grad(true);
    Tape tape;
    auto v = tape.watch(x);
    tape.backward(ops::mean_square_error(v, v));
    for (float g : x.grad()) CHECK(g == 0.0f);
  }

  TEST_CASE("gradients accumulate across backward calls") {
    Tensor x = random_tensor_f({3}, 4);
    x.set_requires_grad(true);
    for (int k = 0; k < 2; ++k) {
      Tape tape;
      tape.backward(ops::sum(tape.watch(x)));
    }
    for (float g : x.grad()) CHECK(g == 2.0f);
    x.zero_grad();
    for (float g : x.grad()) CHECK(g == 0.0f);
  }

  TEST_CASE("backward rejects non-scalar, foreign and constant losses") {
    Tensor x = random_tensor_f({2, 2}, 5);
    x.set_requires_grad(true);
    Tape tape;
    auto v = tape.watch(x);
    CHECK_THROWS_AS(tape.backward(v), UsageError);
    Tape other;
    auto s = ops::sum(other.watch(x));
    CHECK_THROWS_AS(tape.backward(s), UsageError);
    CHECK_THROWS_AS(tape.backward(ops::sum(tape.constant(Shape{2}, {1, 2}))), UsageError);
  }

  TEST_CASE("shape mismatch names both shapes") {
    Tape tape;
    auto a = tape.constant(Shape{2, 3}, std::vector<float>(6, 1.0f));
    auto b = tape.constant(Shape{4, 5}, std::vector<float>(20, 1.0f));
    try {
      ops::matmul(a, b);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2, 3]") != std::string::npos);
      CHECK(msg.find("[4, 5]") != std::string::npos);
    }
    CHECK_THROWS_AS(ops::add(a, b), DimensionError);
    CHECK_THROWS_AS(ops::mul(a, b), DimensionError);
  }

  TEST_CASE("inference tape records nothing") {
    Tensor x = random_tensor_f({2, 2}, 6);
    x.set_requires_grad(true);
    Tape tape(false);
    auto y = ops::gelu(ops::matmul(tape.watch(x), tape.watch(x)));
    CHECK(tape.node_count() == 0);
    CHECK_FALSE(y.requires_grad());
  }

  TEST_CASE("cross entropy gradient on five logits matches central differences") {
    TensorD logits = random_tensor({1, 5}, 7);
    const std::vector<int> target = {3};
    const double err = gradient_check({&logits}, [&](TapeD&, std::vector<VarD>& v) {
      return ops::cross_entropy_with_logits(v[0], std::span<const int>(target));
    });
    CHECK(err < 1e-3);
  }

  TEST_CASE("every primitive passes a finite-difference check") {
    TensorD a = random_tensor({3, 4}, 11);
    TensorD b = random_tensor({4, 5}, 12);
    TensorD c = random_tensor({3, 4}, 13);
    TensorD row = random_tensor({4}, 14);
    TensorD gain = random_tensor({4}, 15);
    TensorD bias = random_tensor({4}, 16);
    TensorD bias5 = random_tensor({5}, 18);
    TensorD table = random_tensor({6, 3}, 17);
    const std::vector<int> ids = {5, 0, 5, 2};
    const std::vector<int> targets = {1, 3, 0};

    auto check = [](const char* name, std::vector<TensorD*> inputs, const ScalarFn& f) {
      CAPTURE(name);
      CHECK(gradient_check(std::move(inputs), f) < 1e-3);
    };
    check("matmul", {&a, &b}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::matmul(v[0], v[1])); });
    check("add", {&a, &c}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::add(v[0], v[1])); });
    check("add_row", {&a, &row}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::add_row(v[0], v[1])); });
    check("linear", {&a, &b, &bias5},
          [](TapeD& t, auto& v) { return weighted_sum(t, ops::linear(v[0], v[1], v[2])); });
    check("mul", {&a, &c}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::mul(v[0], v[1])); });
    check("scale", {&a}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::scale(v[0], -1.7)); });
    check("concat_rows", {&a, &c}, [](TapeD& t, auto& v) {
      return weighted_sum(t, ops::concat_rows<double>(std::vector<VarD>{v[0], v[1]}));
    });
    check("slice_rows", {&a}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::slice_rows(v[0], 1, 2)); });
    check("concat_cols", {&a, &c}, [](TapeD& t, auto& v) {
      return weighted_sum(t, ops::concat_cols<double>(std::vector<VarD>{v[0], v[1]}));
    });
    check("slice_cols", {&a}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::slice_cols(v[0], 1, 2)); });
    check("transpose", {&a}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::transpose(v[0])); });
    check("softmax", {&a}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::softmax(v[0])); });
    check("layer_norm", {&a, &gain, &bias},
          [](TapeD& t, auto& v) { return weighted_sum(t, ops::layer_norm(v[0], v[1], v[2])); });
    check("gelu", {&a}, [](TapeD& t, auto& v) { return weighted_sum(t, ops::gelu(v[0])); });
    check("embedding_gather", {&table}, [&](TapeD& t, auto& v) {
      return weighted_sum(t, ops::embedding_gather(v[0], std::span<const int>(ids)));
    });
    check("sum", {&a}, [](TapeD&, auto& v) { return ops::sum(v[0]); });
    check("mean_square_error", {&a, &c}, [](TapeD&, auto& v) { return ops::mean_square_error(v[0], v[1]); });
    check("row_squared_error", {&a, &c},
          [](TapeD& t, auto& v) { return weighted_sum(t, ops::row_squared_error(v[0], v[1])); });
    check("row_cross_entropy", {&a}, [&](TapeD& t, auto& v) {
      return weighted_sum(t, ops::row_cross_entropy(v[0], std::span<const int>(targets)));
    });
    check("cross_entropy_with_logits", {&a}, [&](TapeD&, auto& v) {
      return ops::cross_entropy_with_logits(v[0], std::span<const int>(targets));
    });
  }

  TEST_CASE("embedding gather sends gradient only to gathered rows") {
    Tensor table = random_tensor_f({5, 2}, 21);
    table.set_requires_grad(true);
    const std::vector<int> ids = {1, 3, 1};
    Tape tape;
    tape.backward(ops::sum(ops::embedding_gather(tape.watch(table), std::span<const int>(ids))));
    const std::vector<float> expect = {0, 0, 2, 2, 0, 0, 1, 1, 0, 0};
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(table.grad()[i] == expect[i]);
  }

  TEST_CASE("embedding gather rejects out-of-range ids") {
    Tape tape;
    auto table = tape.constant(Shape{3, 2}, std::vector<float>(6, 0.0f));
    const std::vector<int> ids = {3};
    CHECK_THROWS_AS(ops::embedding_gather(table, std::span<const int>(ids)), DimensionError);
  }

  TEST_CASE("forward values are bit-identical across runs") {
    auto run = [] {
      Tensor a = random_tensor_f({8, 16}, 31);
      Tensor b = random_tensor_f({16, 8}, 32);
      Tape tape(false);
      auto y = ops::softmax(ops::gelu(ops::matmul(tape.watch(a), tape.watch(b))));
      return std::vector<float>(y.value().data().begin(), y.value().data().end());
    };
    CHECK(run() == run());
  }
}
