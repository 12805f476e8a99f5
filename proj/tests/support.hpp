#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "diffcap/autodiff.hpp"

namespace diffcap::testing {

using TensorD = BasicTensor<double>;
using VarD = BasicVar<double>;
using TapeD = BasicTape<double>;

inline TensorD random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  TensorD t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline Tensor random_tensor_f(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<float>(dist(rng));
  return t;
}

/// |a - b| / max(|a|, |b|), or 0 when both are below `floor`.
inline double relative_error(double a, double b, double floor = 1e-6) {
  const double m = std::max(std::abs(a), std::abs(b));
  if (m <= floor) return 0.0;
  return std::abs(a - b) / m;
}

using ScalarFn = std::function<VarD(TapeD&, std::vector<VarD>&)>;

/// Largest relative error between analytic gradients and central differences
/// with step h over every element of every input.
inline double gradient_check(std::vector<TensorD*> inputs, const ScalarFn& f, double h = 1e-3) {
  for (auto* t : inputs) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  {
    TapeD tape;
    std::vector<VarD> vars;
    for (auto* t : inputs) vars.push_back(tape.watch(*t));
    tape.backward(f(tape, vars));
  }
  auto eval = [&] {
    TapeD tape(false);
    std::vector<VarD> vars;
    for (auto* t : inputs) vars.push_back(tape.watch(*t));
    return f(tape, vars).value().data()[0];
  };
  double worst = 0.0;
  for (auto* t : inputs) {
    std::vector<double> analytic(t->grad().begin(), t->grad().end());
    auto data = t->data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = eval();
      data[i] = saved - h;
      const double down = eval();
      data[i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

/// Fixed random weighting that turns any tensor output into a scalar.
inline VarD weighted_sum(TapeD& tape, VarD out, std::uint64_t seed = 99) {
  auto w = tape.constant(random_tensor(out.shape(), seed));
  return ops::sum(ops::mul(out, w));
}

/// Scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("diffcap_test_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace diffcap::testing
