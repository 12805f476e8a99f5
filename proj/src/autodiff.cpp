#include "diffcap/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "diffcap/error.hpp"

namespace diffcap {

template <typename Real>
BasicVar<Real> BasicTape<Real>::constant(Tensor value) {
  value.set_requires_grad(false);
  storage_.push_back(std::move(value));
  return Var(this, &storage_.back());
}

template <typename Real>
BasicVar<Real> BasicTape<Real>::constant(Shape shape, std::vector<Real> data) {
  return constant(Tensor(std::move(shape), std::move(data)));
}

template <typename Real>
BasicVar<Real> BasicTape<Real>::emplace(Shape shape, bool requires_grad) {
  storage_.emplace_back(std::move(shape), record_ && requires_grad);
  return Var(this, &storage_.back());
}

template <typename Real>
void BasicTape<Real>::record(std::function<void()> fn) {
  if (record_) backward_.push_back(std::move(fn));
}

template <typename Real>
void BasicTape<Real>::backward(Var loss) {
  if (loss.get() == nullptr || &loss.tape() != this) throw UsageError("backward: loss is not on this tape");
  if (loss.size() != 1) throw UsageError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) throw UsageError("backward: loss does not depend on any parameter");
  loss.value().grad()[0] = Real(1);
  for (auto it = backward_.rbegin(); it != backward_.rend(); ++it) (*it)();
}

template class BasicTape<float>;
template class BasicTape<double>;

namespace ops {
namespace {

template <typename Real>
[[noreturn]] void shape_error(const char* op, const BasicVar<Real>& a, const BasicVar<Real>& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
}

template <typename Real>
bool same_shape(const BasicVar<Real>& a, const BasicVar<Real>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

template <typename Real>
BasicVar<Real> make_like(BasicVar<Real> src, Shape shape, bool requires_grad) {
  return src.tape().emplace(std::move(shape), requires_grad);
}

}  // namespace

template <typename Real>
BasicVar<Real> matmul(BasicVar<Real> a, BasicVar<Real> b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  auto out = make_like(a, Shape{a.rows(), b.cols()}, a.requires_grad() || b.requires_grad());
  kernels::gemm_nn(a.value().view(), b.value().view(), out.value().mut_view(), false);
  if (out.requires_grad()) {
    auto* A = a.get();
    auto* B = b.get();
    auto* C = out.get();
    a.tape().record([A, B, C] {
      if (!C->has_grad()) return;
      kernels::MatView<const Real> dc{C->grad().data(), C->rows(), C->cols()};
      if (A->requires_grad()) kernels::gemm_nt(dc, B->view(), {A->grad().data(), A->rows(), A->cols()}, true);
      if (B->requires_grad()) kernels::gemm_tn(A->view(), dc, {B->grad().data(), B->rows(), B->cols()}, true);
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> add(BasicVar<Real> a, BasicVar<Real> b) {
  if (a.size() != b.size() || !same_shape(a, b)) shape_error("add", a, b);
  auto out = make_like(a, a.shape(), a.requires_grad() || b.requires_grad());
  auto o = out.value().data();
  auto x = a.value().data();
  auto y = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (out.requires_grad()) {
    auto *A = a.get(), *B = b.get(), *C = out.get();
    a.tape().record([A, B, C] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      if (A->requires_grad()) kernels::axpy(Real(1), dc, A->grad());
      if (B->requires_grad()) kernels::axpy(Real(1), dc, B->grad());
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> add_row(BasicVar<Real> a, BasicVar<Real> row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a, row);
  auto out = make_like(a, a.shape(), a.requires_grad() || row.requires_grad());
  const std::size_t m = a.rows(), n = a.cols();
  auto& O = out.value();
  const auto& X = a.value();
  auto r = row.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) O.at(i, j) = X.at(i, j) + r[j];
  if (out.requires_grad()) {
    auto *A = a.get(), *R = row.get(), *C = out.get();
    a.tape().record([A, R, C, m, n] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      if (A->requires_grad()) kernels::axpy(Real(1), dc, A->grad());
      if (R->requires_grad()) {
        auto dr = R->grad();
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += dc[i * n + j];
          dr[j] += static_cast<Real>(s);
        }
      }
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> linear(BasicVar<Real> x, BasicVar<Real> weight, BasicVar<Real> bias) {
  return add_row(matmul(x, weight), bias);
}

template <typename Real>
BasicVar<Real> mul(BasicVar<Real> a, BasicVar<Real> b) {
  if (a.size() != b.size() || !same_shape(a, b)) shape_error("mul", a, b);
  auto out = make_like(a, a.shape(), a.requires_grad() || b.requires_grad());
  auto o = out.value().data();
  auto x = a.value().data();
  auto y = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (out.requires_grad()) {
    auto *A = a.get(), *B = b.get(), *C = out.get();
    a.tape().record([A, B, C] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      if (A->requires_grad()) {
        auto da = A->grad();
        auto y = B->data();
        for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * y[i];
      }
      if (B->requires_grad()) {
        auto db = B->grad();
        auto x = A->data();
        for (std::size_t i = 0; i < dc.size(); ++i) db[i] += dc[i] * x[i];
      }
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> scale(BasicVar<Real> a, Real s) {
  auto out = make_like(a, a.shape(), a.requires_grad());
  auto o = out.value().data();
  auto x = a.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * s;
  if (out.requires_grad()) {
    auto *A = a.get(), *C = out.get();
    a.tape().record([A, C, s] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      kernels::axpy(s, dc, A->grad());
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> concat_rows(std::span<const BasicVar<Real>> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != n) shape_error("concat_rows", parts[0], p);
    m += p.rows();
    rg = rg || p.requires_grad();
  }
  auto out = make_like(parts[0], Shape{m, n}, rg);
  auto o = out.value().data();
  std::size_t off = 0;
  for (const auto& p : parts) {
    auto src = p.value().data();
    std::copy(src.begin(), src.end(), o.begin() + static_cast<std::ptrdiff_t>(off));
    off += src.size();
  }
  if (out.requires_grad()) {
    std::vector<BasicTensor<Real>*> srcs;
    for (const auto& p : parts) srcs.push_back(p.get());
    auto* C = out.get();
    parts[0].tape().record([srcs, C] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      std::size_t off = 0;
      for (auto* s : srcs) {
        if (s->requires_grad()) kernels::axpy(Real(1), dc.subspan(off, s->size()), s->grad());
        off += s->size();
      }
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> slice_rows(BasicVar<Real> a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for shape " + shape_string(a.shape()));
  }
  const std::size_t n = a.cols();
  auto out = make_like(a, Shape{count, n}, a.requires_grad());
  auto src = a.value().data().subspan(begin * n, count * n);
  std::copy(src.begin(), src.end(), out.value().data().begin());
  if (out.requires_grad()) {
    auto *A = a.get(), *C = out.get();
    a.tape().record([A, C, begin, count, n] {
      if (!C->has_grad()) return;
      kernels::axpy(Real(1), std::span<const Real>(C->grad()), A->grad().subspan(begin * n, count * n));
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> concat_cols(std::span<const BasicVar<Real>> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != m) shape_error("concat_cols", parts[0], p);
    n += p.cols();
    rg = rg || p.requires_grad();
  }
  auto out = make_like(parts[0], Shape{m, n}, rg);
  auto& O = out.value();
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < m; ++i) {
      auto r = p.value().row(i);
      std::copy(r.begin(), r.end(), O.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    }
    off += p.cols();
  }
  if (out.requires_grad()) {
    std::vector<BasicTensor<Real>*> srcs;
    for (const auto& p : parts) srcs.push_back(p.get());
    auto* C = out.get();
    parts[0].tape().record([srcs, C, m, n] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      std::size_t off = 0;
      for (auto* s : srcs) {
        const std::size_t w = s->cols();
        if (s->requires_grad()) {
          auto ds = s->grad();
          for (std::size_t i = 0; i < m; ++i) kernels::axpy(Real(1), dc.subspan(i * n + off, w), ds.subspan(i * w, w));
        }
        off += w;
      }
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> slice_cols(BasicVar<Real> a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) {
    throw DimensionError("slice_cols: cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for shape " + shape_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  auto out = make_like(a, Shape{m, count}, a.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    auto r = a.value().row(i).subspan(begin, count);
    std::copy(r.begin(), r.end(), out.value().row(i).begin());
  }
  if (out.requires_grad()) {
    auto *A = a.get(), *C = out.get();
    a.tape().record([A, C, begin, count, m, n] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      auto da = A->grad();
      for (std::size_t i = 0; i < m; ++i)
        kernels::axpy(Real(1), dc.subspan(i * count, count), da.subspan(i * n + begin, count));
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> transpose(BasicVar<Real> a) {
  const std::size_t m = a.rows(), n = a.cols();
  auto out = make_like(a, Shape{n, m}, a.requires_grad());
  auto& O = out.value();
  const auto& X = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) O.at(j, i) = X.at(i, j);
  if (out.requires_grad()) {
    auto *A = a.get(), *C = out.get();
    a.tape().record([A, C, m, n] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      auto da = A->grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) da[i * n + j] += dc[j * m + i];
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> softmax(BasicVar<Real> a) {
  const std::size_t m = a.rows(), n = a.cols();
  auto out = make_like(a, a.shape(), a.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    auto x = a.value().row(i);
    auto y = out.value().row(i);
    const Real mx = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(static_cast<double>(x[j] - mx));
      y[j] = static_cast<Real>(e);
      s += e;
    }
    for (std::size_t j = 0; j < n; ++j) y[j] = static_cast<Real>(static_cast<double>(y[j]) / s);
  }
  if (out.requires_grad()) {
    auto *A = a.get(), *C = out.get();
    a.tape().record([A, C, m, n] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      auto da = A->grad();
      for (std::size_t i = 0; i < m; ++i) {
        auto y = C->row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += static_cast<double>(dc[i * n + j]) * y[j];
        for (std::size_t j = 0; j < n; ++j)
          da[i * n + j] += static_cast<Real>(static_cast<double>(y[j]) * (static_cast<double>(dc[i * n + j]) - s));
      }
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> layer_norm(BasicVar<Real> x, BasicVar<Real> gain, BasicVar<Real> bias, Real eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n) shape_error("layer_norm", x, gain);
  if (bias.size() != n) shape_error("layer_norm", x, bias);
  auto out = make_like(x, x.shape(), x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  std::vector<Real> xhat(m * n);
  std::vector<Real> inv_std(m);
  auto g = gain.value().data();
  auto b = bias.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    auto r = x.value().row(i);
    double mean = 0.0;
    for (auto v : r) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (auto v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[i] = static_cast<Real>(is);
    auto y = out.value().row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (r[j] - mean) * is;
      xhat[i * n + j] = static_cast<Real>(h);
      y[j] = static_cast<Real>(h * g[j] + b[j]);
    }
  }
  if (out.requires_grad()) {
    auto *X = x.get(), *G = gain.get(), *B = bias.get(), *C = out.get();
    x.tape().record([X, G, B, C, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      auto g = G->data();
      if (G->requires_grad() || B->requires_grad()) {
        for (std::size_t j = 0; j < n; ++j) {
          double sg = 0.0, sb = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            sg += static_cast<double>(dc[i * n + j]) * xhat[i * n + j];
            sb += dc[i * n + j];
          }
          if (G->requires_grad()) G->grad()[j] += static_cast<Real>(sg);
          if (B->requires_grad()) B->grad()[j] += static_cast<Real>(sb);
        }
      }
      if (X->requires_grad()) {
        auto dx = X->grad();
        for (std::size_t i = 0; i < m; ++i) {
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(dc[i * n + j]) * g[j];
            mean_d += d;
            mean_dh += d * xhat[i * n + j];
          }
          mean_d /= static_cast<double>(n);
          mean_dh /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(dc[i * n + j]) * g[j];
            dx[i * n + j] += static_cast<Real>(inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dh));
          }
        }
      }
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> gelu(BasicVar<Real> x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  auto out = make_like(x, x.shape(), x.requires_grad());
  auto in = x.value().data();
  auto o = out.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = in[i];
    o[i] = static_cast<Real>(0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))));
  }
  if (out.requires_grad()) {
    auto *X = x.get(), *C = out.get();
    x.tape().record([X, C] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      auto in = X->data();
      auto dx = X->grad();
      for (std::size_t i = 0; i < dc.size(); ++i) {
        const double v = in[i];
        const double u = kC * (v + kA * v * v * v);
        const double th = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * kA * v * v);
        const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
        dx[i] += static_cast<Real>(dc[i] * d);
      }
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> embedding_gather(BasicVar<Real> table, std::span<const int> ids) {
  const std::size_t v = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw DimensionError("embedding_gather: id " + std::to_string(id) + " out of range for table " +
                           shape_string(table.shape()));
    }
  }
  auto out = make_like(table, Shape{ids.size(), d}, table.requires_grad());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto r = table.value().row(static_cast<std::size_t>(ids[i]));
    std::copy(r.begin(), r.end(), out.value().row(i).begin());
  }
  if (out.requires_grad()) {
    auto *E = table.get(), *C = out.get();
    std::vector<int> idv(ids.begin(), ids.end());
    table.tape().record([E, C, d, idv = std::move(idv)] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      auto de = E->grad();
      for (std::size_t i = 0; i < idv.size(); ++i)
        kernels::axpy(Real(1), dc.subspan(i * d, d), de.subspan(static_cast<std::size_t>(idv[i]) * d, d));
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> sum(BasicVar<Real> a) {
  auto out = make_like(a, Shape{}, a.requires_grad());
  double s = 0.0;
  for (auto v : a.value().data()) s += v;
  out.value().data()[0] = static_cast<Real>(s);
  if (out.requires_grad()) {
    auto *A = a.get(), *C = out.get();
    a.tape().record([A, C] {
      if (!C->has_grad()) return;
      const Real g = C->grad()[0];
      for (auto& v : A->grad()) v += g;
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> row_squared_error(BasicVar<Real> a, BasicVar<Real> b) {
  if (a.size() != b.size() || !same_shape(a, b)) shape_error("row_squared_error", a, b);
  const std::size_t m = a.rows(), n = a.cols();
  auto out = make_like(a, Shape{m}, a.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < m; ++i)
    out.value().data()[i] = static_cast<Real>(kernels::squared_distance(a.value().row(i), b.value().row(i)));
  if (out.requires_grad()) {
    auto *A = a.get(), *B = b.get(), *C = out.get();
    a.tape().record([A, B, C, m, n] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      auto x = A->data();
      auto y = B->data();
      for (std::size_t i = 0; i < m; ++i) {
        const Real g = Real(2) * dc[i];
        if (g == Real(0)) continue;
        if (A->requires_grad()) {
          auto da = A->grad();
          for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g * (x[i * n + j] - y[i * n + j]);
        }
        if (B->requires_grad()) {
          auto db = B->grad();
          for (std::size_t j = 0; j < n; ++j) db[i * n + j] -= g * (x[i * n + j] - y[i * n + j]);
        }
      }
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> mean_square_error(BasicVar<Real> a, BasicVar<Real> b) {
  return scale(sum(row_squared_error(a, b)), Real(1) / static_cast<Real>(a.size()));
}

template <typename Real>
BasicVar<Real> row_cross_entropy(BasicVar<Real> logits, std::span<const int> targets) {
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("row_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(logits.shape()));
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= v)
      throw DimensionError("row_cross_entropy: target " + std::to_string(t) + " out of range for logits " +
                           shape_string(logits.shape()));
  }
  auto out = make_like(logits, Shape{m}, logits.requires_grad());
  std::vector<Real> probs(m * v);
  for (std::size_t i = 0; i < m; ++i) {
    auto z = logits.value().row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(z[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] = static_cast<Real>(std::exp(z[j] - lse));
    out.value().data()[i] = static_cast<Real>(lse - z[static_cast<std::size_t>(targets[i])]);
  }
  if (out.requires_grad()) {
    auto *Z = logits.get(), *C = out.get();
    std::vector<int> tv(targets.begin(), targets.end());
    logits.tape().record([Z, C, m, v, probs = std::move(probs), tv = std::move(tv)] {
      if (!C->has_grad()) return;
      std::span<const Real> dc = C->grad();
      auto dz = Z->grad();
      for (std::size_t i = 0; i < m; ++i) {
        if (dc[i] == Real(0)) continue;
        for (std::size_t j = 0; j < v; ++j) dz[i * v + j] += dc[i] * probs[i * v + j];
        dz[i * v + static_cast<std::size_t>(tv[i])] -= dc[i];
      }
    });
  }
  return out;
}

template <typename Real>
BasicVar<Real> cross_entropy_with_logits(BasicVar<Real> logits, std::span<const int> targets) {
  return scale(sum(row_cross_entropy(logits, targets)), Real(1) / static_cast<Real>(logits.rows()));
}

#define DIFFCAP_INSTANTIATE_OPS(R)                                                              \
  template BasicVar<R> matmul(BasicVar<R>, BasicVar<R>);                                       \
  template BasicVar<R> add(BasicVar<R>, BasicVar<R>);                                          \
  template BasicVar<R> add_row(BasicVar<R>, BasicVar<R>);                                      \
  template BasicVar<R> linear(BasicVar<R>, BasicVar<R>, BasicVar<R>);                          \
  template BasicVar<R> mul(BasicVar<R>, BasicVar<R>);                                          \
  template BasicVar<R> scale(BasicVar<R>, R);                                                  \
  template BasicVar<R> concat_rows(std::span<const BasicVar<R>>);                              \
  template BasicVar<R> slice_rows(BasicVar<R>, std::size_t, std::size_t);                      \
  template BasicVar<R> concat_cols(std::span<const BasicVar<R>>);                              \
  template BasicVar<R> slice_cols(BasicVar<R>, std::size_t, std::size_t);                      \
  template BasicVar<R> transpose(BasicVar<R>);                                                 \
  template BasicVar<R> softmax(BasicVar<R>);                                                   \
  template BasicVar<R> layer_norm(BasicVar<R>, BasicVar<R>, BasicVar<R>, R);                   \
  template BasicVar<R> gelu(BasicVar<R>);                                                      \
  template BasicVar<R> embedding_gather(BasicVar<R>, std::span<const int>);                    \
  template BasicVar<R> sum(BasicVar<R>);                                                       \
  template BasicVar<R> mean_square_error(BasicVar<R>, BasicVar<R>);                            \
  template BasicVar<R> row_squared_error(BasicVar<R>, BasicVar<R>);                            \
  template BasicVar<R> row_cross_entropy(BasicVar<R>, std::span<const int>);                   \
  template BasicVar<R> cross_entropy_with_logits(BasicVar<R>, std::span<const int>);

DIFFCAP_INSTANTIATE_OPS(float)
DIFFCAP_INSTANTIATE_OPS(double)

#undef DIFFCAP_INSTANTIATE_OPS

}  // namespace ops
}  // namespace diffcap
