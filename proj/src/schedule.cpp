#include "diffcap/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "diffcap/error.hpp"

namespace diffcap {
namespace {

constexpr double kMaxBeta = 0.999;
constexpr double kCosineOffset = 0.008;
constexpr double kSqrtOffset = 1e-4;
constexpr double kSqrtClampLow = 1e-5;
constexpr double kSqrtClampHigh = 1.0 - 1e-5;

void finish_from_betas(NoiseSchedule& s) {
  s.alphas.resize(s.betas.size());
  s.alpha_bars.resize(s.betas.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < s.betas.size(); ++i) {
    s.alphas[i] = 1.0 - s.betas[i];
    prod *= s.alphas[i];
    s.alpha_bars[i] = prod;
  }
}

// betas and alphas follow from a given alpha_bar curve, alpha_bar(0) = 1.
void finish_from_alpha_bars(NoiseSchedule& s) {
  s.betas.resize(s.alpha_bars.size());
  s.alphas.resize(s.alpha_bars.size());
  double prev = 1.0;
  for (std::size_t i = 0; i < s.alpha_bars.size(); ++i) {
    s.alphas[i] = s.alpha_bars[i] / prev;
    s.betas[i] = 1.0 - s.alphas[i];
    prev = s.alpha_bars[i];
  }
}

void check_step(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps) {
    throw ConfigError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(sched.steps) + "]");
  }
}

}  // namespace

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kLinear:
      return "linear";
    case ScheduleKind::kCosine:
      return "cosine";
    case ScheduleKind::kSqrt:
      return "sqrt";
  }
  return "linear";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  if (name == "sqrt") return ScheduleKind::kSqrt;
  throw ConfigError("unknown schedule kind '" + std::string(name) + "' (expected linear, cosine or sqrt)");
}

NoiseSchedule build_schedule(ScheduleKind kind, int steps) {
  if (steps < 2) throw ConfigError("schedule needs T >= 2, got " + std::to_string(steps));
  NoiseSchedule s;
  s.kind = kind;
  s.steps = steps;
  const auto n = static_cast<std::size_t>(steps);
  const double T = steps;
  switch (kind) {
    case ScheduleKind::kLinear: {
      const double rescale = 1000.0 / T;
      const double lo = 1e-4 * rescale, hi = 0.02 * rescale;
      s.betas.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double frac = static_cast<double>(i) / (T - 1.0);
        s.betas[i] = std::min(lo + (hi - lo) * frac, kMaxBeta);
      }
      finish_from_betas(s);
      break;
    }
    case ScheduleKind::kCosine: {
      auto f = [&](double t) {
        const double c = std::cos((t / T + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0);
        return c * c;
      };
      const double f0 = f(0.0);
      s.betas.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i + 1);
        const double ratio = (f(t) / f0) / (f(t - 1.0) / f0);
        s.betas[i] = std::min(1.0 - ratio, kMaxBeta);
      }
      finish_from_betas(s);
      break;
    }
    case ScheduleKind::kSqrt: {
      s.alpha_bars.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i + 1);
        const double raw = 1.0 - std::sqrt(t / T + kSqrtOffset);
        const double clamped = std::clamp(raw, kSqrtClampLow, kSqrtClampHigh);
        if (clamped != raw) s.clamped_steps.push_back(static_cast<int>(i + 1));
        s.alpha_bars[i] = clamped;
      }
      finish_from_alpha_bars(s);
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = i == 0 ? 1.0 : s.alpha_bars[i - 1];
    if (!(s.betas[i] > 0.0 && s.betas[i] < 1.0) || !(s.alpha_bars[i] < prev)) {
      throw ConfigError("schedule " + std::string(to_string(kind)) + " with T=" + std::to_string(steps) +
                        " is not strictly decreasing at t=" + std::to_string(i + 1));
    }
  }
  return s;
}

std::vector<float> q_sample(std::span<const float> x0, int t, std::span<const float> eps,
                            const NoiseSchedule& sched) {
  check_step(t, sched);
  if (x0.size() != eps.size()) {
    throw DimensionError("q_sample: x0 has " + std::to_string(x0.size()) + " elements, eps has " +
                         std::to_string(eps.size()));
  }
  const double a = std::sqrt(sched.alpha_bar(t));
  const double b = std::sqrt(1.0 - sched.alpha_bar(t));
  std::vector<float> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
  return out;
}

template <typename Real>
BasicVar<Real> q_sample(BasicVar<Real> x0, int t, BasicVar<Real> eps, const NoiseSchedule& sched) {
  check_step(t, sched);
  const auto a = static_cast<Real>(std::sqrt(sched.alpha_bar(t)));
  const auto b = static_cast<Real>(std::sqrt(1.0 - sched.alpha_bar(t)));
  return ops::add(ops::scale(x0, a), ops::scale(eps, b));
}

template BasicVar<float> q_sample(BasicVar<float>, int, BasicVar<float>, const NoiseSchedule&);
template BasicVar<double> q_sample(BasicVar<double>, int, BasicVar<double>, const NoiseSchedule&);

PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& sched) {
  check_step(t, sched);
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double beta = sched.beta(t);
  PosteriorCoefficients c;
  c.x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  c.xt = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  c.variance = beta * (1.0 - ab_prev) / (1.0 - ab);
  return c;
}

Posterior posterior_mean_var(std::span<const float> x0_hat, std::span<const float> x_t, int t,
                             const NoiseSchedule& sched) {
  if (x0_hat.size() != x_t.size()) {
    throw DimensionError("posterior_mean_var: x0_hat has " + std::to_string(x0_hat.size()) +
                         " elements, x_t has " + std::to_string(x_t.size()));
  }
  const auto c = posterior_coefficients(t, sched);
  Posterior p;
  p.variance = c.variance;
  p.mean.resize(x0_hat.size());
  for (std::size_t i = 0; i < x0_hat.size(); ++i)
    p.mean[i] = static_cast<float>(c.x0 * x0_hat[i] + c.xt * x_t[i]);
  return p;
}

double gaussian_kl(std::span<const float> mean_q, double var_q, std::span<const float> mean_p, double var_p) {
  if (mean_q.size() != mean_p.size()) throw DimensionError("gaussian_kl: mean lengths differ");
  double kl = 0.0;
  const double log_ratio = 0.5 * std::log(var_p / var_q);
  for (std::size_t i = 0; i < mean_q.size(); ++i) {
    const double d = static_cast<double>(mean_q[i]) - mean_p[i];
    kl += log_ratio + (var_q + d * d) / (2.0 * var_p) - 0.5;
  }
  return kl;
}

VlbTerms vlb_terms(std::span<const float> x0, const X0Predictor& predict_x0, const NoiseSchedule& sched,
                   Rng& rng) {
  VlbTerms out;
  const std::size_t n = x0.size();
  const int T = sched.steps;

  std::vector<float> prior_mean(n);
  const double sa = std::sqrt(sched.alpha_bar(T));
  for (std::size_t i = 0; i < n; ++i) prior_mean[i] = static_cast<float>(sa * x0[i]);
  std::vector<float> zeros(n, 0.0f);
  out.prior_kl = std::max(0.0, gaussian_kl(prior_mean, 1.0 - sched.alpha_bar(T), zeros, 1.0));

  std::vector<float> eps(n);
  for (int t = 2; t <= T; ++t) {
    fill_normal<float>(eps, rng);
    const auto x_t = q_sample(x0, t, eps, sched);
    const auto x0_hat = predict_x0(x_t, t);
    const auto truth = posterior_mean_var(x0, x_t, t, sched);
    const auto model = posterior_mean_var(x0_hat, x_t, t, sched);
    out.step_kls.push_back(gaussian_kl(truth.mean, truth.variance, model.mean, model.variance));
  }

  fill_normal<float>(eps, rng);
  const auto x_1 = q_sample(x0, 1, eps, sched);
  const auto x0_hat = predict_x0(x_1, 1);
  const double var = sched.beta(1);
  double nll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(x0[i]) - x0_hat[i];
    nll += 0.5 * std::log(2.0 * std::numbers::pi * var) + d * d / (2.0 * var);
  }
  out.decoder_nll = nll;
  return out;
}

}  // namespace diffcap
