#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffcap/autodiff.hpp"
#include "diffcap/rng.hpp"

namespace diffcap {

enum class ScheduleKind { kLinear, kCosine, kSqrt };

std::string_view to_string(ScheduleKind kind);
/// Throws ConfigError on an unknown name.
ScheduleKind parse_schedule_kind(std::string_view name);

/// Per-step noise fractions for steps t = 1..T. Arrays are indexed by t - 1;
/// the accessors take the 1-based step and treat alpha_bar(0) as 1.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::kLinear;
  int steps = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  /// Steps whose alpha_bar was clamped (sqrt schedule only).
  std::vector<int> clamped_steps;

  double beta(int t) const { return betas[static_cast<std::size_t>(t - 1)]; }
  double alpha(int t) const { return alphas[static_cast<std::size_t>(t - 1)]; }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(t - 1)]; }
  double snr(int t) const { return alpha_bar(t) / (1.0 - alpha_bar(t)); }
};

/// linear: betas spaced from 1e-4 to 0.02, rescaled by 1000/T so the end
/// point is always near-pure noise. cosine: s = 0.008, betas clipped at
/// 0.999. sqrt: alpha_bar(t) = 1 - sqrt(t/T + 1e-4) clamped to
/// [1e-5, 1 - 1e-5]. Throws ConfigError for T < 2.
NoiseSchedule build_schedule(ScheduleKind kind, int steps);

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
std::vector<float> q_sample(std::span<const float> x0, int t, std::span<const float> eps,
                            const NoiseSchedule& sched);

/// Differentiable variant used by the training loss.
template <typename Real>
BasicVar<Real> q_sample(BasicVar<Real> x0, int t, BasicVar<Real> eps, const NoiseSchedule& sched);

struct Posterior {
  std::vector<float> mean;
  double variance = 0.0;
};

struct PosteriorCoefficients {
  double x0 = 0.0;
  double xt = 0.0;
  double variance = 0.0;
};

PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& sched);

/// Mean and variance of q(x_{t-1} | x_t, x0 = x0_hat).
Posterior posterior_mean_var(std::span<const float> x0_hat, std::span<const float> x_t, int t,
                             const NoiseSchedule& sched);

/// Terms of the variational bound, reported as diagnostics (nats, summed over
/// elements). prior_kl = KL(q(x_T|x0) || N(0, I)); step_kls[i] is the KL for
/// step t = i + 2; decoder_nll = -log N(x0; x0_hat(x_1, 1), beta_1 I).
struct VlbTerms {
  double prior_kl = 0.0;
  std::vector<double> step_kls;
  double decoder_nll = 0.0;
};

using X0Predictor = std::function<std::vector<float>(std::span<const float> x_t, int t)>;

/// Draws one x_t ~ q(x_t | x0) per step and evaluates every term with the
/// model's x0 prediction; never used for training.
VlbTerms vlb_terms(std::span<const float> x0, const X0Predictor& predict_x0, const NoiseSchedule& sched,
                   Rng& rng);

/// Closed-form KL between diagonal Gaussians with scalar variances, summed over
/// the elements.
double gaussian_kl(std::span<const float> mean_q, double var_q, std::span<const float> mean_p, double var_p);

}  // namespace diffcap
