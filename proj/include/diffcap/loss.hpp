#pragma once

#include <span>
#include <vector>

#include "diffcap/model.hpp"
#include "diffcap/rng.hpp"
#include "diffcap/schedule.hpp"
#include "diffcap/tokenizer.hpp"

namespace diffcap {

struct LossBreakdown {
  double l_simple = 0.0;
  double l_mse = 0.0;
  double l_word = 0.0;
  double l_total = 0.0;
  double masked_fraction = 0.0;
  /// Diffusion step drawn for l_simple.
  int t = 0;
  /// Every position was [UNK]; l_total is 0 and there is nothing to learn.
  bool all_masked = false;
};

template <typename Real>
struct LossGraph {
  /// Scalar on the tape; a constant zero when all_masked.
  BasicVar<Real> total;
  LossBreakdown breakdown;
};

struct LossOptions {
  /// Standard deviation of the Gaussian jitter added to the clean embeddings.
  double x0_jitter = 0.1;
};

/// Zeroes the per-position losses at [UNK] positions; others pass through
/// unchanged.
std::vector<double> apply_unk_mask(std::span<const double> per_position, const TokenSeq& seq);

/// Masked objective from already computed network outputs:
///   l_simple = masked mean over positions of ||x0_hat - x0||^2
///   l_mse    = masked mean of ||x0_hat_t1 - emb||^2
///   l_word   = masked mean of cross-entropy(lm_logits(x0_hat), ids)
/// Each mean is over non-[UNK] positions.
template <typename Real>
LossGraph<Real> masked_objective(BasicDiffCapModel<Real>& model, BasicVar<Real> emb, BasicVar<Real> x0,
                                 BasicVar<Real> x0_hat, BasicVar<Real> x0_hat_t1, const TokenSeq& seq);

/// Full training objective for one (sequence, condition) pair: jittered
/// embeddings, one uniformly drawn step for l_simple, a fresh t = 1 draw for
/// l_mse, and the LM-head cross entropy on the x0 prediction.
template <typename Real>
LossGraph<Real> training_loss(BasicTape<Real>& tape, BasicDiffCapModel<Real>& model, const NoiseSchedule& sched,
                              const TokenSeq& seq, std::span<const Real> cond, Rng& rng,
                              const LossOptions& options = {});

}  // namespace diffcap
