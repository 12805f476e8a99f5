#include "diffcap/loss.hpp"

#include <random>

#include "diffcap/error.hpp"

namespace diffcap {

std::vector<double> apply_unk_mask(std::span<const double> per_position, const TokenSeq& seq) {
  if (per_position.size() != seq.ids.size()) {
    throw DimensionError("apply_unk_mask: " + std::to_string(per_position.size()) + " losses for a sequence of " +
                         std::to_string(seq.ids.size()));
  }
  std::vector<double> out(per_position.begin(), per_position.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (seq.ids[i] == kUnkId) out[i] = 0.0;
  return out;
}

namespace {

template <typename Real>
BasicVar<Real> masked_mean(BasicVar<Real> per_position, const std::vector<Real>& mask, Real inv_count) {
  auto& tape = per_position.tape();
  auto m = tape.constant(Shape{mask.size()}, mask);
  return ops::scale(ops::sum(ops::mul(per_position, m)), inv_count);
}

}  // namespace

template <typename Real>
LossGraph<Real> masked_objective(BasicDiffCapModel<Real>& model, BasicVar<Real> emb, BasicVar<Real> x0,
                                 BasicVar<Real> x0_hat, BasicVar<Real> x0_hat_t1, const TokenSeq& seq) {
  auto& tape = x0.tape();
  const std::size_t L = seq.ids.size();
  std::vector<Real> mask(L);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < L; ++i) {
    mask[i] = seq.ids[i] == kUnkId ? Real(0) : Real(1);
    kept += seq.ids[i] == kUnkId ? 0 : 1;
  }
  LossGraph<Real> g;
  g.breakdown.masked_fraction = 1.0 - static_cast<double>(kept) / static_cast<double>(L);
  if (kept == 0) {
    g.breakdown.all_masked = true;
    g.total = tape.constant(Shape{}, std::vector<Real>{Real(0)});
    return g;
  }
  const Real inv = Real(1) / static_cast<Real>(kept);
  auto l_simple = masked_mean(ops::row_squared_error(x0_hat, x0), mask, inv);
  auto l_mse = masked_mean(ops::row_squared_error(x0_hat_t1, emb), mask, inv);
  auto l_word = masked_mean(ops::row_cross_entropy(model.lm_logits(tape, x0_hat), seq.ids), mask, inv);
  g.total = ops::add(ops::add(l_simple, l_mse), l_word);
  g.breakdown.l_simple = l_simple.value().data()[0];
  g.breakdown.l_mse = l_mse.value().data()[0];
  g.breakdown.l_word = l_word.value().data()[0];
  g.breakdown.l_total = g.total.value().data()[0];
  return g;
}

template <typename Real>
LossGraph<Real> training_loss(BasicTape<Real>& tape, BasicDiffCapModel<Real>& model, const NoiseSchedule& sched,
                              const TokenSeq& seq, std::span<const Real> cond, Rng& rng, const LossOptions& options) {
  const auto& cfg = model.config();
  if (seq.ids.size() != static_cast<std::size_t>(cfg.seq_len)) {
    throw DimensionError("training_loss: sequence length " + std::to_string(seq.ids.size()) + ", model expects " +
                         std::to_string(cfg.seq_len));
  }
  if (sched.steps != cfg.diffusion_steps) {
    throw ConfigError("training_loss: schedule has T=" + std::to_string(sched.steps) + ", model expects " +
                      std::to_string(cfg.diffusion_steps));
  }
  const Shape shape{static_cast<std::size_t>(cfg.seq_len), static_cast<std::size_t>(cfg.embed_dim)};
  const std::size_t n = shape_numel(shape);

  auto emb = model.embed_tokens(tape, seq.ids);
  auto x0 = emb;
  if (options.x0_jitter > 0.0) {
    std::vector<Real> jitter(n);
    fill_normal<Real>(jitter, rng, options.x0_jitter);
    x0 = ops::add(emb, tape.constant(shape, std::move(jitter)));
  }

  std::uniform_int_distribution<int> pick_t(1, sched.steps);
  const int t = pick_t(rng);
  std::vector<Real> eps(n);
  fill_normal<Real>(eps, rng);
  auto x_t = q_sample(x0, t, tape.constant(shape, eps), sched);
  auto x0_hat = model.fuse_and_denoise(tape, x_t, t, cond);

  fill_normal<Real>(eps, rng);
  auto x_1 = q_sample(x0, 1, tape.constant(shape, std::move(eps)), sched);
  auto x0_hat_t1 = model.fuse_and_denoise(tape, x_1, 1, cond);

  auto g = masked_objective(model, emb, x0, x0_hat, x0_hat_t1, seq);
  g.breakdown.t = t;
  return g;
}

template LossGraph<float> masked_objective(BasicDiffCapModel<float>&, BasicVar<float>, BasicVar<float>,
                                           BasicVar<float>, BasicVar<float>, const TokenSeq&);
template LossGraph<double> masked_objective(BasicDiffCapModel<double>&, BasicVar<double>, BasicVar<double>,
                                            BasicVar<double>, BasicVar<double>, const TokenSeq&);
template LossGraph<float> training_loss(BasicTape<float>&, BasicDiffCapModel<float>&, const NoiseSchedule&,
                                        const TokenSeq&, std::span<const float>, Rng&, const LossOptions&);
template LossGraph<double> training_loss(BasicTape<double>&, BasicDiffCapModel<double>&, const NoiseSchedule&,
                                         const TokenSeq&, std::span<const double>, Rng&, const LossOptions&);

}  // namespace diffcap
