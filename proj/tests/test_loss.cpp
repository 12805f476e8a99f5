#include <doctest.h>

#include <cmath>
#include <vector>

#include "diffcap/error.hpp"
#include "diffcap/loss.hpp"
#include "support.hpp"

using namespace diffcap;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 7;
  c.embed_dim = 4;
  c.hidden_dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.seq_len = 5;
  c.cond_dim = 3;
  c.diffusion_steps = 40;
  return c;
}

TokenSeq make_seq(std::vector<int> ids) {
  TokenSeq s;
  s.ids = std::move(ids);
  for (int id : s.ids) s.loss_mask.push_back(id != kUnkId);
  return s;
}

const std::vector<float> kCond = {0.4f, -0.3f, 1.1f};

LossBreakdown loss_once(DiffCapModel& m, const NoiseSchedule& sched, const TokenSeq& seq, std::uint64_t seed) {
  Tape tape(false);
  Rng rng = make_rng(seed);
  return training_loss(tape, m, sched, seq, std::span<const float>(kCond), rng).breakdown;
}

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("apply_unk_mask") {
    const std::vector<double> losses = {1.0, 2.0, 3.0, 4.0};
    CHECK(apply_unk_mask(losses, make_seq({3, 4, 5, 1})) == losses);
    CHECK(apply_unk_mask(losses, make_seq({2, 2, 2, 2})) == std::vector<double>(4, 0.0));
    const auto seq = make_seq({3, 2, 5, 2});
    const auto masked = apply_unk_mask(losses, seq);
    double filtered = 0;
    for (std::size_t i = 0; i < 4; ++i)
      if (seq.ids[i] != kUnkId) filtered += losses[i];
    CHECK(masked[0] + masked[1] + masked[2] + masked[3] == filtered);
    CHECK_THROWS_AS(apply_unk_mask(losses, make_seq({3, 4})), DimensionError);
  }

  TEST_CASE("untrained model gives strictly positive components") {
    auto m = DiffCapModel::initialized(tiny_config(), 1);
    const auto sched = build_schedule(ScheduleKind::kCosine, 40);
    const auto b = loss_once(m, sched, make_seq({3, 4, 5, 1, 0}), 2);
    CHECK(b.l_simple > 0);
    CHECK(b.l_mse > 0);
    CHECK(b.l_word > 0);
    CHECK(b.masked_fraction == 0.0);
    CHECK_FALSE(b.all_masked);
    CHECK(b.t >= 1);
    CHECK(b.t <= 40);
    CHECK(b.l_total == doctest::Approx(b.l_simple + b.l_mse + b.l_word).epsilon(1e-6));
  }

  TEST_CASE("all [UNK] sequence yields zero loss with the flag set") {
    auto m = DiffCapModel::initialized(tiny_config(), 3);
    const auto sched = build_schedule(ScheduleKind::kCosine, 40);
    const auto b = loss_once(m, sched, make_seq({2, 2, 2, 2, 2}), 4);
    CHECK(b.l_total == 0.0);
    CHECK(b.all_masked);
    CHECK(b.masked_fraction == 1.0);
  }

  TEST_CASE("l_word matches a scalar oracle") {
    // V = 3, d = 2; the second position is [UNK] so only one token counts.
    ModelConfig c;
    c.vocab_size = 3;
    c.embed_dim = 2;
    c.hidden_dim = 2;
    c.layers = 0;
    c.heads = 1;
    c.seq_len = 2;
    c.cond_dim = 1;
    c.diffusion_steps = 10;
    DiffCapModel m(c);
    const std::vector<float> W = {0.5f, -1.0f, 2.0f, 1.5f, 0.25f, -0.75f};  // 2 x 3
    const std::vector<float> bias = {0.1f, 0.0f, -0.2f};
    std::copy(W.begin(), W.end(), m.lm_head_weight().data().begin());
    for (auto& [name, t] : m.parameters())
      if (name == "lm_head.bias") std::copy(bias.begin(), bias.end(), t->data().begin());

    const std::vector<float> x = {0.8f, -0.6f, 3.0f, 3.0f};
    const auto seq = make_seq({1, 2});
    Tape tape(false);
    auto xh = tape.constant(Shape{2, 2}, x);
    auto zero = tape.constant(Shape{2, 2}, std::vector<float>(4, 0.0f));
    const auto g = masked_objective(m, zero, zero, xh, zero, seq);

    double logits[3];
    for (int j = 0; j < 3; ++j) logits[j] = double(x[0]) * W[j] + double(x[1]) * W[3 + j] + bias[j];
    const double lse = std::log(std::exp(logits[0]) + std::exp(logits[1]) + std::exp(logits[2]));
    CHECK(g.breakdown.l_word == doctest::Approx(lse - logits[1]).epsilon(1e-6));
    CHECK(g.breakdown.l_simple == doctest::Approx(0.8 * 0.8 + 0.6 * 0.6).epsilon(1e-6));
    CHECK(g.breakdown.masked_fraction == 0.5);
  }

  TEST_CASE("perturbing outputs at [UNK] positions leaves the loss unchanged") {
    auto m = DiffCapModel::initialized(tiny_config(), 5);
    const auto seq = make_seq({3, 2, 4, 2, 1});
    auto run = [&](float delta) {
      Tape tape(false);
      auto emb = m.embed_tokens(tape, seq.ids);
      auto x0 = tape.constant(testing::random_tensor_f({5, 4}, 6));
      auto a = testing::random_tensor_f({5, 4}, 7);
      auto b = testing::random_tensor_f({5, 4}, 8);
      for (std::size_t r : {1u, 3u})
        for (std::size_t k = 0; k < 4; ++k) {
          a.at(r, k) += delta * (k + 1);
          b.at(r, k) -= delta;
        }
      return masked_objective(m, emb, x0, tape.constant(a), tape.constant(b), seq).breakdown;
    };
    const auto base = run(0.0f);
    for (float delta : {0.5f, -3.0f, 100.0f}) {
      const auto p = run(delta);
      CHECK(p.l_total == base.l_total);
      CHECK(p.l_simple == base.l_simple);
      CHECK(p.l_mse == base.l_mse);
      CHECK(p.l_word == base.l_word);
    }
  }

  TEST_CASE("embeddings receive gradient") {
    auto m = DiffCapModel::initialized(tiny_config(), 9);
    const auto sched = build_schedule(ScheduleKind::kCosine, 40);
    Tape tape;
    Rng rng = make_rng(10);
    const auto seq = make_seq({3, 4, 5, 1, 0});
    auto g = training_loss(tape, m, sched, seq, std::span<const float>(kCond), rng);
    tape.backward(g.total);
    double norm = 0;
    for (float v : m.embedding().grad()) norm += std::abs(v);
    CHECK(norm > 0);
  }

  TEST_CASE("same seed gives the same breakdown") {
    auto m = DiffCapModel::initialized(tiny_config(), 11);
    const auto sched = build_schedule(ScheduleKind::kLinear, 40);
    const auto seq = make_seq({3, 4, 5, 1, 0});
    const auto a = loss_once(m, sched, seq, 12);
    const auto b = loss_once(m, sched, seq, 12);
    CHECK(a.l_total == b.l_total);
    CHECK(a.t == b.t);
    const auto c = loss_once(m, sched, seq, 13);
    CHECK(c.l_total != a.l_total);
  }

  TEST_CASE("averaged l_simple estimate tightens as 1/N") {
    auto m = DiffCapModel::initialized(tiny_config(), 14);
    const auto sched = build_schedule(ScheduleKind::kCosine, 40);
    const auto seq = make_seq({3, 4, 5, 1, 0});
    std::uint64_t seed = 100;
    auto variance_of_mean = [&](int n) {
      const int trials = 150;
      std::vector<double> means;
      for (int k = 0; k < trials; ++k) {
        double s = 0;
        for (int i = 0; i < n; ++i) s += loss_once(m, sched, seq, seed++).l_simple;
        means.push_back(s / n);
      }
      double mu = 0;
      for (double v : means) mu += v;
      mu /= trials;
      double var = 0;
      for (double v : means) var += (v - mu) * (v - mu);
      return var / (trials - 1);
    };
    const double ratio = variance_of_mean(2) / variance_of_mean(8);
    CHECK(ratio > 2.0);
    CHECK(ratio < 8.0);
  }

  TEST_CASE("input validation") {
    auto m = DiffCapModel::initialized(tiny_config(), 15);
    const auto sched = build_schedule(ScheduleKind::kCosine, 40);
    CHECK_THROWS_AS(loss_once(m, sched, make_seq({3, 4}), 1), DimensionError);
    const auto other = build_schedule(ScheduleKind::kCosine, 41);
    CHECK_THROWS_AS(loss_once(m, other, make_seq({3, 4, 5, 1, 0}), 1), ConfigError);
  }

  TEST_CASE("full objective gradient matches finite differences") {
    auto cfg = tiny_config();
    cfg.seq_len = 3;
    auto m = DiffCapModel::initialized(cfg, 16).cast<double>();
    const auto sched = build_schedule(ScheduleKind::kCosine, 40);
    const auto seq = make_seq({3, 2, 1});
    const std::vector<double> cond = {0.4, -0.3, 1.1};
    std::vector<testing::TensorD*> params;
    for (auto& [name, t] : m.parameters()) params.push_back(t);
    const double err = testing::gradient_check(params, [&](testing::TapeD& tape, std::vector<testing::VarD>&) {
      Rng rng = make_rng(17);
      return training_loss(tape, m, sched, seq, std::span<const double>(cond), rng).total;
    });
    CHECK(err < 1e-3);
  }
}
