#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "diffcap/error.hpp"
#include "diffcap/model.hpp"
#include "support.hpp"

using namespace diffcap;
using testing::TempDir;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 11;
  c.embed_dim = 4;
  c.hidden_dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.seq_len = 4;
  c.cond_dim = 3;
  c.diffusion_steps = 50;
  return c;
}

Tensor& param(DiffCapModel& m, const std::string& name) {
  for (auto& [n, t] : m.parameters())
    if (n == name) return *t;
  throw std::runtime_error("no parameter " + name);
}

std::vector<float> denoise(DiffCapModel& m, const std::vector<float>& x, int t, const std::vector<float>& cond) {
  const auto& c = m.config();
  Tape tape(false);
  auto xt = tape.constant(Shape{std::size_t(c.seq_len), std::size_t(c.embed_dim)}, x);
  auto y = m.fuse_and_denoise(tape, xt, t, cond);
  return {y.value().data().begin(), y.value().data().end()};
}

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  auto t = testing::random_tensor_f({n}, seed);
  return {t.data().begin(), t.data().end()};
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("config validation") {
    CHECK_NOTHROW(tiny_config().validate());
    auto c = tiny_config();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.embed_dim = 16;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.vocab_size = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("config json round trip rejects unknown keys") {
    auto c = tiny_config();
    c.fuse = FuseMode::kAdd;
    c.schedule = ScheduleKind::kSqrt;
    const auto back = ModelConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.fuse == FuseMode::kAdd);
    CHECK_THROWS_AS(ModelConfig::from_json(nlohmann::json{{"embedding_dim", 3}}), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_json(nlohmann::json{{"fuse_mode", "concat"}}), ConfigError);
  }

  TEST_CASE("reference configuration") {
    const auto c = coco_reference_model_config();
    CHECK(c.vocab_size == 8016);
    CHECK(c.embed_dim == 256);
    CHECK(c.hidden_dim == 768);
    CHECK(c.layers == 12);
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("embed_tokens of all [PAD] repeats the [PAD] row") {
    auto m = DiffCapModel::initialized(tiny_config(), 1);
    Tape tape(false);
    const std::vector<int> ids(4, 0);
    auto e = m.embed_tokens(tape, ids);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t k = 0; k < 4; ++k) CHECK(e.value().at(r, k) == m.embedding().at(0, k));
  }

  TEST_CASE("embed_tokens equals one-hot times E") {
    auto m = DiffCapModel::initialized(tiny_config(), 2);
    const std::vector<int> ids = {3, 10, 0, 3};
    Tape tape(false);
    auto e = m.embed_tokens(tape, ids);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      for (std::size_t k = 0; k < 4; ++k) {
        double s = 0;
        for (std::size_t v = 0; v < 11; ++v) s += (int(v) == ids[r] ? 1.0 : 0.0) * m.embedding().at(v, k);
        CHECK(e.value().at(r, k) == static_cast<float>(s));
      }
    }
    const std::vector<int> bad = {11};
    CHECK_THROWS_AS(m.embed_tokens(tape, bad), DimensionError);
  }

  TEST_CASE("timestep embedding") {
    auto m = DiffCapModel::initialized(tiny_config(), 3);
    const auto zero = m.timestep_embedding(0);
    for (std::size_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == (i % 2 == 0 ? 0.0f : 1.0f));
    std::vector<std::vector<float>> seen;
    for (int t = 1; t <= 1000; ++t) {
      const auto e = m.timestep_embedding(t);
      double norm = 0;
      for (float v : e) norm += double(v) * v;
      CHECK(std::sqrt(norm) <= std::sqrt(8.0) + 1e-6);
      seen.push_back(e);
    }
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  }

  TEST_CASE("output shape is L x d for every mode") {
    for (auto fuse : {FuseMode::kPrefix, FuseMode::kAdd}) {
      for (auto time : {TimeMode::kPrepend, TimeMode::kAdd}) {
        auto c = tiny_config();
        c.fuse = fuse;
        c.time = time;
        CHECK(c.prefix_slots() == (fuse == FuseMode::kPrefix) + (time == TimeMode::kPrepend));
        auto m = DiffCapModel::initialized(c, 4);
        const auto y = denoise(m, random_values(16, 5), 7, {0.1f, 0.2f, 0.3f});
        CHECK(y.size() == 16);
      }
    }
    auto c = tiny_config();
    CHECK(c.prefix_slots() + c.seq_len == 6);
  }

  TEST_CASE("zero-layer network matches the closed form") {
    // d = h = 2 so every term can be written out by hand.
    ModelConfig c;
    c.vocab_size = 3;
    c.embed_dim = 2;
    c.hidden_dim = 2;
    c.layers = 0;
    c.heads = 1;
    c.seq_len = 2;
    c.cond_dim = 2;
    c.diffusion_steps = 10;
    for (auto fuse : {FuseMode::kAdd, FuseMode::kPrefix}) {
      c.fuse = fuse;
      c.time = fuse == FuseMode::kAdd ? TimeMode::kAdd : TimeMode::kPrepend;
      DiffCapModel m(c);
      auto set = [&](const char* name, std::vector<float> v) {
        auto& t = param(m, name);
        REQUIRE(t.size() == v.size());
        std::copy(v.begin(), v.end(), t.data().begin());
      };
      set("in_proj.weight", {1, 2, 3, 4});
      set("in_proj.bias", {0.5f, -0.5f});
      set("pos.text", {0.1f, 0.2f, 0.3f, 0.4f});
      set("cond_proj.weight", {1, 0, 0, 1});
      set("cond_proj.bias", {0.25f, 0});
      set("out_proj.weight", {2, 0, 1, -1});
      set("out_proj.bias", {0, 1});
      const int t = 3;
      const std::vector<float> x = {1, -1, 0.5f, 2};
      const std::vector<float> cond = {2, -1};
      const auto y = denoise(m, x, t, cond);

      for (int r = 0; r < 2; ++r) {
        const double x0 = x[2 * r], x1 = x[2 * r + 1];
        // in_proj: [x0 x1] * [[1 2] [3 4]] + bias, plus the text position.
        double h0 = x0 * 1 + x1 * 3 + 0.5 + (r == 0 ? 0.1 : 0.3);
        double h1 = x0 * 2 + x1 * 4 - 0.5 + (r == 0 ? 0.2 : 0.4);
        if (fuse == FuseMode::kAdd) {
          h0 += 2 + 0.25 + std::sin(3.0);
          h1 += -1 + std::cos(3.0);
        }
        // out_proj: [h0 h1] * [[2 0] [1 -1]] + [0 1]
        CHECK(y[2 * r] == doctest::Approx(2 * h0 + h1).epsilon(1e-6));
        CHECK(y[2 * r + 1] == doctest::Approx(-h1 + 1).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("different conditions give different outputs") {
    auto m = DiffCapModel::initialized(tiny_config(), 6);
    const auto x = random_values(16, 7);
    CHECK(denoise(m, x, 10, {1, 0, 0}) != denoise(m, x, 10, {0, 1, 0}));
  }

  TEST_CASE("permuting text positions changes the output") {
    auto m = DiffCapModel::initialized(tiny_config(), 8);
    const auto x = random_values(16, 9);
    std::vector<float> swapped = x;
    std::swap_ranges(swapped.begin(), swapped.begin() + 4, swapped.begin() + 4);
    auto y = denoise(m, x, 5, {0.5f, 0.5f, 0.5f});
    auto ys = denoise(m, swapped, 5, {0.5f, 0.5f, 0.5f});
    std::swap_ranges(ys.begin(), ys.begin() + 4, ys.begin() + 4);
    CHECK(y != ys);
  }

  TEST_CASE("non-finite and mis-shaped inputs are rejected") {
    auto m = DiffCapModel::initialized(tiny_config(), 10);
    auto x = random_values(16, 11);
    CHECK_THROWS_AS(denoise(m, x, 5, {std::nanf(""), 0, 0}), NumericError);
    CHECK_THROWS_AS(denoise(m, x, 5, {0, 0}), DimensionError);
    x[3] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(denoise(m, x, 5, {0, 0, 0}), NumericError);
    Tape tape(false);
    CHECK_THROWS_AS(m.fuse_and_denoise(tape, tape.constant(Shape{3, 4}, std::vector<float>(12)), 5,
                                       std::vector<float>{0, 0, 0}),
                    DimensionError);
  }

  TEST_CASE("lm head is independent of the embedding") {
    auto m = DiffCapModel::initialized(tiny_config(), 12);
    const auto x = random_values(16, 13);
    auto logits = [&] {
      Tape tape(false);
      auto l = m.lm_logits(tape, tape.constant(Shape{4, 4}, x));
      return std::vector<float>(l.value().data().begin(), l.value().data().end());
    };
    const auto before = logits();
    CHECK(before.size() == 44);
    const auto emb_before = std::vector<float>(m.embedding().data().begin(), m.embedding().data().end());
    m.lm_head_weight().data()[0] += 1.0f;
    CHECK(logits() != before);
    CHECK(std::vector<float>(m.embedding().data().begin(), m.embedding().data().end()) == emb_before);
    Tape tape(false);
    auto p = ops::softmax(m.lm_logits(tape, tape.constant(Shape{4, 4}, x)));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (float v : p.value().row(r)) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }

  TEST_CASE("knn_round") {
    auto m = DiffCapModel::initialized(tiny_config(), 14);
    const auto& E = m.embedding();
    const std::vector<int> ids = {4, 0, 10, 4};
    Tape tape(false);
    auto e = m.embed_tokens(tape, ids);
    CHECK(m.knn_round(e.value().data()) == ids);

    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < E.rows(); ++a)
      for (std::size_t b = a + 1; b < E.rows(); ++b) {
        double s = 0;
        for (std::size_t k = 0; k < E.cols(); ++k) s += std::pow(E.at(a, k) - E.at(b, k), 2);
        min_gap = std::min(min_gap, std::sqrt(s));
      }
    // Perturbation of length 0.45 * gap along one axis.
    std::vector<float> x(E.row(7).begin(), E.row(7).end());
    x[2] += static_cast<float>(0.45 * min_gap);
    CHECK(m.knn_round(x) == std::vector<int>{7});

    auto& table = m.embedding();
    std::fill(table.row(5).begin(), table.row(5).end(), 1.0f);
    std::fill(table.row(8).begin(), table.row(8).end(), -1.0f);
    const std::vector<float> mid(4, 0.0f);
    for (std::size_t v = 0; v < table.rows(); ++v)
      if (v != 5 && v != 8) std::fill(table.row(v).begin(), table.row(v).end(), 10.0f);
    CHECK(m.knn_round(mid) == std::vector<int>{5});
  }

  TEST_CASE("knn_round inverts embed_tokens for every token") {
    auto m = DiffCapModel::initialized(tiny_config(), 15);
    std::vector<int> all(11);
    std::iota(all.begin(), all.end(), 0);
    Tape tape(false);
    CHECK(m.knn_round(m.embed_tokens(tape, all).value().data()) == all);
  }

  TEST_CASE("condition projection receives gradient") {
    auto m = DiffCapModel::initialized(tiny_config(), 16);
    Tape tape;
    auto xt = tape.constant(testing::random_tensor_f({4, 4}, 17));
    auto y = m.fuse_and_denoise(tape, xt, 9, std::vector<float>{0.3f, -0.2f, 0.9f});
    tape.backward(ops::sum(ops::mul(y, y)));
    double norm = 0;
    for (float g : param(m, "cond_proj.weight").grad()) norm += std::abs(g);
    CHECK(norm > 0);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    auto c = tiny_config();
    c.schedule = ScheduleKind::kLinear;
    auto m = DiffCapModel::initialized(c, 18);
    TempDir dir("ckpt");
    save_checkpoint(m, dir / "m.dckp");
    const auto back = load_checkpoint(dir / "m.dckp");
    CHECK(back.config().to_json() == m.config().to_json());
    const auto a = m.parameters();
    const auto b = back.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(a[i].second->shape() == b[i].second->shape());
      CHECK(std::memcmp(a[i].second->data().data(), b[i].second->data().data(), a[i].second->size() * 4) == 0);
    }
    save_checkpoint(back, dir / "again.dckp");
    std::ifstream f1(dir / "m.dckp", std::ios::binary), f2(dir / "again.dckp", std::ios::binary);
    CHECK(std::string(std::istreambuf_iterator<char>(f1), {}) == std::string(std::istreambuf_iterator<char>(f2), {}));
  }

  TEST_CASE("corrupt checkpoints fail to load") {
    auto m = DiffCapModel::initialized(tiny_config(), 19);
    TempDir dir("ckpt_bad");
    save_checkpoint(m, dir / "m.dckp");
    std::ifstream in(dir / "m.dckp", std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});

    auto write = [&](const std::string& name, const std::string& content) {
      std::ofstream out(dir / name, std::ios::binary);
      out << content;
      return dir / name;
    };
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(load_checkpoint(write("magic.dckp", bad_magic)), LoadError);
    CHECK_THROWS_AS(load_checkpoint(write("short.dckp", bytes.substr(0, bytes.size() - 3))), LoadError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.dckp"), LoadError);
  }

  TEST_CASE("parameter count of the reference configuration") {
    auto c = coco_reference_model_config();
    // Counted from the layer shapes without allocating the model.
    const long V = c.vocab_size, d = c.embed_dim, h = c.hidden_dim, L = c.seq_len, cd = c.cond_dim, f = 4 * h;
    const long per_block = 2 * h + (h * 3 * h + 3 * h) + (h * h + h) + 2 * h + (h * f + f) + (f * h + h);
    const long total = V * d + (d * h + h) + (h * d + d) + (cd * h + h) + (d * V + V) + L * h + 2 * h + 12 * per_block;
    CHECK(total > 85'000'000);
    CHECK(total < 95'000'000);
    auto small = tiny_config();
    DiffCapModel m(small);
    const long s = 11 * 4 + (4 * 8 + 8) + (8 * 4 + 4) + (3 * 8 + 8) + (4 * 11 + 11) + 4 * 8 + 2 * 8 +
                   (2 * 8 + (8 * 24 + 24) + (8 * 8 + 8) + 2 * 8 + (8 * 32 + 32) + (32 * 8 + 8));
    CHECK(static_cast<long>(m.parameter_count()) == s);
  }
}
