#include "diffcap/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "diffcap/error.hpp"
#include "diffcap/rng.hpp"

namespace diffcap {

void SampleConfig::validate() const {
  if (num_samples < 1) throw ConfigError("sample config: num_samples must be >= 1");
  if (trace_every < 0) throw ConfigError("sample config: trace_every must be >= 0");
}

std::uint64_t hash_values(std::span<const float> values) {
  std::uint64_t h = 14695981039346656037ull;
  for (float v : values) {
    unsigned char bytes[sizeof(float)];
    std::memcpy(bytes, &v, sizeof(float));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string piece_text(const Vocab& vocab, int id) {
  std::string piece = vocab.token_of(id);
  const std::string_view eow = kEndOfWord;
  if (piece.size() > eow.size() && piece.compare(piece.size() - eow.size(), eow.size(), eow) == 0)
    piece.resize(piece.size() - eow.size());
  return piece;
}

std::string render_tokens(const Vocab& vocab, std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += piece_text(vocab, id);
  }
  return out;
}

std::string dedup_repeats(std::string_view caption) {
  std::istringstream in{std::string(caption)};
  std::string word, prev, out;
  bool first = true;
  while (in >> word) {
    if (!first && word == prev) continue;
    if (!first) out += ' ';
    out += word;
    prev = word;
    first = false;
  }
  return out;
}

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> ids(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    ids[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return ids;
}

void require_finite(std::span<const float> values, const char* what, int t) {
  for (float v : values)
    if (!std::isfinite(v)) throw NumericError(std::string("sample: non-finite ") + what + " at t=" + std::to_string(t));
}

SampleResult sample_one(DiffCapModel& model, const NoiseSchedule& sched, const Vocab& vocab,
                        std::span<const float> cond, const SampleConfig& config, Rng& rng) {
  const auto& mc = model.config();
  const auto L = static_cast<std::size_t>(mc.seq_len);
  const auto d = static_cast<std::size_t>(mc.embed_dim);
  const Tensor& emb = model.embedding();
  std::vector<float> x(L * d);
  fill_normal<float>(x, rng, 1.0);
  std::vector<float> noise(L * d);
  SampleResult result;

  for (int t = sched.steps; t >= 1; --t) {
    Tape tape(false);
    auto xt = tape.constant(Tensor({L, d}, x));
    auto x0_hat_var = model.fuse_and_denoise(tape, xt, t, cond);
    std::vector<float> x0_hat(x0_hat_var.value().data().begin(), x0_hat_var.value().data().end());
    require_finite(x0_hat, "x0 prediction", t);
    if (config.clamp) {
      const auto nearest = model.knn_round(x0_hat);
      for (std::size_t i = 0; i < L; ++i) {
        auto src = emb.row(static_cast<std::size_t>(nearest[i]));
        std::copy(src.begin(), src.end(), x0_hat.begin() + static_cast<std::ptrdiff_t>(i * d));
      }
    }
    if (config.trace_every > 0 && (t % config.trace_every == 0 || t == 1)) {
      auto logits = model.lm_logits(tape, tape.constant(Tensor({L, d}, x0_hat)));
      TraceRecord rec;
      rec.t = t;
      rec.ids = argmax_rows(logits.value());
      rec.tokens.reserve(L);
      for (int id : rec.ids) rec.tokens.push_back(piece_text(vocab, id));
      rec.x0_hash = hash_values(x0_hat);
      result.trace.records.push_back(std::move(rec));
    }
    const auto post = posterior_mean_var(std::span<const float>(x0_hat), std::span<const float>(x), t, sched);
    if (t > 1) {
      fill_normal<float>(noise, rng, 1.0);
      const double sd = std::sqrt(post.variance);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(post.mean[i] + sd * noise[i]);
    } else {
      std::copy(post.mean.begin(), post.mean.end(), x.begin());
    }
  }

  Tape tape(false);
  auto logits = model.lm_logits(tape, tape.constant(Tensor({L, d}, x)));
  require_finite(logits.value().data(), "logits", 0);
  result.ids = argmax_rows(logits.value());
  result.raw_caption = decode(vocab, result.ids);
  result.caption = config.dedup_postprocess ? dedup_repeats(result.raw_caption) : result.raw_caption;
  return result;
}

}  // namespace

std::vector<SampleResult> sample(const DiffCapModel& model, const NoiseSchedule& sched, const Vocab& vocab,
                                 std::span<const float> cond, const SampleConfig& config,
                                 std::uint64_t condition_index) {
  config.validate();
  const auto& mc = model.config();
  if (cond.size() != static_cast<std::size_t>(mc.cond_dim)) {
    throw DimensionError("sample: condition has width " + std::to_string(cond.size()) + ", model expects " +
                         std::to_string(mc.cond_dim));
  }
  if (sched.steps != mc.diffusion_steps) {
    throw ConfigError("sample: schedule has " + std::to_string(sched.steps) + " steps, model was trained with " +
                      std::to_string(mc.diffusion_steps));
  }
  if (vocab.size() != static_cast<std::size_t>(mc.vocab_size)) {
    throw ConfigError("sample: vocabulary size " + std::to_string(vocab.size()) + " does not match model vocab_size " +
                      std::to_string(mc.vocab_size));
  }
  // A non-recording tape only reads parameters, so sharing the model across
  // threads is safe.
  auto& shared = const_cast<DiffCapModel&>(model);
  std::vector<SampleResult> out;
  out.reserve(static_cast<std::size_t>(config.num_samples));
  for (int k = 0; k < config.num_samples; ++k) {
    Rng rng = make_rng(config.seed, condition_index, static_cast<std::uint64_t>(k));
    out.push_back(sample_one(shared, sched, vocab, cond, config, rng));
  }
  return out;
}

std::vector<std::vector<SampleResult>> sample_many(const DiffCapModel& model, const NoiseSchedule& sched,
                                                   const Vocab& vocab,
                                                   const std::vector<std::span<const float>>& conds,
                                                   const SampleConfig& config,
                                                   std::span<const std::uint64_t> indices, unsigned threads) {
  if (!indices.empty() && indices.size() != conds.size())
    throw DimensionError("sample_many: " + std::to_string(indices.size()) + " indices for " +
                         std::to_string(conds.size()) + " conditions");
  std::vector<std::vector<SampleResult>> out(conds.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(conds.size(), 1)));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < conds.size(); i = next++) {
      try {
        out[i] = sample(model, sched, vocab, conds[i], config, indices.empty() ? i : indices[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = conds.size();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::string format_trace(const SampleTrace& trace) {
  std::string out;
  for (const auto& rec : trace.records) {
    out += "t=" + std::to_string(rec.t) + ":";
    for (const auto& tok : rec.tokens) out += " " + tok;
    out += '\n';
  }
  return out;
}

}  // namespace diffcap
