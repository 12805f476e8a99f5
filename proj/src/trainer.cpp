#include "diffcap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "diffcap/error.hpp"
#include "diffcap/rng.hpp"

namespace diffcap {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train config: lr must be > 0");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("train config: grad_clip_norm must be > 0");
  if (checkpoint_every < 0) throw ConfigError("train config: checkpoint_every must be >= 0");
  if (x0_jitter < 0.0) throw ConfigError("train config: x0_jitter must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"grad_clip_norm", grad_clip_norm},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"x0_jitter", x0_jitter},
          {"tokenizer_vocab_size", tokenizer_vocab_size},
          {"min_freq", min_freq},
          {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "grad_clip_norm") c.grad_clip_norm = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "checkpoint_every") c.checkpoint_every = value.get<int>();
      else if (key == "x0_jitter") c.x0_jitter = value.get<double>();
      else if (key == "tokenizer_vocab_size") c.tokenizer_vocab_size = value.get<std::size_t>();
      else if (key == "min_freq") c.min_freq = value.get<std::size_t>();
      else if (key == "model") c.model = ModelConfig::from_json(value, c.model);
      else throw ConfigError("unknown train config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainConfig desk_train_config() {
  TrainConfig c;
  c.lr = 3e-3;
  c.model.embed_dim = 32;
  c.model.hidden_dim = 64;
  c.model.layers = 2;
  c.model.heads = 4;
  c.model.seq_len = 16;
  c.model.diffusion_steps = 200;
  c.model.schedule = ScheduleKind::kCosine;
  return c;
}

TrainConfig coco_reference_train_config() {
  TrainConfig c;
  c.lr = 1e-4;
  c.epochs = 50;
  c.batch_size = 64;
  c.tokenizer_vocab_size = 8016;
  c.min_freq = 10;
  c.model = coco_reference_model_config();
  return c;
}

void adam_step(std::span<Tensor* const> params, AdamState& state, double lr, const AdamOptions& o) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->size(), 0.0);
      state.v[i].assign(params[i]->size(), 0.0);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (state.m[i].size() != p.size()) throw DimensionError("adam_step: optimizer state does not match parameter");
    auto w = p.data();
    std::span<const float> g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * gj;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] = static_cast<float>(w[j] - lr * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
}

double global_grad_norm(std::span<const Tensor* const> params) {
  double sq = 0.0;
  for (const auto* p : params)
    for (float g : p->grad()) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  std::vector<const Tensor*> view(params.begin(), params.end());
  const double norm = global_grad_norm(view);
  if (norm > max_norm) {
    const auto s = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto* p : params)
      if (p->has_grad())
        for (auto& g : p->grad()) g *= s;
  }
  return norm;
}

double linear_decay_lr(double base, long step, long total_steps) {
  if (total_steps <= 0) return base;
  return base * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

std::vector<TrainExample> build_examples(const Dataset& dataset, const Vocab& vocab, std::size_t seq_len) {
  std::vector<TrainExample> out;
  for (const auto& r : dataset.records)
    for (const auto& cap : r.captions) out.push_back({encode(vocab, cap, seq_len), r.feature_index});
  return out;
}

namespace {

std::string format_log_row(const StepLog& s) {
  std::ostringstream os;
  os << std::setprecision(9) << s.step << ',' << s.mean_t << ',' << s.loss.l_simple << ',' << s.loss.l_mse << ','
     << s.loss.l_word << ',' << s.loss.l_total << ',' << s.loss.masked_fraction;
  return os.str();
}

}  // namespace

TrainResult train(const Dataset& dataset, const Vocab& vocab, const TrainConfig& config, const TrainOutputs& outputs) {
  config.validate();
  if (dataset.records.empty()) throw ConfigError("train: dataset is empty");
  ModelConfig mc = config.model;
  if (mc.vocab_size != 0 && static_cast<std::size_t>(mc.vocab_size) != vocab.size()) {
    throw ConfigError("train: model vocab_size " + std::to_string(mc.vocab_size) + " does not match vocabulary of " +
                      std::to_string(vocab.size()));
  }
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.cond_dim = static_cast<int>(dataset.cond_dim());
  mc.validate();

  const auto sched = build_schedule(mc.schedule, mc.diffusion_steps);
  const auto examples = build_examples(dataset, vocab, static_cast<std::size_t>(mc.seq_len));
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches_per_epoch = (examples.size() + batch - 1) / batch;
  const long total_steps = static_cast<long>(batches_per_epoch) * config.epochs;

  TrainResult result{DiffCapModel::initialized(mc, config.seed), {}, {}};
  auto& model = result.model;
  std::vector<Tensor*> params;
  for (auto& [name, t] : model.parameters()) params.push_back(t);

  Rng order_rng = make_rng(config.seed, 1);
  Rng noise_rng = make_rng(config.seed, 2);
  const LossOptions loss_options{config.x0_jitter};
  AdamState adam;

  std::ofstream log_csv;
  if (!outputs.out_dir.empty()) {
    std::filesystem::create_directories(outputs.out_dir);
    log_csv.open(outputs.out_dir / "loss.csv");
    if (!log_csv) throw LoadError("cannot write " + (outputs.out_dir / "loss.csv").string());
    log_csv << kLossLogHeader << '\n';
  }

  std::vector<std::size_t> order(examples.size());
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * batch;
      const std::size_t end = std::min(begin + batch, examples.size());
      const auto inv_batch = static_cast<float>(1.0 / static_cast<double>(end - begin));
      model.zero_grad();
      StepLog entry;
      entry.step = step;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& ex = examples[order[i]];
        const auto where = [&] {
          return "batch " + std::to_string(b) + " of epoch " + std::to_string(epoch + 1) + " (step " +
                 std::to_string(step) + ")";
        };
        Tape tape;
        std::optional<LossGraph<float>> graph;
        try {
          graph.emplace(training_loss(tape, model, sched, ex.seq, dataset.features.row(ex.feature_index), noise_rng,
                                      loss_options));
        } catch (const NumericError& e) {
          throw NumericError("train: " + std::string(e.what()) + " at " + where());
        }
        auto& g = *graph;
        if (!std::isfinite(g.breakdown.l_total)) throw NumericError("train: non-finite loss at " + where());
        if (!g.breakdown.all_masked) tape.backward(ops::scale(g.total, inv_batch));
        entry.mean_t += g.breakdown.t;
        entry.loss.l_simple += g.breakdown.l_simple;
        entry.loss.l_mse += g.breakdown.l_mse;
        entry.loss.l_word += g.breakdown.l_word;
        entry.loss.l_total += g.breakdown.l_total;
        entry.loss.masked_fraction += g.breakdown.masked_fraction;
      }
      const double n = static_cast<double>(end - begin);
      entry.mean_t /= n;
      entry.loss.l_simple /= n;
      entry.loss.l_mse /= n;
      entry.loss.l_word /= n;
      entry.loss.l_total /= n;
      entry.loss.masked_fraction /= n;
      epoch_sum += entry.loss.l_total * n;

      clip_grad_norm(params, config.grad_clip_norm);
      adam_step(params, adam, linear_decay_lr(config.lr, step, total_steps));
      ++step;

      if (log_csv.is_open()) log_csv << format_log_row(entry) << '\n';
      if (outputs.on_step) outputs.on_step(entry);
      result.log.push_back(entry);
      if (!outputs.out_dir.empty() && config.checkpoint_every > 0 && step % config.checkpoint_every == 0)
        save_checkpoint(model, outputs.out_dir / ("checkpoint_step" + std::to_string(step) + ".dckp"));
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(examples.size()));
  }
  if (!outputs.out_dir.empty()) save_checkpoint(model, outputs.out_dir / "model.dckp");
  return result;
}

}  // namespace diffcap
