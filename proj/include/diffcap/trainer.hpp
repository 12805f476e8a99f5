#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "diffcap/data.hpp"
#include "diffcap/loss.hpp"
#include "diffcap/model.hpp"
#include "diffcap/tokenizer.hpp"

namespace diffcap {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 50;
  int batch_size = 16;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  /// Steps between intermediate checkpoints; 0 writes only the final one.
  int checkpoint_every = 0;
  double x0_jitter = 0.1;
  std::size_t tokenizer_vocab_size = 200;
  std::size_t min_freq = 10;
  /// vocab_size and cond_dim are filled from the vocabulary and the dataset.
  ModelConfig model;

  void validate() const;
  nlohmann::json to_json() const;
  /// Keys mirror the field names, with the model config nested under
  /// "model". Unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

/// Small model and schedule sized for CPU runs on the synthetic dataset.
TrainConfig desk_train_config();
/// lr 1e-4, 50 epochs, batch 64 with the COCO-scale model.
TrainConfig coco_reference_train_config();

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

/// Bias-corrected Adam update of every tensor from its gradient buffer.
void adam_step(std::span<Tensor* const> params, AdamState& state, double lr, const AdamOptions& options = {});

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor* const> params, double max_norm);

double global_grad_norm(std::span<const Tensor* const> params);

/// Linear decay from `base` towards 0; `step` counts from 0.
double linear_decay_lr(double base, long step, long total_steps);

struct TrainExample {
  TokenSeq seq;
  std::size_t feature_index = 0;
};

/// One example per (record, caption) pair.
std::vector<TrainExample> build_examples(const Dataset& dataset, const Vocab& vocab, std::size_t seq_len);

struct StepLog {
  long step = 0;
  double mean_t = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  DiffCapModel model;
  std::vector<StepLog> log;
  /// Mean l_total per epoch.
  std::vector<double> epoch_loss;
};

struct TrainOutputs {
  /// When set, receives loss.csv, intermediate checkpoints and model.dckp.
  std::filesystem::path out_dir;
  std::function<void(const StepLog&)> on_step;
};

/// Completes the model config from `vocab` and `dataset`, validates, and runs
/// mini-batch Adam with a linearly decaying learning rate and global-norm
/// clipping. Throws ConfigError on inconsistent inputs and NumericError with
/// the batch index on a non-finite loss.
TrainResult train(const Dataset& dataset, const Vocab& vocab, const TrainConfig& config,
                  const TrainOutputs& outputs = {});

/// Header line of loss.csv.
inline constexpr const char* kLossLogHeader = "step,t,l_simple,l_mse,l_word,l_total,masked_fraction";

}  // namespace diffcap
