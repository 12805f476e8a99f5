#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffcap/data.hpp"
#include "diffcap/metrics.hpp"
#include "diffcap/sampler.hpp"
#include "diffcap/trainer.hpp"

namespace diffcap {

/// BPE vocabulary over every caption in the dataset.
Vocab build_vocab(const Dataset& dataset, std::size_t vocab_size, std::size_t min_freq);

/// Record id to reference captions.
std::map<std::string, std::vector<std::string>> reference_map(const Dataset& dataset);

struct RunConfig {
  TrainConfig train = desk_train_config();
  SampleConfig sample;
  /// Records sampled for evaluation, taken from the front; 0 means all.
  std::size_t eval_records = 0;
  unsigned threads = 0;
};

struct RunResult {
  Vocab vocab;
  TrainResult train;
  std::vector<metrics::Prediction> predictions;
  metrics::EvalReport report;
};

/// Trains on `dataset`, samples the first eval_records conditions and scores
/// them against their references.
RunResult train_and_evaluate(const Dataset& dataset, const RunConfig& config);

/// Samples each record's condition; record i uses condition index i.
std::vector<metrics::Prediction> predict(const DiffCapModel& model, const Vocab& vocab, const Dataset& dataset,
                                         std::span<const std::size_t> record_indices, const SampleConfig& config,
                                         unsigned threads = 0);

struct AblationCell {
  FuseMode fuse = FuseMode::kPrefix;
  ScheduleKind schedule = ScheduleKind::kCosine;
  metrics::EvalReport report;
  double final_epoch_loss = 0.0;
};

/// Every {prefix, add} x {linear, cosine, sqrt} combination of `base`.
std::vector<AblationCell> run_ablation(const Dataset& dataset, const RunConfig& base);

nlohmann::json ablation_to_json(const std::vector<AblationCell>& cells);

}  // namespace diffcap
