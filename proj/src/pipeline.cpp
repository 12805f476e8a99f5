#include "diffcap/pipeline.hpp"

#include <numeric>

namespace diffcap {

Vocab build_vocab(const Dataset& dataset, std::size_t vocab_size, std::size_t min_freq) {
  std::vector<std::string> corpus;
  for (const auto& r : dataset.records) corpus.insert(corpus.end(), r.captions.begin(), r.captions.end());
  return train_bpe(corpus, vocab_size, min_freq);
}

std::map<std::string, std::vector<std::string>> reference_map(const Dataset& dataset) {
  std::map<std::string, std::vector<std::string>> refs;
  for (const auto& r : dataset.records) refs[r.id] = r.captions;
  return refs;
}

std::vector<metrics::Prediction> predict(const DiffCapModel& model, const Vocab& vocab, const Dataset& dataset,
                                         std::span<const std::size_t> record_indices, const SampleConfig& config,
                                         unsigned threads) {
  const auto& mc = model.config();
  const auto sched = build_schedule(mc.schedule, mc.diffusion_steps);
  std::vector<std::span<const float>> conds;
  std::vector<std::uint64_t> cond_ids;
  for (std::size_t i : record_indices) {
    conds.push_back(dataset.condition(dataset.records.at(i)));
    cond_ids.push_back(i);
  }
  const auto samples = sample_many(model, sched, vocab, conds, config, cond_ids, threads);
  std::vector<metrics::Prediction> out;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& id = dataset.records[record_indices[k]].id;
    for (std::size_t s = 0; s < samples[k].size(); ++s)
      out.push_back({id, static_cast<int>(s), samples[k][s].caption});
  }
  return out;
}

RunResult train_and_evaluate(const Dataset& dataset, const RunConfig& config) {
  auto vocab = build_vocab(dataset, config.train.tokenizer_vocab_size, config.train.min_freq);
  auto trained = train(dataset, vocab, config.train);
  RunResult result{std::move(vocab), std::move(trained), {}, {}};
  const std::size_t n = config.eval_records == 0 ? dataset.records.size()
                                                 : std::min(config.eval_records, dataset.records.size());
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  result.predictions = predict(result.train.model, result.vocab, dataset, indices, config.sample, config.threads);
  result.report = metrics::evaluate(result.predictions, reference_map(dataset));
  return result;
}

std::vector<AblationCell> run_ablation(const Dataset& dataset, const RunConfig& base) {
  std::vector<AblationCell> cells;
  for (FuseMode fuse : {FuseMode::kPrefix, FuseMode::kAdd}) {
    for (ScheduleKind kind : {ScheduleKind::kLinear, ScheduleKind::kCosine, ScheduleKind::kSqrt}) {
      RunConfig cfg = base;
      cfg.train.model.fuse = fuse;
      cfg.train.model.schedule = kind;
      auto run = train_and_evaluate(dataset, cfg);
      cells.push_back({fuse, kind, run.report, run.train.epoch_loss.back()});
    }
  }
  return cells;
}

nlohmann::json ablation_to_json(const std::vector<AblationCell>& cells) {
  auto rows = nlohmann::json::array();
  for (const auto& c : cells) {
    rows.push_back({{"fuse_mode", to_string(c.fuse)},
                    {"schedule", to_string(c.schedule)},
                    {"final_epoch_loss", c.final_epoch_loss},
                    {"report", c.report.to_json()}});
  }
  return rows;
}

}  // namespace diffcap
