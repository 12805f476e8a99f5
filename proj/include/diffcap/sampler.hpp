#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffcap/model.hpp"
#include "diffcap/schedule.hpp"
#include "diffcap/tokenizer.hpp"

namespace diffcap {

struct SampleConfig {
  std::uint64_t seed = 0;
  int num_samples = 1;
  /// Snap x0_hat to the nearest embedding rows at every step.
  bool clamp = true;
  /// 0 disables tracing.
  int trace_every = 25;
  bool dedup_postprocess = true;

  void validate() const;
};

struct TraceRecord {
  int t = 0;
  std::vector<int> ids;
  std::vector<std::string> tokens;
  std::uint64_t x0_hash = 0;
};

/// Recorded at t divisible by trace_every and always at t = 1, so t strictly
/// decreases along the record.
struct SampleTrace {
  std::vector<TraceRecord> records;
};

struct SampleResult {
  std::string caption;
  std::string raw_caption;
  std::vector<int> ids;
  SampleTrace trace;
};

/// FNV-1a over the raw bytes of the values.
std::uint64_t hash_values(std::span<const float> values);

/// Vocabulary piece with the end-of-word marker dropped.
std::string piece_text(const Vocab& vocab, int id);

/// Readable form of an id sequence: pieces with the end-of-word marker
/// dropped, specials as-is, separated by single spaces.
std::string render_tokens(const Vocab& vocab, std::span<const int> ids);

/// Collapses runs of identical adjacent words into one.
std::string dedup_repeats(std::string_view caption);

/// Full T-step reverse diffusion for one condition. Sample k draws from the
/// substream (seed, condition_index, k). Throws DimensionError on a cond width
/// mismatch and NumericError when the model produces non-finite values.
std::vector<SampleResult> sample(const DiffCapModel& model, const NoiseSchedule& sched, const Vocab& vocab,
                                 std::span<const float> cond, const SampleConfig& config,
                                 std::uint64_t condition_index = 0);

/// Samples every condition, spread over `threads` workers (0 picks the
/// hardware concurrency). Condition i uses condition index `indices[i]`, or i
/// when `indices` is empty. Output order follows the input.
std::vector<std::vector<SampleResult>> sample_many(const DiffCapModel& model, const NoiseSchedule& sched,
                                                   const Vocab& vocab,
                                                   const std::vector<std::span<const float>>& conds,
                                                   const SampleConfig& config,
                                                   std::span<const std::uint64_t> indices = {},
                                                   unsigned threads = 0);

/// Lines of the form "t=<t>: <tokens>".
std::string format_trace(const SampleTrace& trace);

}  // namespace diffcap
