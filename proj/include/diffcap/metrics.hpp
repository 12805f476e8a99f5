#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace diffcap::metrics {

/// Lowercase, punctuation split off as separate tokens, whitespace split.
std::vector<std::string> tokenize(std::string_view text);

/// Corpus BLEU with uniform 1..4-gram weights and brevity penalty against the
/// closest reference length, in [0, 100]. A zero n-gram match count for n > 1
/// is smoothed to 1e-9 so scores stay finite; zero unigram matches score 0.
/// `references[i]` holds the references of `candidates[i]`.
double bleu4(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references);

/// LCS F-measure with beta^2 = 1.2, max over references, averaged, in [0, 100].
double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references);

struct Distinct {
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Per condition, unique n-grams / total n-grams over its pooled samples,
/// times 100, averaged over conditions.
Distinct inter_distinct(const std::vector<std::vector<std::string>>& sample_sets);

/// sb[n-1]: each sample scored with single-order n-gram BLEU against the
/// other samples of its condition, averaged, times 100. Samples shorter than
/// n tokens are left out of order n. Throws EvalError when a condition has
/// fewer than two samples.
std::array<double, 4> self_bleu(const std::vector<std::vector<std::string>>& sample_sets);

struct Prediction {
  std::string id;
  int sample = 0;
  std::string caption;
};

struct EvalReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  Distinct distinct;
  /// Absent when there is only one sample per condition.
  std::optional<std::array<double, 4>> self_bleu;
  std::size_t n_images = 0;
  std::size_t n_samples_per_image = 0;

  nlohmann::json to_json() const;
};

/// Groups predictions by id and scores them against `references`. Throws
/// EvalError on an empty prediction set or an id without references.
EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::map<std::string, std::vector<std::string>>& references);

}  // namespace diffcap::metrics
