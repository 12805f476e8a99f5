#include "diffcap/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include "diffcap/error.hpp"

namespace diffcap::metrics {
namespace {

constexpr double kBleuSmoothing = 1e-9;
constexpr double kRougeBetaSq = 1.2;

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const Tokens& toks, std::size_t n) {
  NgramCounts c;
  if (toks.size() < n) return c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++c[Tokens(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                                                toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return c;
}

std::size_t clipped_matches(const Tokens& cand, const std::vector<Tokens>& refs, std::size_t n) {
  const auto cc = ngram_counts(cand, n);
  NgramCounts max_ref;
  for (const auto& r : refs)
    for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
  std::size_t m = 0;
  for (const auto& [g, c] : cc) {
    auto it = max_ref.find(g);
    if (it != max_ref.end()) m += std::min(c, it->second);
  }
  return m;
}

std::size_t closest_ref_length(std::size_t cand_len, const std::vector<Tokens>& refs) {
  std::size_t best = 0;
  std::size_t best_diff = std::numeric_limits<std::size_t>::max();
  for (const auto& r : refs) {
    const std::size_t diff = r.size() > cand_len ? r.size() - cand_len : cand_len - r.size();
    if (diff < best_diff || (diff == best_diff && r.size() < best)) {
      best = r.size();
      best_diff = diff;
    }
  }
  return best;
}

double brevity_penalty(double cand_len, double ref_len) {
  if (cand_len <= 0.0) return 0.0;
  return cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<Tokens> tokenize_all(const std::vector<std::string>& texts) {
  std::vector<Tokens> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(tokenize(t));
  return out;
}

void check_pairing(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& refs) {
  if (candidates.empty()) throw EvalError("no candidates to evaluate");
  if (candidates.size() != refs.size())
    throw EvalError("candidate count " + std::to_string(candidates.size()) + " does not match reference sets " +
                    std::to_string(refs.size()));
  for (const auto& r : refs)
    if (r.empty()) throw EvalError("candidate without references");
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

double bleu4(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
  check_pairing(candidates, references);
  std::array<double, 4> matches{}, totals{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = tokenize(candidates[i]);
    const auto refs = tokenize_all(references[i]);
    cand_len += static_cast<double>(cand.size());
    ref_len += static_cast<double>(closest_ref_length(cand.size(), refs));
    for (std::size_t n = 1; n <= 4; ++n) {
      matches[n - 1] += static_cast<double>(clipped_matches(cand, refs, n));
      totals[n - 1] += cand.size() >= n ? static_cast<double>(cand.size() - n + 1) : 0.0;
    }
  }
  if (matches[0] == 0.0) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double p = matches[n] > 0.0 ? matches[n] / totals[n] : kBleuSmoothing / std::max(totals[n], 1.0);
    log_p += 0.25 * std::log(p);
  }
  return 100.0 * brevity_penalty(cand_len, ref_len) * std::exp(log_p);
}

double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
  check_pairing(candidates, references);
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = tokenize(candidates[i]);
    double best = 0.0;
    for (const auto& r : tokenize_all(references[i])) {
      const double lcs = static_cast<double>(lcs_length(cand, r));
      if (lcs == 0.0) continue;
      const double p = lcs / static_cast<double>(cand.size());
      const double rec = lcs / static_cast<double>(r.size());
      best = std::max(best, (1.0 + kRougeBetaSq) * p * rec / (rec + kRougeBetaSq * p));
    }
    total += best;
  }
  return 100.0 * total / static_cast<double>(candidates.size());
}

Distinct inter_distinct(const std::vector<std::vector<std::string>>& sample_sets) {
  if (sample_sets.empty()) throw EvalError("inter_distinct: no sample sets");
  Distinct out;
  for (const auto& samples : sample_sets) {
    if (samples.empty()) throw EvalError("inter_distinct: condition without samples");
    std::array<double, 2> ratio{};
    for (std::size_t n = 1; n <= 2; ++n) {
      std::set<Tokens> unique;
      std::size_t total = 0;
      for (const auto& toks : tokenize_all(samples)) {
        for (const auto& [g, c] : ngram_counts(toks, n)) {
          unique.insert(g);
          total += c;
        }
      }
      ratio[n - 1] = total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
    }
    out.d1 += ratio[0];
    out.d2 += ratio[1];
  }
  out.d1 = 100.0 * out.d1 / static_cast<double>(sample_sets.size());
  out.d2 = 100.0 * out.d2 / static_cast<double>(sample_sets.size());
  return out;
}

std::array<double, 4> self_bleu(const std::vector<std::vector<std::string>>& sample_sets) {
  if (sample_sets.empty()) throw EvalError("self_bleu: no sample sets");
  std::array<double, 4> sum{};
  std::array<std::size_t, 4> count{};
  for (const auto& samples : sample_sets) {
    if (samples.size() < 2) throw EvalError("self_bleu: needs at least 2 samples per condition");
    const auto toks = tokenize_all(samples);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      std::vector<Tokens> refs;
      for (std::size_t j = 0; j < toks.size(); ++j)
        if (j != i) refs.push_back(toks[j]);
      const double bp = brevity_penalty(static_cast<double>(toks[i].size()),
                                        static_cast<double>(closest_ref_length(toks[i].size(), refs)));
      for (std::size_t n = 1; n <= 4; ++n) {
        if (toks[i].size() < n) continue;
        const double total = static_cast<double>(toks[i].size() - n + 1);
        sum[n - 1] += bp * static_cast<double>(clipped_matches(toks[i], refs, n)) / total;
        ++count[n - 1];
      }
    }
  }
  std::array<double, 4> out{};
  for (std::size_t n = 0; n < 4; ++n) out[n] = count[n] == 0 ? 0.0 : 100.0 * sum[n] / static_cast<double>(count[n]);
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {{"bleu4", bleu4},
                      {"rouge_l", rouge_l},
                      {"distinct", {{"1-gram", distinct.d1}, {"2-gram", distinct.d2}}},
                      {"n_images", n_images},
                      {"n_samples_per_image", n_samples_per_image}};
  if (self_bleu) {
    j["self_bleu"] = {{"1-gram", (*self_bleu)[0]},
                      {"2-gram", (*self_bleu)[1]},
                      {"3-gram", (*self_bleu)[2]},
                      {"4-gram", (*self_bleu)[3]}};
  }
  return j;
}

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::map<std::string, std::vector<std::string>>& references) {
  if (predictions.empty()) throw EvalError("no predictions to evaluate");
  std::map<std::string, std::map<int, std::string>> grouped;
  for (const auto& p : predictions) {
    if (!references.count(p.id)) throw EvalError("prediction for '" + p.id + "' has no references");
    grouped[p.id][p.sample] = p.caption;
  }
  std::vector<std::string> cands;
  std::vector<std::vector<std::string>> refs;
  std::vector<std::vector<std::string>> sets;
  std::size_t min_samples = std::numeric_limits<std::size_t>::max();
  for (const auto& [id, samples] : grouped) {
    std::vector<std::string> set;
    for (const auto& [k, cap] : samples) {
      cands.push_back(cap);
      refs.push_back(references.at(id));
      set.push_back(cap);
    }
    min_samples = std::min(min_samples, set.size());
    sets.push_back(std::move(set));
  }
  EvalReport r;
  r.bleu4 = bleu4(cands, refs);
  r.rouge_l = rouge_l(cands, refs);
  r.distinct = inter_distinct(sets);
  if (min_samples >= 2) r.self_bleu = self_bleu(sets);
  r.n_images = grouped.size();
  r.n_samples_per_image = min_samples;
  return r;
}

}  // namespace diffcap::metrics
