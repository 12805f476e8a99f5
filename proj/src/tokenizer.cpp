#include "diffcap/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "diffcap/error.hpp"

namespace diffcap {
namespace {

// Splits a word into UTF-8 code points and tags the last one with </w>.
std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  if (!out.empty()) out.back() += kEndOfWord;
  return out;
}

void apply_merge(std::vector<std::string>& symbols, const std::string& a, const std::string& b) {
  std::vector<std::string> merged;
  merged.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
      merged.push_back(a + b);
      ++i;
    } else {
      merged.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(merged);
}

std::string normalize_whitespace(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace

Vocab::Vocab() : Vocab({}, {std::string(kPadToken), std::string(kEndToken), std::string(kUnkToken)}) {}

Vocab::Vocab(std::vector<std::pair<std::string, std::string>> merges, std::vector<std::string> tokens)
    : merges_(std::move(merges)), id_to_token_(std::move(tokens)) {
  if (id_to_token_.size() < 3 || id_to_token_[kPadId] != kPadToken || id_to_token_[kEndId] != kEndToken ||
      id_to_token_[kUnkId] != kUnkToken) {
    throw LoadError("vocabulary must start with [PAD], [END], [UNK]");
  }
  for (std::size_t i = 0; i < merges_.size(); ++i) merge_rank_.emplace(merges_[i], i);
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<int>(i)).second)
      throw LoadError("duplicate vocabulary token '" + id_to_token_[i] + "'");
  }
}

int Vocab::id_of(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? -1 : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw DecodeError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                      std::to_string(id_to_token_.size()));
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocab::segment_word(std::string_view word) const {
  auto symbols = initial_symbols(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const auto a = symbols[best_at];
    const auto b = symbols[best_at + 1];
    apply_merge(symbols, a, b);
  }
  return symbols;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  return {{"merges", merges},
          {"tokens", id_to_token_},
          {"specials", {{"pad_id", kPadId}, {"end_id", kEndId}, {"unk_id", kUnkId}}}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  try {
    std::vector<std::pair<std::string, std::string>> merges;
    for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
    auto tokens = j.at("tokens").get<std::vector<std::string>>();
    const auto& sp = j.at("specials");
    if (sp.at("pad_id").get<int>() != kPadId || sp.at("end_id").get<int>() != kEndId ||
        sp.at("unk_id").get<int>() != kUnkId)
      throw LoadError("vocabulary specials must be pad_id=0, end_id=1, unk_id=2");
    return Vocab(std::move(merges), std::move(tokens));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed vocabulary json: ") + e.what());
  }
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write vocabulary to " + path.string());
  out << to_json().dump(1) << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open vocabulary " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed vocabulary json in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocab train_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size, std::size_t min_freq) {
  if (corpus.empty()) throw ConfigError("train_bpe: empty corpus");

  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : corpus)
    for (auto& w : split_words(line)) ++word_counts[w];

  std::vector<std::vector<std::string>> segs;
  std::vector<std::size_t> counts;
  std::set<std::string> base;
  for (const auto& [w, c] : word_counts) {
    segs.push_back(initial_symbols(w));
    counts.push_back(c);
    base.insert(segs.back().begin(), segs.back().end());
  }
  if (vocab_size <= 3 + base.size()) {
    throw ConfigError("train_bpe: vocab_size " + std::to_string(vocab_size) + " must exceed 3 specials + " +
                      std::to_string(base.size()) + " base symbols");
  }

  // Creation order: base symbols sorted, then merge products.
  std::vector<std::string> created(base.begin(), base.end());
  std::vector<std::pair<std::string, std::string>> merges;
  const std::size_t budget = vocab_size - 3 - base.size();
  while (merges.size() < budget) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (std::size_t w = 0; w < segs.size(); ++w)
      for (std::size_t i = 0; i + 1 < segs[w].size(); ++i) pairs[{segs[w][i], segs[w][i + 1]}] += counts[w];
    if (pairs.empty()) break;
    // Highest count wins; std::map order makes ties go to the smallest pair.
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [a, b] = best->first;
    for (auto& s : segs) apply_merge(s, a, b);
    merges.emplace_back(a, b);
    created.push_back(a + b);
  }

  std::map<std::string, std::size_t> final_counts;
  for (std::size_t w = 0; w < segs.size(); ++w)
    for (const auto& s : segs[w]) final_counts[s] += counts[w];

  std::vector<std::string> tokens{std::string(kPadToken), std::string(kEndToken), std::string(kUnkToken)};
  std::set<std::string> seen;
  for (const auto& tok : created) {
    auto it = final_counts.find(tok);
    if (it != final_counts.end() && it->second >= min_freq && seen.insert(tok).second) tokens.push_back(tok);
  }
  return Vocab(std::move(merges), std::move(tokens));
}

TokenSeq encode(const Vocab& vocab, std::string_view text, std::size_t length) {
  if (length < 2) throw ConfigError("encode: sequence length must be >= 2");
  TokenSeq seq;
  std::vector<int> word_ids;
  for (const auto& word : split_words(text)) {
    word_ids.clear();
    for (const auto& piece : vocab.segment_word(word)) {
      const int id = vocab.id_of(piece);
      if (id < 0) {
        word_ids.assign(1, kUnkId);
        break;
      }
      word_ids.push_back(id);
    }
    for (int id : word_ids) {
      if (seq.ids.size() == length) break;
      seq.ids.push_back(id);
    }
    if (seq.ids.size() == length) break;
  }
  if (seq.ids.size() < length) seq.ids.push_back(kEndId);
  seq.ids.resize(length, kPadId);
  seq.loss_mask.resize(length);
  for (std::size_t i = 0; i < length; ++i) seq.loss_mask[i] = seq.ids[i] != kUnkId;
  return seq;
}

std::string decode(const Vocab& vocab, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    const std::string& tok = vocab.token_of(id);
    if (id == kEndId) break;
    if (id == kPadId) continue;
    if (id == kUnkId) {
      out += ' ';
      out += kUnkToken;
      out += ' ';
      continue;
    }
    if (tok.size() >= kEndOfWord.size() && tok.ends_with(kEndOfWord)) {
      out.append(tok, 0, tok.size() - kEndOfWord.size());
      out += ' ';
    } else {
      out += tok;
    }
  }
  return normalize_whitespace(out);
}

}  // namespace diffcap
