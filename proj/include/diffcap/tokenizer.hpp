#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace diffcap {

inline constexpr int kPadId = 0;
inline constexpr int kEndId = 1;
inline constexpr int kUnkId = 2;
inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kEndToken = "[END]";
inline constexpr std::string_view kUnkToken = "[UNK]";
/// Appended to the last symbol of every word.
inline constexpr std::string_view kEndOfWord = "</w>";

/// Fixed-length token sequence. loss_mask[i] is false exactly where
/// ids[i] == kUnkId.
struct TokenSeq {
  std::vector<int> ids;
  std::vector<bool> loss_mask;

  std::size_t size() const { return ids.size(); }
};

/// Byte-pair-encoding vocabulary. Ids 0, 1, 2 are [PAD], [END], [UNK].
class Vocab {
 public:
  Vocab();
  Vocab(std::vector<std::pair<std::string, std::string>> merges, std::vector<std::string> tokens);

  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  /// -1 when absent.
  int id_of(std::string_view token) const;
  const std::string& token_of(int id) const;
  bool contains(std::string_view token) const { return id_of(token) >= 0; }

  /// BPE segmentation of one lowercase word, before the vocabulary lookup.
  std::vector<std::string> segment_word(std::string_view word) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Lowercases and splits on ASCII whitespace.
std::vector<std::string> split_words(std::string_view text);

/// Learns merges until the vocabulary budget is spent or every word is a
/// single symbol; then keeps only tokens that occur at least `min_freq` times
/// in the final segmentation of the corpus. Throws ConfigError on an empty
/// corpus or a budget that cannot hold the specials plus base symbols.
Vocab train_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size, std::size_t min_freq);

/// Tokenizes, maps each word with an unknown piece to one [UNK], appends
/// [END] and pads to `length`. Text longer than `length` pieces is truncated
/// with no [END].
TokenSeq encode(const Vocab& vocab, std::string_view text, std::size_t length);

/// Inverse of encode up to whitespace; stops at the first [END]. Throws
/// DecodeError on an id outside the vocabulary.
std::string decode(const Vocab& vocab, const std::vector<int>& ids);

}  // namespace diffcap
