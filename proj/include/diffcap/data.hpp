#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace diffcap {

struct CaptionRecord {
  std::string id;
  std::size_t feature_index = 0;
  std::vector<std::string> captions;
};

/// Precomputed condition vectors: "DCFV", u32 count, u32 dim, then
/// count * dim little-endian float32 values.
struct FeatureFile {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const { return std::span<const float>(values).subspan(i * dim, dim); }
};

struct Dataset {
  std::vector<CaptionRecord> records;
  FeatureFile features;

  std::size_t cond_dim() const { return features.dim; }
  std::span<const float> condition(const CaptionRecord& r) const { return features.row(r.feature_index); }
};

void write_features(const FeatureFile& features, const std::filesystem::path& path);
FeatureFile read_features(const std::filesystem::path& path);

nlohmann::json to_json(const CaptionRecord& record);
/// Requires exactly the keys id, feature_index, captions.
CaptionRecord record_from_json(const nlohmann::json& j);
void write_records(const std::vector<CaptionRecord>& records, const std::filesystem::path& path);
std::vector<CaptionRecord> read_records(const std::filesystem::path& path);

/// Reads and cross-validates records and features; errors name the offending
/// record id.
Dataset load_dataset(const std::filesystem::path& jsonl, const std::filesystem::path& features);

// Synthetic scenes: a colored shape in some relation to a second colored
// shape. The condition vector is the concatenation of one-hot blocks
// (color 8, shape 6, relation 4, color 8, shape 6 = 32 wide) plus small
// Gaussian jitter.
inline constexpr std::size_t kSyntheticCondDim = 32;
inline constexpr double kSyntheticJitter = 0.05;

struct SceneSpec {
  int color = 0;
  int shape = 0;
  int relation = 0;
  int color2 = 0;
  int shape2 = 0;

  auto operator<=>(const SceneSpec&) const = default;
};

const std::vector<std::string>& synthetic_colors();
const std::vector<std::string>& synthetic_shapes();
const std::vector<std::string>& synthetic_relations();

/// Jitter-free condition vector of a scene.
std::vector<float> scene_one_hot(const SceneSpec& scene);
/// The three reference captions, one per template.
std::vector<std::string> scene_captions(const SceneSpec& scene);

struct SyntheticData {
  Dataset dataset;
  std::vector<SceneSpec> scenes;
};

/// `num_scenes` distinct scenes drawn from `seed`. Throws ConfigError when
/// num_scenes is 0 or exceeds the number of possible scenes.
SyntheticData gen_synthetic(std::size_t num_scenes, std::uint64_t seed);

/// Writes data.jsonl, features.bin and scenes.json into `dir`.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace diffcap
