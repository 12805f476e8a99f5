#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diffcap/autodiff.hpp"
#include "diffcap/schedule.hpp"

namespace diffcap {

enum class FuseMode { kPrefix, kAdd };
enum class TimeMode { kPrepend, kAdd };

std::string_view to_string(FuseMode mode);
std::string_view to_string(TimeMode mode);
FuseMode parse_fuse_mode(std::string_view name);
TimeMode parse_time_mode(std::string_view name);

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 32;
  int hidden_dim = 64;
  int layers = 2;
  int heads = 4;
  int seq_len = 16;
  int cond_dim = 32;
  FuseMode fuse = FuseMode::kPrefix;
  TimeMode time = TimeMode::kPrepend;
  // The timestep embedding and the sampler are tied to the schedule the model
  // was trained with, so it travels with the model.
  ScheduleKind schedule = ScheduleKind::kCosine;
  int diffusion_steps = 1000;
  double embed_init_std = 1.0;

  int ffn_dim() const { return 4 * hidden_dim; }
  /// Extra sequence positions in front of the text slots.
  int prefix_slots() const { return (fuse == FuseMode::kPrefix ? 1 : 0) + (time == TimeMode::kPrepend ? 1 : 0); }
  /// Throws ConfigError on inconsistent sizes.
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ModelConfig from_json(const nlohmann::json& j, ModelConfig base);
  static ModelConfig from_json(const nlohmann::json& j) { return from_json(j, ModelConfig{}); }
};

/// Reference configuration matching the full-scale COCO setup.
ModelConfig coco_reference_model_config();

template <typename Real>
struct BasicBlock {
  BasicTensor<Real> ln1_gain, ln1_bias;
  BasicTensor<Real> qkv_weight, qkv_bias;
  BasicTensor<Real> attn_out_weight, attn_out_bias;
  BasicTensor<Real> ln2_gain, ln2_bias;
  BasicTensor<Real> ffn_in_weight, ffn_in_bias;
  BasicTensor<Real> ffn_out_weight, ffn_out_bias;
};

/// Token embeddings learned jointly with a pre-layer-norm transformer that
/// predicts the clean embedding sequence x0 from a noised x_t, a diffusion
/// step and a condition vector.
template <typename Real>
class BasicDiffCapModel {
 public:
  using Tensor = BasicTensor<Real>;
  using Var = BasicVar<Real>;
  using Tape = BasicTape<Real>;

  /// All parameters zero (LayerNorm gains one).
  explicit BasicDiffCapModel(ModelConfig config);
  /// Random initialization from `seed`.
  static BasicDiffCapModel initialized(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  Tensor& embedding() { return embedding_; }
  const Tensor& embedding() const { return embedding_; }
  Tensor& lm_head_weight() { return lm_head_weight_; }

  /// Rows of the embedding matrix, L x d.
  Var embed_tokens(Tape& tape, std::span<const int> ids);
  /// Interleaved [sin(t w_0), cos(t w_0), sin(t w_1), ...] of width h.
  std::vector<Real> timestep_embedding(int t) const;
  /// x0 prediction, L x d. Throws NumericError on non-finite inputs.
  Var fuse_and_denoise(Tape& tape, Var x_t, int t, std::span<const Real> cond);
  /// L x V logits.
  Var lm_logits(Tape& tape, Var x);
  /// Id of the nearest embedding row per position; ties go to the lower id.
  std::vector<int> knn_round(std::span<const Real> x) const;

  template <typename Other>
  BasicDiffCapModel<Other> cast() const;

 private:
  ModelConfig config_;
  Tensor embedding_;
  Tensor in_proj_weight_, in_proj_bias_;
  Tensor out_proj_weight_, out_proj_bias_;
  Tensor cond_proj_weight_, cond_proj_bias_;
  Tensor lm_head_weight_, lm_head_bias_;
  Tensor pos_text_, pos_prefix_;
  std::vector<BasicBlock<Real>> blocks_;

  Var block_forward(Tape& tape, BasicBlock<Real>& block, Var x);
};

using DiffCapModel = BasicDiffCapModel<float>;

extern template class BasicDiffCapModel<float>;
extern template class BasicDiffCapModel<double>;

/// Binary checkpoint: "DCKP", u32 version, u32 length + ModelConfig JSON, then
/// per parameter u32 name length, name bytes, u32 rank, u32 dims, float32
/// data. All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const DiffCapModel& model, const std::filesystem::path& path);
DiffCapModel load_checkpoint(const std::filesystem::path& path);

}  // namespace diffcap
