#include "diffcap/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "binary_io.hpp"
#include "diffcap/error.hpp"
#include "diffcap/rng.hpp"

namespace diffcap {

std::string_view to_string(FuseMode mode) { return mode == FuseMode::kPrefix ? "prefix" : "add"; }
std::string_view to_string(TimeMode mode) { return mode == TimeMode::kPrepend ? "prepend" : "add"; }

FuseMode parse_fuse_mode(std::string_view name) {
  if (name == "prefix") return FuseMode::kPrefix;
  if (name == "add") return FuseMode::kAdd;
  throw ConfigError("unknown fuse mode '" + std::string(name) + "' (expected prefix or add)");
}

TimeMode parse_time_mode(std::string_view name) {
  if (name == "prepend") return TimeMode::kPrepend;
  if (name == "add") return TimeMode::kAdd;
  throw ConfigError("unknown time mode '" + std::string(name) + "' (expected prepend or add)");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model config: ") + name + " must be positive, got " + std::to_string(v));
  };
  if (vocab_size < 3) throw ConfigError("model config: vocab_size must cover the 3 special tokens");
  positive(embed_dim, "embed_dim");
  positive(hidden_dim, "hidden_dim");
  positive(heads, "heads");
  positive(cond_dim, "cond_dim");
  if (layers < 0) throw ConfigError("model config: layers must be >= 0");
  if (seq_len < 2) throw ConfigError("model config: seq_len must be >= 2");
  if (hidden_dim % heads != 0) throw ConfigError("model config: hidden_dim must be divisible by heads");
  if (hidden_dim % 2 != 0) throw ConfigError("model config: hidden_dim must be even for the timestep embedding");
  if (embed_dim > hidden_dim) throw ConfigError("model config: embed_dim must not exceed hidden_dim");
  if (diffusion_steps < 2) throw ConfigError("model config: diffusion_steps must be >= 2");
  if (!(embed_init_std > 0.0)) throw ConfigError("model config: embed_init_std must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"embed_dim", embed_dim},
          {"hidden_dim", hidden_dim},
          {"layers", layers},
          {"heads", heads},
          {"seq_len", seq_len},
          {"cond_dim", cond_dim},
          {"fuse_mode", to_string(fuse)},
          {"time_mode", to_string(time)},
          {"schedule", to_string(schedule)},
          {"diffusion_steps", diffusion_steps},
          {"embed_init_std", embed_init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j, ModelConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const std::set<std::string> known{"vocab_size", "embed_dim", "hidden_dim", "layers",
                                           "heads",      "seq_len",   "cond_dim",   "fuse_mode",
                                           "time_mode",  "schedule",  "diffusion_steps", "embed_init_std"};
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw ConfigError("unknown model config key '" + key + "'");
      if (key == "fuse_mode") c.fuse = parse_fuse_mode(value.get<std::string>());
      else if (key == "time_mode") c.time = parse_time_mode(value.get<std::string>());
      else if (key == "schedule") c.schedule = parse_schedule_kind(value.get<std::string>());
      else if (key == "embed_init_std") c.embed_init_std = value.get<double>();
      else if (key == "vocab_size") c.vocab_size = value.get<int>();
      else if (key == "embed_dim") c.embed_dim = value.get<int>();
      else if (key == "hidden_dim") c.hidden_dim = value.get<int>();
      else if (key == "layers") c.layers = value.get<int>();
      else if (key == "heads") c.heads = value.get<int>();
      else if (key == "seq_len") c.seq_len = value.get<int>();
      else if (key == "cond_dim") c.cond_dim = value.get<int>();
      else if (key == "diffusion_steps") c.diffusion_steps = value.get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

ModelConfig coco_reference_model_config() {
  ModelConfig c;
  c.vocab_size = 8016;
  c.embed_dim = 256;
  c.hidden_dim = 768;
  c.layers = 12;
  c.heads = 12;
  c.seq_len = 24;
  c.cond_dim = 512;
  c.diffusion_steps = 1000;
  return c;
}

namespace {

template <typename Real>
BasicTensor<Real> param(std::size_t rows, std::size_t cols) {
  return BasicTensor<Real>(Shape{rows, cols}, true);
}

template <typename Real>
BasicTensor<Real> param(std::size_t n) {
  return BasicTensor<Real>(Shape{n}, true);
}

template <typename Real>
BasicTensor<Real> ones(std::size_t n) {
  BasicTensor<Real> t(Shape{n}, true);
  for (auto& v : t.data()) v = Real(1);
  return t;
}

}  // namespace

template <typename Real>
BasicDiffCapModel<Real>::BasicDiffCapModel(ModelConfig config) : config_(config) {
  config_.validate();
  const auto V = static_cast<std::size_t>(config_.vocab_size);
  const auto d = static_cast<std::size_t>(config_.embed_dim);
  const auto h = static_cast<std::size_t>(config_.hidden_dim);
  const auto c = static_cast<std::size_t>(config_.cond_dim);
  const auto L = static_cast<std::size_t>(config_.seq_len);
  const auto f = static_cast<std::size_t>(config_.ffn_dim());
  embedding_ = param<Real>(V, d);
  in_proj_weight_ = param<Real>(d, h);
  in_proj_bias_ = param<Real>(h);
  out_proj_weight_ = param<Real>(h, d);
  out_proj_bias_ = param<Real>(d);
  cond_proj_weight_ = param<Real>(c, h);
  cond_proj_bias_ = param<Real>(h);
  lm_head_weight_ = param<Real>(d, V);
  lm_head_bias_ = param<Real>(V);
  pos_text_ = param<Real>(L, h);
  pos_prefix_ = param<Real>(2, h);
  blocks_.resize(static_cast<std::size_t>(config_.layers));
  for (auto& b : blocks_) {
    b.ln1_gain = ones<Real>(h);
    b.ln1_bias = param<Real>(h);
    b.qkv_weight = param<Real>(h, 3 * h);
    b.qkv_bias = param<Real>(3 * h);
    b.attn_out_weight = param<Real>(h, h);
    b.attn_out_bias = param<Real>(h);
    b.ln2_gain = ones<Real>(h);
    b.ln2_bias = param<Real>(h);
    b.ffn_in_weight = param<Real>(h, f);
    b.ffn_in_bias = param<Real>(f);
    b.ffn_out_weight = param<Real>(f, h);
    b.ffn_out_bias = param<Real>(h);
  }
}

template <typename Real>
BasicDiffCapModel<Real> BasicDiffCapModel<Real>::initialized(ModelConfig config, std::uint64_t seed) {
  BasicDiffCapModel m(config);
  Rng rng = make_rng(seed, 0x1417);
  auto init = [&](Tensor& t, double stddev) { fill_normal<Real>(t.data(), rng, stddev); };
  const double d = m.config_.embed_dim, h = m.config_.hidden_dim, c = m.config_.cond_dim;
  const double f = m.config_.ffn_dim();
  const double residual = 1.0 / std::sqrt(2.0 * std::max(1, m.config_.layers));
  init(m.embedding_, m.config_.embed_init_std);
  init(m.in_proj_weight_, 1.0 / std::sqrt(d));
  init(m.out_proj_weight_, 1.0 / std::sqrt(h));
  init(m.cond_proj_weight_, 1.0 / std::sqrt(c));
  init(m.lm_head_weight_, 1.0 / std::sqrt(d));
  init(m.pos_text_, 0.1);
  init(m.pos_prefix_, 0.1);
  for (auto& b : m.blocks_) {
    init(b.qkv_weight, 1.0 / std::sqrt(h));
    init(b.attn_out_weight, residual / std::sqrt(h));
    init(b.ffn_in_weight, 1.0 / std::sqrt(h));
    init(b.ffn_out_weight, residual / std::sqrt(f));
  }
  return m;
}

template <typename Real>
std::vector<std::pair<std::string, BasicTensor<Real>*>> BasicDiffCapModel<Real>::parameters() {
  std::vector<std::pair<std::string, Tensor*>> p{
      {"embedding", &embedding_},
      {"in_proj.weight", &in_proj_weight_},
      {"in_proj.bias", &in_proj_bias_},
      {"out_proj.weight", &out_proj_weight_},
      {"out_proj.bias", &out_proj_bias_},
      {"cond_proj.weight", &cond_proj_weight_},
      {"cond_proj.bias", &cond_proj_bias_},
      {"lm_head.weight", &lm_head_weight_},
      {"lm_head.bias", &lm_head_bias_},
      {"pos.text", &pos_text_},
      {"pos.prefix", &pos_prefix_},
  };
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    p.insert(p.end(), {{pre + "ln1.gain", &b.ln1_gain},
                       {pre + "ln1.bias", &b.ln1_bias},
                       {pre + "attn.qkv.weight", &b.qkv_weight},
                       {pre + "attn.qkv.bias", &b.qkv_bias},
                       {pre + "attn.out.weight", &b.attn_out_weight},
                       {pre + "attn.out.bias", &b.attn_out_bias},
                       {pre + "ln2.gain", &b.ln2_gain},
                       {pre + "ln2.bias", &b.ln2_bias},
                       {pre + "ffn.in.weight", &b.ffn_in_weight},
                       {pre + "ffn.in.bias", &b.ffn_in_bias},
                       {pre + "ffn.out.weight", &b.ffn_out_weight},
                       {pre + "ffn.out.bias", &b.ffn_out_bias}});
  }
  return p;
}

template <typename Real>
std::vector<std::pair<std::string, const BasicTensor<Real>*>> BasicDiffCapModel<Real>::parameters() const {
  auto mut = const_cast<BasicDiffCapModel*>(this)->parameters();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [name, t] : mut) out.emplace_back(std::move(name), t);
  return out;
}

template <typename Real>
std::size_t BasicDiffCapModel<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t->size();
  return n;
}

template <typename Real>
void BasicDiffCapModel<Real>::zero_grad() {
  for (auto& [name, t] : parameters()) t->zero_grad();
}

template <typename Real>
BasicVar<Real> BasicDiffCapModel<Real>::embed_tokens(Tape& tape, std::span<const int> ids) {
  return ops::embedding_gather(tape.watch(embedding_), ids);
}

template <typename Real>
std::vector<Real> BasicDiffCapModel<Real>::timestep_embedding(int t) const {
  const auto h = static_cast<std::size_t>(config_.hidden_dim);
  const std::size_t half = h / 2;
  std::vector<Real> out(h);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[2 * i] = static_cast<Real>(std::sin(t * freq));
    out[2 * i + 1] = static_cast<Real>(std::cos(t * freq));
  }
  return out;
}

template <typename Real>
BasicVar<Real> BasicDiffCapModel<Real>::block_forward(Tape& tape, BasicBlock<Real>& b, Var x) {
  const auto h = static_cast<std::size_t>(config_.hidden_dim);
  const auto heads = static_cast<std::size_t>(config_.heads);
  const std::size_t dh = h / heads;
  const Real inv_sqrt = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));

  auto a = ops::layer_norm(x, tape.watch(b.ln1_gain), tape.watch(b.ln1_bias));
  auto qkv = ops::linear(a, tape.watch(b.qkv_weight), tape.watch(b.qkv_bias));
  std::vector<Var> head_out;
  head_out.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    auto q = ops::slice_cols(qkv, i * dh, dh);
    auto k = ops::slice_cols(qkv, h + i * dh, dh);
    auto v = ops::slice_cols(qkv, 2 * h + i * dh, dh);
    auto p = ops::softmax(ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt));
    head_out.push_back(ops::matmul(p, v));
  }
  auto attn = heads == 1 ? head_out[0] : ops::concat_cols<Real>(head_out);
  x = ops::add(x, ops::linear(attn, tape.watch(b.attn_out_weight), tape.watch(b.attn_out_bias)));

  auto f = ops::layer_norm(x, tape.watch(b.ln2_gain), tape.watch(b.ln2_bias));
  f = ops::gelu(ops::linear(f, tape.watch(b.ffn_in_weight), tape.watch(b.ffn_in_bias)));
  return ops::add(x, ops::linear(f, tape.watch(b.ffn_out_weight), tape.watch(b.ffn_out_bias)));
}

template <typename Real>
BasicVar<Real> BasicDiffCapModel<Real>::fuse_and_denoise(Tape& tape, Var x_t, int t, std::span<const Real> cond) {
  const auto L = static_cast<std::size_t>(config_.seq_len);
  const auto d = static_cast<std::size_t>(config_.embed_dim);
  const auto h = static_cast<std::size_t>(config_.hidden_dim);
  if (x_t.rows() != L || x_t.cols() != d) {
    throw DimensionError("fuse_and_denoise: x_t has shape " + shape_string(x_t.shape()) + ", expected [" +
                         std::to_string(L) + ", " + std::to_string(d) + "]");
  }
  if (cond.size() != static_cast<std::size_t>(config_.cond_dim)) {
    throw DimensionError("fuse_and_denoise: condition width " + std::to_string(cond.size()) + ", expected " +
                         std::to_string(config_.cond_dim));
  }
  for (Real v : cond)
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("fuse_and_denoise: non-finite condition value");
  for (Real v : x_t.value().data())
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("fuse_and_denoise: non-finite x_t value");

  auto text = ops::add(ops::linear(x_t, tape.watch(in_proj_weight_), tape.watch(in_proj_bias_)),
                       tape.watch(pos_text_));
  auto cond_in = tape.constant(Shape{1, cond.size()}, std::vector<Real>(cond.begin(), cond.end()));
  auto cond_vec = ops::linear(cond_in, tape.watch(cond_proj_weight_), tape.watch(cond_proj_bias_));
  auto time_vec = tape.constant(Shape{1, h}, timestep_embedding(t));
  auto prefix_pos = tape.watch(pos_prefix_);

  std::vector<Var> seq;
  if (config_.fuse == FuseMode::kPrefix) {
    seq.push_back(ops::add(cond_vec, ops::slice_rows(prefix_pos, 0, 1)));
  } else {
    text = ops::add_row(text, cond_vec);
  }
  if (config_.time == TimeMode::kPrepend) {
    seq.push_back(ops::add(time_vec, ops::slice_rows(prefix_pos, 1, 1)));
  } else {
    text = ops::add_row(text, time_vec);
  }
  const std::size_t prefix = seq.size();
  seq.push_back(text);
  auto x = prefix == 0 ? text : ops::concat_rows<Real>(seq);
  for (auto& b : blocks_) x = block_forward(tape, b, x);
  if (prefix > 0) x = ops::slice_rows(x, prefix, L);
  return ops::linear(x, tape.watch(out_proj_weight_), tape.watch(out_proj_bias_));
}

template <typename Real>
BasicVar<Real> BasicDiffCapModel<Real>::lm_logits(Tape& tape, Var x) {
  return ops::linear(x, tape.watch(lm_head_weight_), tape.watch(lm_head_bias_));
}

template <typename Real>
std::vector<int> BasicDiffCapModel<Real>::knn_round(std::span<const Real> x) const {
  const auto d = static_cast<std::size_t>(config_.embed_dim);
  if (x.size() % d != 0)
    throw DimensionError("knn_round: " + std::to_string(x.size()) + " values is not a multiple of d=" + std::to_string(d));
  const std::size_t rows = x.size() / d;
  const std::size_t V = embedding_.rows();
  std::vector<int> ids(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    auto xi = x.subspan(i * d, d);
    double best = std::numeric_limits<double>::infinity();
    int best_id = 0;
    for (std::size_t v = 0; v < V; ++v) {
      const double dist = kernels::squared_distance(xi, embedding_.row(v));
      if (dist < best) {
        best = dist;
        best_id = static_cast<int>(v);
      }
    }
    ids[i] = best_id;
  }
  return ids;
}

template <typename Real>
template <typename Other>
BasicDiffCapModel<Other> BasicDiffCapModel<Real>::cast() const {
  BasicDiffCapModel<Other> out(config_);
  auto dst = out.parameters();
  auto src = parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i].second->data();
    auto d = dst[i].second->data();
    for (std::size_t j = 0; j < s.size(); ++j) d[j] = static_cast<Other>(s[j]);
  }
  return out;
}

template class BasicDiffCapModel<float>;
template class BasicDiffCapModel<double>;
template BasicDiffCapModel<double> BasicDiffCapModel<float>::cast<double>() const;
template BasicDiffCapModel<float> BasicDiffCapModel<double>::cast<float>() const;

namespace {
constexpr char kCheckpointMagic[4] = {'D', 'C', 'K', 'P'};
}

void save_checkpoint(const DiffCapModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 4);
  binary::write_u32(out, kCheckpointVersion);
  const std::string header = model.config().to_json().dump();
  binary::write_u32(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : model.parameters()) {
    binary::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    binary::write_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (auto dim : t->shape()) binary::write_u32(out, static_cast<std::uint32_t>(dim));
    binary::write_f32(out, t->data());
  }
  if (!out) throw LoadError("failed writing checkpoint " + path.string());
}

DiffCapModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  const std::string what = "checkpoint " + path.string();
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kCheckpointMagic, 4))
    throw LoadError(what + ": bad magic (expected DCKP)");
  const auto version = binary::read_u32(in, what);
  if (version != kCheckpointVersion) throw LoadError(what + ": unsupported version " + std::to_string(version));
  const auto header_len = binary::read_u32(in, what);
  std::string header(header_len, '\0');
  if (!in.read(header.data(), header_len)) throw LoadError("truncated " + what);
  ModelConfig config;
  try {
    config = ModelConfig::from_json(nlohmann::json::parse(header));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(what + ": malformed config header: " + e.what());
  }
  DiffCapModel model(config);
  auto params = model.parameters();
  std::set<std::string> loaded;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = binary::read_u32(in, what);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw LoadError("truncated " + what);
    auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.first == name; });
    if (it == params.end()) throw LoadError(what + ": unexpected parameter '" + name + "'");
    const auto rank = binary::read_u32(in, what);
    Shape shape(rank);
    for (auto& dim : shape) dim = binary::read_u32(in, what);
    if (shape != it->second->shape()) {
      throw LoadError(what + ": parameter '" + name + "' has shape " + shape_string(shape) + ", expected " +
                      shape_string(it->second->shape()));
    }
    binary::read_f32(in, it->second->data(), what);
    loaded.insert(name);
  }
  if (loaded.size() != params.size()) throw LoadError(what + ": missing parameters");
  return model;
}

}  // namespace diffcap
