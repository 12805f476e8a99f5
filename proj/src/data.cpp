#include "diffcap/data.hpp"

#include <fstream>
#include <random>
#include <set>

#include "binary_io.hpp"
#include "diffcap/error.hpp"
#include "diffcap/rng.hpp"

namespace diffcap {
namespace {
constexpr char kFeatureMagic[4] = {'D', 'C', 'F', 'V'};
}

void write_features(const FeatureFile& features, const std::filesystem::path& path) {
  if (features.values.size() != features.count * features.dim)
    throw DimensionError("write_features: value count does not match count x dim");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write feature file " + path.string());
  out.write(kFeatureMagic, 4);
  binary::write_u32(out, static_cast<std::uint32_t>(features.count));
  binary::write_u32(out, static_cast<std::uint32_t>(features.dim));
  binary::write_f32(out, features.values);
  if (!out) throw LoadError("failed writing feature file " + path.string());
}

FeatureFile read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open feature file " + path.string());
  const std::string what = "feature file " + path.string();
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kFeatureMagic, 4))
    throw LoadError(what + ": bad magic (expected DCFV)");
  FeatureFile f;
  f.count = binary::read_u32(in, what);
  f.dim = binary::read_u32(in, what);
  const auto expected = 12 + 4 * static_cast<std::uintmax_t>(f.count) * f.dim;
  const auto actual = std::filesystem::file_size(path);
  if (actual != expected) {
    throw LoadError(what + ": size " + std::to_string(actual) + " bytes, expected " + std::to_string(expected) +
                    " for " + std::to_string(f.count) + " x " + std::to_string(f.dim));
  }
  f.values.resize(f.count * f.dim);
  binary::read_f32(in, f.values, what);
  return f;
}

nlohmann::json to_json(const CaptionRecord& record) {
  return {{"id", record.id}, {"feature_index", record.feature_index}, {"captions", record.captions}};
}

CaptionRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw LoadError("caption record must be a JSON object");
  const std::string id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "<unknown>";
  static const std::set<std::string> keys{"id", "feature_index", "captions"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw LoadError("record " + id + ": unexpected key '" + k + "'");
  for (const auto& k : keys)
    if (!j.contains(k)) throw LoadError("record " + id + ": missing key '" + k + "'");
  CaptionRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    const auto& fi = j.at("feature_index");
    if (!fi.is_number_integer() || fi.get<long long>() < 0)
      throw LoadError("record " + id + ": feature_index must be a non-negative integer");
    r.feature_index = fi.get<std::size_t>();
    r.captions = j.at("captions").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("record " + id + ": " + e.what());
  }
  if (r.captions.empty()) throw LoadError("record " + id + ": captions must be non-empty");
  return r;
}

void write_records(const std::vector<CaptionRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<CaptionRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<CaptionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    records.push_back(record_from_json(j));
  }
  return records;
}

Dataset load_dataset(const std::filesystem::path& jsonl, const std::filesystem::path& features) {
  Dataset ds;
  ds.records = read_records(jsonl);
  ds.features = read_features(features);
  for (const auto& r : ds.records) {
    if (r.feature_index >= ds.features.count) {
      throw LoadError("record " + r.id + ": feature_index " + std::to_string(r.feature_index) +
                      " out of range for " + std::to_string(ds.features.count) + " feature rows");
    }
  }
  return ds;
}

const std::vector<std::string>& synthetic_colors() {
  static const std::vector<std::string> v{"red", "blue", "green", "yellow", "black", "white", "purple", "orange"};
  return v;
}

const std::vector<std::string>& synthetic_shapes() {
  static const std::vector<std::string> v{"circle", "square", "triangle", "star", "hexagon", "diamond"};
  return v;
}

const std::vector<std::string>& synthetic_relations() {
  static const std::vector<std::string> v{"above", "below", "beside", "behind"};
  return v;
}

std::vector<float> scene_one_hot(const SceneSpec& s) {
  std::vector<float> v(kSyntheticCondDim, 0.0f);
  const std::size_t nc = synthetic_colors().size(), ns = synthetic_shapes().size();
  const std::size_t nr = synthetic_relations().size();
  v[static_cast<std::size_t>(s.color)] = 1.0f;
  v[nc + static_cast<std::size_t>(s.shape)] = 1.0f;
  v[nc + ns + static_cast<std::size_t>(s.relation)] = 1.0f;
  v[nc + ns + nr + static_cast<std::size_t>(s.color2)] = 1.0f;
  v[2 * nc + ns + nr + static_cast<std::size_t>(s.shape2)] = 1.0f;
  return v;
}

std::vector<std::string> scene_captions(const SceneSpec& s) {
  const auto& c = synthetic_colors();
  const auto& sh = synthetic_shapes();
  const auto& r = synthetic_relations();
  auto at = [](const std::vector<std::string>& v, int i) { return v[static_cast<std::size_t>(i)]; };
  const std::string c1 = at(c, s.color), s1 = at(sh, s.shape), rel = at(r, s.relation);
  const std::string c2 = at(c, s.color2), s2 = at(sh, s.shape2);
  return {"a " + c1 + " " + s1 + " " + rel + " a " + c2 + " " + s2,
          "there is a " + c1 + " " + s1 + " " + rel + " a " + c2 + " " + s2,
          "the " + c1 + " " + s1 + " is " + rel + " the " + c2 + " " + s2};
}

SyntheticData gen_synthetic(std::size_t num_scenes, std::uint64_t seed) {
  const int nc = static_cast<int>(synthetic_colors().size());
  const int ns = static_cast<int>(synthetic_shapes().size());
  const int nr = static_cast<int>(synthetic_relations().size());
  const std::size_t possible = static_cast<std::size_t>(nc * ns * nr * nc * ns);
  if (num_scenes == 0 || num_scenes > possible)
    throw ConfigError("gen_synthetic: num_scenes must be in [1, " + std::to_string(possible) + "]");

  Rng rng = make_rng(seed, 0x5CE7E);
  std::uniform_int_distribution<int> color(0, nc - 1), shape(0, ns - 1), rel(0, nr - 1);
  std::set<SceneSpec> seen;
  SyntheticData out;
  out.dataset.features.dim = kSyntheticCondDim;
  while (out.scenes.size() < num_scenes) {
    SceneSpec s;
    s.color = color(rng);
    s.shape = shape(rng);
    s.relation = rel(rng);
    s.color2 = color(rng);
    s.shape2 = shape(rng);
    if (!seen.insert(s).second) continue;
    out.scenes.push_back(s);
  }
  std::normal_distribution<double> jitter(0.0, kSyntheticJitter);
  for (std::size_t i = 0; i < out.scenes.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "scene_%05zu", i);
    out.dataset.records.push_back({id, i, scene_captions(out.scenes[i])});
    for (float v : scene_one_hot(out.scenes[i]))
      out.dataset.features.values.push_back(static_cast<float>(v + jitter(rng)));
  }
  out.dataset.features.count = out.scenes.size();
  return out;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_records(data.dataset.records, dir / "data.jsonl");
  write_features(data.dataset.features, dir / "features.bin");
  nlohmann::json scenes = nlohmann::json::array();
  for (std::size_t i = 0; i < data.scenes.size(); ++i) {
    const auto& s = data.scenes[i];
    scenes.push_back({{"id", data.dataset.records[i].id},
                      {"color", synthetic_colors()[static_cast<std::size_t>(s.color)]},
                      {"shape", synthetic_shapes()[static_cast<std::size_t>(s.shape)]},
                      {"relation", synthetic_relations()[static_cast<std::size_t>(s.relation)]},
                      {"color2", synthetic_colors()[static_cast<std::size_t>(s.color2)]},
                      {"shape2", synthetic_shapes()[static_cast<std::size_t>(s.shape2)]}});
  }
  nlohmann::json grammar = {{"colors", synthetic_colors()},
                            {"shapes", synthetic_shapes()},
                            {"relations", synthetic_relations()},
                            {"templates",
                             {"a <color> <shape> <relation> a <color2> <shape2>",
                              "there is a <color> <shape> <relation> a <color2> <shape2>",
                              "the <color> <shape> is <relation> the <color2> <shape2>"}},
                            {"scenes", scenes}};
  std::ofstream out(dir / "scenes.json");
  if (!out) throw LoadError("cannot write " + (dir / "scenes.json").string());
  out << grammar.dump(1) << '\n';
}

}  // namespace diffcap
