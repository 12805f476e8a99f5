#include "diffcap/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "diffcap/data.hpp"
#include "diffcap/error.hpp"
#include "diffcap/metrics.hpp"
#include "diffcap/pipeline.hpp"
#include "diffcap/sampler.hpp"
#include "diffcap/trainer.hpp"

namespace diffcap::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path config_path_for(const fs::path& output) {
  auto p = output;
  return p.replace_extension(".config.json");
}

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Values for one subcommand: command-line flags first, then the --config file.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {}

  void load(const std::string& config_path, std::set<std::string> passthrough = {}) {
    if (config_path.empty()) return;
    file_ = read_json_file(config_path);
    if (!file_.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, value] : file_.items()) {
      if (passthrough.count(key)) continue;
      if (key == "config" || app_->get_option_no_throw(flag_name(key)) == nullptr)
        throw ConfigError("unknown config key '" + key + "'");
    }
  }

  bool given(const std::string& key) const {
    const auto* opt = app_->get_option_no_throw(flag_name(key));
    return opt != nullptr && opt->count() > 0;
  }

  template <typename T>
  void merge(const std::string& key, T& value) const {
    if (given(key) || !file_.contains(key)) return;
    try {
      value = file_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }

  const json& file() const { return file_; }

 private:
  CLI::App* app_;
  json file_ = json::object();
};

void require(const std::string& value, const std::string& key) {
  if (value.empty()) throw UsageError("missing required option " + flag_name(key));
}

// ---- train ----

struct TrainArgs {
  std::string config, data, features, out, vocab, profile = "desk";
  double lr = 0;
  int epochs = 0, batch_size = 0, checkpoint_every = 0, diffusion_steps = 0;
  std::uint64_t seed = 0;
  std::string schedule, fuse_mode, time_mode;
};

const std::set<std::string> kTrainPaths = {"data", "features", "out", "vocab", "profile"};

void add_train(CLI::App& root, TrainArgs& a) {
  auto* s = root.add_subcommand("train", "Train a caption model");
  s->add_option("--config", a.config, "JSON config; keys mirror the train and model settings");
  s->add_option("--data", a.data, "Caption records (JSONL)");
  s->add_option("--features", a.features, "Condition vectors (DCFV)");
  s->add_option("--out", a.out, "Output directory");
  s->add_option("--vocab", a.vocab, "Existing vocabulary; trained from the captions when absent");
  s->add_option("--profile", a.profile, "Base settings: desk or coco-ref")->check(CLI::IsMember({"desk", "coco-ref"}));
  s->add_option("--lr", a.lr, "Peak learning rate");
  s->add_option("--epochs", a.epochs, "Training epochs");
  s->add_option("--batch-size", a.batch_size, "Examples per step");
  s->add_option("--seed", a.seed, "Random seed");
  s->add_option("--checkpoint-every", a.checkpoint_every, "Steps between checkpoints (0: final only)");
  s->add_option("--schedule", a.schedule, "Noise schedule: linear, cosine or sqrt");
  s->add_option("--fuse-mode", a.fuse_mode, "Condition fusion: prefix or add");
  s->add_option("--time-mode", a.time_mode, "Timestep injection: prepend or add");
  s->add_option("--diffusion-steps", a.diffusion_steps, "Number of diffusion steps T");
}

int run_train(CLI::App& s, TrainArgs& a, std::ostream& out) {
  Settings settings(&s);
  if (!a.config.empty()) {
    const json file = read_json_file(a.config);
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const char* key : {"data", "features", "out", "vocab", "profile"}) {
      auto* opt = s.get_option(flag_name(key));
      std::string* target = key == std::string("data") ? &a.data
                            : key == std::string("features") ? &a.features
                            : key == std::string("out") ? &a.out
                            : key == std::string("vocab") ? &a.vocab : &a.profile;
      if (opt->count() == 0 && file.contains(key)) *target = file.at(key).get<std::string>();
    }
  }
  TrainConfig cfg = a.profile == "coco-ref" ? coco_reference_train_config() : desk_train_config();
  if (!a.config.empty()) {
    json rest = read_json_file(a.config);
    for (const auto& k : kTrainPaths) rest.erase(k);
    cfg = TrainConfig::from_json(rest, cfg);
  }
  if (settings.given("lr")) cfg.lr = a.lr;
  if (settings.given("epochs")) cfg.epochs = a.epochs;
  if (settings.given("batch_size")) cfg.batch_size = a.batch_size;
  if (settings.given("seed")) cfg.seed = a.seed;
  if (settings.given("checkpoint_every")) cfg.checkpoint_every = a.checkpoint_every;
  if (settings.given("schedule")) cfg.model.schedule = parse_schedule_kind(a.schedule);
  if (settings.given("fuse_mode")) cfg.model.fuse = parse_fuse_mode(a.fuse_mode);
  if (settings.given("time_mode")) cfg.model.time = parse_time_mode(a.time_mode);
  if (settings.given("diffusion_steps")) cfg.model.diffusion_steps = a.diffusion_steps;
  require(a.data, "data");
  require(a.features, "features");
  require(a.out, "out");
  cfg.validate();

  const auto dataset = load_dataset(a.data, a.features);
  const Vocab vocab = a.vocab.empty() ? build_vocab(dataset, cfg.tokenizer_vocab_size, cfg.min_freq)
                                      : Vocab::load(a.vocab);
  cfg.model.vocab_size = static_cast<int>(vocab.size());
  cfg.model.cond_dim = static_cast<int>(dataset.cond_dim());

  const fs::path dir = a.out;
  fs::create_directories(dir);
  vocab.save(dir / "vocab.json");
  json resolved = cfg.to_json();
  resolved["data"] = a.data;
  resolved["features"] = a.features;
  resolved["out"] = a.out;
  resolved["profile"] = a.profile;
  if (!a.vocab.empty()) resolved["vocab"] = a.vocab;
  write_json_file(resolved, dir / "config.json");

  const auto result = train(dataset, vocab, cfg, {dir, {}});
  out << "trained " << result.log.size() << " steps; final epoch loss " << result.epoch_loss.back() << "; wrote "
      << (dir / "model.dckp").string() << '\n';
  return kExitOk;
}

// ---- sample ----

struct SampleArgs {
  std::string config, ckpt, vocab, features, data, ids = "all", trace, out;
  int n = 1, trace_every = 25;
  std::uint64_t seed = 0;
  bool no_clamp = false, no_dedup = false;
  unsigned threads = 0;
};

void add_sample(CLI::App& root, SampleArgs& a) {
  auto* s = root.add_subcommand("sample", "Generate captions by reverse diffusion");
  s->add_option("--config", a.config, "JSON config; keys are the flag names");
  s->add_option("--ckpt", a.ckpt, "Model checkpoint");
  s->add_option("--vocab", a.vocab, "Vocabulary (default: vocab.json next to the checkpoint)");
  s->add_option("--features", a.features, "Condition vectors (DCFV)");
  s->add_option("--data", a.data, "Caption records; --ids then names record ids");
  s->add_option("--ids", a.ids, "Comma-separated ids (feature rows without --data) or 'all'");
  s->add_option("--n", a.n, "Samples per condition");
  s->add_option("--seed", a.seed, "Random seed");
  s->add_option("--trace", a.trace, "Directory for per-sample denoising traces");
  s->add_option("--trace-every", a.trace_every, "Steps between trace records");
  s->add_flag("--no-clamp", a.no_clamp, "Skip nearest-embedding rounding of x0 predictions");
  s->add_flag("--no-dedup", a.no_dedup, "Keep immediately repeated words");
  s->add_option("--out", a.out, "Output JSONL (default: stdout)");
  s->add_option("--threads", a.threads, "Worker threads (0: all cores)");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) items.push_back(item);
  return items;
}

int run_sample(CLI::App& s, SampleArgs& a, std::ostream& out) {
  Settings settings(&s);
  settings.load(a.config);
  settings.merge("ckpt", a.ckpt);
  settings.merge("vocab", a.vocab);
  settings.merge("features", a.features);
  settings.merge("data", a.data);
  settings.merge("ids", a.ids);
  settings.merge("n", a.n);
  settings.merge("seed", a.seed);
  settings.merge("trace", a.trace);
  settings.merge("trace_every", a.trace_every);
  settings.merge("no_clamp", a.no_clamp);
  settings.merge("no_dedup", a.no_dedup);
  settings.merge("out", a.out);
  settings.merge("threads", a.threads);
  require(a.ckpt, "ckpt");
  require(a.features, "features");
  if (a.vocab.empty()) a.vocab = (fs::path(a.ckpt).parent_path() / "vocab.json").string();

  SampleConfig cfg;
  cfg.seed = a.seed;
  cfg.num_samples = a.n;
  cfg.clamp = !a.no_clamp;
  cfg.trace_every = a.trace.empty() ? 0 : a.trace_every;
  cfg.dedup_postprocess = !a.no_dedup;
  cfg.validate();

  const auto model = load_checkpoint(a.ckpt);
  const auto vocab = Vocab::load(a.vocab);
  const auto features = read_features(a.features);

  // (output id, feature row, condition index)
  struct Target {
    std::string id;
    std::size_t row;
    std::uint64_t index;
  };
  std::vector<Target> targets;
  const bool all = a.ids == "all";
  const auto wanted = split_list(a.ids);
  if (!a.data.empty()) {
    const auto dataset = load_dataset(a.data, a.features);
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) position[dataset.records[i].id] = i;
    if (all) {
      for (std::size_t i = 0; i < dataset.records.size(); ++i)
        targets.push_back({dataset.records[i].id, dataset.records[i].feature_index, i});
    } else {
      for (const auto& id : wanted) {
        auto it = position.find(id);
        if (it == position.end()) throw UsageError("--ids: unknown record id '" + id + "'");
        targets.push_back({id, dataset.records[it->second].feature_index, it->second});
      }
    }
  } else if (all) {
    for (std::size_t i = 0; i < features.count; ++i) targets.push_back({std::to_string(i), i, i});
  } else {
    for (const auto& id : wanted) {
      std::size_t row = 0;
      try {
        std::size_t used = 0;
        row = std::stoul(id, &used);
        if (used != id.size()) throw std::invalid_argument(id);
      } catch (const std::exception&) {
        throw UsageError("--ids: '" + id + "' is not a feature row (pass --data to use record ids)");
      }
      if (row >= features.count)
        throw UsageError("--ids: row " + id + " out of range for " + std::to_string(features.count) + " features");
      targets.push_back({id, row, row});
    }
  }

  std::vector<std::span<const float>> conds;
  std::vector<std::uint64_t> indices;
  for (const auto& t : targets) {
    conds.push_back(features.row(t.row));
    indices.push_back(t.index);
  }
  const auto sched = build_schedule(model.config().schedule, model.config().diffusion_steps);
  const auto results = sample_many(model, sched, vocab, conds, cfg, indices, a.threads);

  std::ofstream file;
  if (!a.out.empty()) {
    const fs::path p = a.out;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    file.open(p);
    if (!file) throw LoadError("cannot write " + a.out);
  }
  std::ostream& sink = a.out.empty() ? out : file;
  if (!a.trace.empty()) fs::create_directories(a.trace);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t k = 0; k < results[i].size(); ++k) {
      const auto& r = results[i][k];
      sink << json{{"id", targets[i].id}, {"sample", k}, {"caption", r.caption}, {"raw_caption", r.raw_caption}}.dump()
           << '\n';
      if (!a.trace.empty()) {
        std::ofstream tf(fs::path(a.trace) / (targets[i].id + "_" + std::to_string(k) + ".txt"));
        tf << format_trace(r.trace);
      }
    }
  }
  if (!a.out.empty()) {
    json resolved = {{"ckpt", a.ckpt},   {"vocab", a.vocab},  {"features", a.features},     {"ids", a.ids},
                     {"n", a.n},         {"seed", a.seed},    {"trace_every", a.trace_every}, {"no_clamp", a.no_clamp},
                     {"no_dedup", a.no_dedup}, {"out", a.out}, {"threads", a.threads}};
    if (!a.data.empty()) resolved["data"] = a.data;
    if (!a.trace.empty()) resolved["trace"] = a.trace;
    write_json_file(resolved, config_path_for(a.out));
  }
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string config, pred, refs, report;
};

void add_eval(CLI::App& root, EvalArgs& a) {
  auto* s = root.add_subcommand("eval", "Score predictions against references");
  s->add_option("--config", a.config, "JSON config; keys are the flag names");
  s->add_option("--pred", a.pred, "Predictions JSONL with id, sample and caption");
  s->add_option("--refs", a.refs, "Caption records JSONL holding the references");
  s->add_option("--report", a.report, "Report JSON (default: stdout)");
}

std::vector<metrics::Prediction> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open predictions " + path.string());
  std::vector<metrics::Prediction> preds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      preds.push_back({j.at("id").get<std::string>(), j.value("sample", 0), j.at("caption").get<std::string>()});
    } catch (const json::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return preds;
}

int run_eval(CLI::App& s, EvalArgs& a, std::ostream& out) {
  Settings settings(&s);
  settings.load(a.config);
  settings.merge("pred", a.pred);
  settings.merge("refs", a.refs);
  settings.merge("report", a.report);
  require(a.pred, "pred");
  require(a.refs, "refs");

  std::map<std::string, std::vector<std::string>> refs;
  for (const auto& r : read_records(a.refs)) refs[r.id] = r.captions;
  const auto report = metrics::evaluate(read_predictions(a.pred), refs);
  if (a.report.empty()) {
    out << report.to_json().dump(2) << '\n';
  } else {
    write_json_file(report.to_json(), a.report);
    write_json_file({{"pred", a.pred}, {"refs", a.refs}, {"report", a.report}}, config_path_for(a.report));
  }
  return kExitOk;
}

// ---- inspect-schedule ----

struct InspectArgs {
  std::string config, kind = "cosine", out;
  int steps = 1000;
};

void add_inspect(CLI::App& root, InspectArgs& a) {
  auto* s = root.add_subcommand("inspect-schedule", "Print a noise schedule as CSV (t,beta,alpha_bar,snr)");
  s->add_option("--config", a.config, "JSON config; keys are the flag names");
  s->add_option("--kind", a.kind, "linear, cosine or sqrt");
  s->add_option("--T", a.steps, "Number of diffusion steps");
  s->add_option("--out", a.out, "Output CSV (default: stdout)");
}

int run_inspect(CLI::App& s, InspectArgs& a, std::ostream& out) {
  Settings settings(&s);
  settings.load(a.config);
  settings.merge("kind", a.kind);
  if (!settings.given("T") && settings.file().contains("T")) a.steps = settings.file().at("T").get<int>();
  settings.merge("out", a.out);
  const auto sched = build_schedule(parse_schedule_kind(a.kind), a.steps);

  std::ostringstream csv;
  csv << "t,beta,alpha_bar,snr\n";
  char line[160];
  for (int t = 1; t <= sched.steps; ++t) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", t, sched.beta(t), sched.alpha_bar(t), sched.snr(t));
    csv << line;
  }
  if (a.out.empty()) {
    out << csv.str();
  } else {
    const fs::path p = a.out;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p);
    if (!f) throw LoadError("cannot write " + a.out);
    f << csv.str();
    write_json_file({{"kind", a.kind}, {"T", a.steps}, {"out", a.out}}, config_path_for(a.out));
  }
  return kExitOk;
}

// ---- gen-synth ----

struct SynthArgs {
  std::string config, out;
  std::size_t scenes = 256;
  std::uint64_t seed = 7;
};

void add_synth(CLI::App& root, SynthArgs& a) {
  auto* s = root.add_subcommand("gen-synth", "Write the synthetic shapes dataset");
  s->add_option("--config", a.config, "JSON config; keys are the flag names");
  s->add_option("--scenes", a.scenes, "Number of distinct scenes");
  s->add_option("--seed", a.seed, "Random seed");
  s->add_option("--out", a.out, "Output directory");
}

int run_synth(CLI::App& s, SynthArgs& a, std::ostream& out) {
  Settings settings(&s);
  settings.load(a.config);
  settings.merge("scenes", a.scenes);
  settings.merge("seed", a.seed);
  settings.merge("out", a.out);
  require(a.out, "out");
  const auto data = gen_synthetic(a.scenes, a.seed);
  write_synthetic(data, a.out);
  write_json_file({{"scenes", a.scenes}, {"seed", a.seed}, {"out", a.out}}, fs::path(a.out) / "config.json");
  out << "wrote " << data.dataset.records.size() << " scenes to " << a.out << '\n';
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion-based image caption generation"};
  app.name("diffcap");
  app.require_subcommand(1);
  TrainArgs train_args;
  SampleArgs sample_args;
  EvalArgs eval_args;
  InspectArgs inspect_args;
  SynthArgs synth_args;
  add_train(app, train_args);
  add_sample(app, sample_args);
  add_eval(app, eval_args);
  add_inspect(app, inspect_args);
  add_synth(app, synth_args);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitValidation;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (name == "train") return run_train(*sub, train_args, out);
    if (name == "sample") return run_sample(*sub, sample_args, out);
    if (name == "eval") return run_eval(*sub, eval_args, out);
    if (name == "inspect-schedule") return run_inspect(*sub, inspect_args, out);
    return run_synth(*sub, synth_args, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n' << sub->help();
    return kExitValidation;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DecodeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const EvalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace diffcap::cli
