#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffcap/cli.hpp"
#include "support.hpp"

using namespace diffcap;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes") {
    CHECK(run({"--help"}).code == cli::kExitOk);
    CHECK(run({"sample", "--help"}).code == cli::kExitOk);
    const auto missing = run({"sample", "--features", "f.bin"});
    CHECK(missing.code == cli::kExitValidation);
    CHECK(missing.err.find("--ckpt") != std::string::npos);
    CHECK(run({"train", "--bogus"}).code == cli::kExitValidation);
    CHECK(run({"frobnicate"}).code == cli::kExitValidation);
    CHECK(run({"inspect-schedule", "--kind", "quadratic", "--T", "10"}).code == cli::kExitValidation);
    CHECK(run({"inspect-schedule", "--kind", "cosine", "--T", "1"}).code == cli::kExitValidation);
    CHECK(run({"eval", "--pred", "/nonexistent/p.jsonl", "--refs", "/nonexistent/r.jsonl"}).code ==
          cli::kExitValidation);
  }

  TEST_CASE("inspect-schedule prints the schedule") {
    const auto r = run({"inspect-schedule", "--kind", "linear", "--T", "100"});
    REQUIRE(r.code == 0);
    const auto rows = lines(r.out);
    REQUIRE(rows.size() == 101);
    CHECK(rows[0] == "t,beta,alpha_bar,snr");
    double prev = 2.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      std::istringstream in(rows[i]);
      std::string t, beta, abar;
      std::getline(in, t, ',');
      std::getline(in, beta, ',');
      std::getline(in, abar, ',');
      CHECK(std::stoi(t) == static_cast<int>(i));
      CHECK(std::stod(abar) < prev);
      prev = std::stod(abar);
    }

    testing::TempDir dir("cli_sched");
    REQUIRE(run({"inspect-schedule", "--kind", "sqrt", "--T", "50", "--out", (dir / "s.csv").string()}).code == 0);
    const auto cfg = json::parse(slurp(dir / "s.config.json"));
    CHECK(cfg["kind"] == "sqrt");
    CHECK(cfg["T"] == 50);
    REQUIRE(run({"inspect-schedule", "--config", (dir / "s.config.json").string(), "--out",
                 (dir / "s2.csv").string()})
                .code == 0);
    CHECK(slurp(dir / "s.csv") == slurp(dir / "s2.csv"));
  }

  TEST_CASE("end to end: generate, train, sample, evaluate, rerun") {
    testing::TempDir dir("cli_e2e");
    const auto data = (dir / "data").string();
    REQUIRE(run({"gen-synth", "--scenes", "6", "--seed", "3", "--out", data}).code == 0);
    CHECK(std::filesystem::exists(dir / "data" / "scenes.json"));

    json model = {{"embed_dim", 8}, {"hidden_dim", 16}, {"layers", 1}, {"heads", 2},
                  {"seq_len", 14},  {"diffusion_steps", 12}};
    std::ofstream(dir / "train.json") << json{{"epochs", 2}, {"batch_size", 6}, {"min_freq", 1}, {"model", model}}.dump();
    const auto run_dir = (dir / "run").string();
    const std::vector<std::string> train_args = {"train",      "--config", (dir / "train.json").string(),
                                                 "--data",     data + "/data.jsonl",
                                                 "--features", data + "/features.bin",
                                                 "--out",      run_dir,
                                                 "--seed",     "4"};
    const auto tr = run(train_args);
    INFO(tr.err);
    REQUIRE(tr.code == 0);
    for (const char* f : {"model.dckp", "vocab.json", "config.json", "loss.csv"})
      CHECK(std::filesystem::exists(dir / "run" / f));
    const auto resolved = json::parse(slurp(dir / "run" / "config.json"));
    CHECK(resolved["seed"] == 4);
    CHECK(resolved["epochs"] == 2);
    CHECK(resolved["model"]["embed_dim"] == 8);

    const auto rerun_dir = (dir / "rerun").string();
    auto rerun_cfg = resolved;
    rerun_cfg["out"] = rerun_dir;
    std::ofstream(dir / "rerun.json") << rerun_cfg.dump();
    REQUIRE(run({"train", "--config", (dir / "rerun.json").string()}).code == 0);
    CHECK(slurp(dir / "run" / "model.dckp") == slurp(dir / "rerun" / "model.dckp"));

    const auto pred = (dir / "pred.jsonl").string();
    const auto sr = run({"sample", "--ckpt", run_dir + "/model.dckp", "--features", data + "/features.bin", "--data",
                         data + "/data.jsonl", "--n", "2", "--seed", "9", "--trace", (dir / "trace").string(),
                         "--trace-every", "5", "--out", pred});
    INFO(sr.err);
    REQUIRE(sr.code == 0);
    const auto pred_lines = lines(slurp(pred));
    REQUIRE(pred_lines.size() == 12);
    const auto first = json::parse(pred_lines[0]);
    CHECK(first.contains("id"));
    CHECK(first.contains("sample"));
    CHECK(first.contains("caption"));
    const auto trace_text = slurp(dir / "trace" / (first["id"].get<std::string>() + "_0.txt"));
    CHECK(trace_text.rfind("t=10: ", 0) == 0);

    REQUIRE(run({"sample", "--config", (dir / "pred.config.json").string(), "--out", (dir / "pred2.jsonl").string()})
                .code == 0);
    CHECK(slurp(pred) == slurp(dir / "pred2.jsonl"));

    const auto stdout_run = run({"sample", "--ckpt", run_dir + "/model.dckp", "--features", data + "/features.bin",
                                 "--ids", "0,2", "--seed", "9"});
    REQUIRE(stdout_run.code == 0);
    CHECK(lines(stdout_run.out).size() == 2);

    const auto report = (dir / "report.json").string();
    const auto er = run({"eval", "--pred", pred, "--refs", data + "/data.jsonl", "--report", report});
    INFO(er.err);
    REQUIRE(er.code == 0);
    const auto rep = json::parse(slurp(report));
    CHECK(rep["n_images"] == 6);
    CHECK(rep["n_samples_per_image"] == 2);
    CHECK(rep.contains("self_bleu"));
    CHECK(rep["bleu4"].get<double>() >= 0.0);
  }

  TEST_CASE("runtime failures map to their exit codes") {
    testing::TempDir dir("cli_fail");
    std::ofstream(dir / "garbage.dckp") << "not a checkpoint";
    REQUIRE(run({"gen-synth", "--scenes", "2", "--out", (dir / "d").string()}).code == 0);
    CHECK(run({"sample", "--ckpt", (dir / "garbage.dckp").string(), "--vocab", (dir / "none.json").string(),
               "--features", (dir / "d" / "features.bin").string()})
              .code == cli::kExitValidation);
    CHECK(run({"gen-synth", "--scenes", "0", "--out", (dir / "e").string()}).code == cli::kExitValidation);
  }
}
