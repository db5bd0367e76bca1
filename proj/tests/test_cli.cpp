#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Workspace {
 public:
  Workspace() : dir_(fs::temp_directory_path() / ("sdgp_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }
  const fs::path& dir() const { return dir_; }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }
  Result run(const std::string& args, const std::string& env = "") const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = env + " \"" + std::string(SDGP_CLI) + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

 private:
  fs::path dir_;
};

const char* kConfig = R"({
  "seed": 1,
  "dataset": {"kind": "synthetic", "train_samples": 96, "val_samples": 32, "classes": 2, "height": 8, "width": 8},
  "model": {
    "layers": [
      {"type": "conv", "out": 8}, {"type": "batchnorm"}, {"type": "relu"}, {"type": "maxpool"},
      {"type": "conv", "out": 8}, {"type": "relu"}, {"type": "flatten"}, {"type": "linear", "out": 2}
    ]
  },
  "optimizer": {"epochs": 2, "batch_size": 32},
  "prune": {"function": "magnitude", "n": 2, "m": 4}
})";

}  // namespace

TEST_CASE("train writes all four artifacts") {
  Workspace ws;
  const fs::path cfg = ws.write("c.json", kConfig);
  const Result r = ws.run("train --config \"" + cfg.string() + "\" --out \"" + (ws.dir() / "run").string() + "\"");
  REQUIRE(r.code == 0);
  for (const char* f : {"metrics.csv", "metrics.jsonl", "checkpoint.bin", "config.snapshot.json"})
    CHECK(fs::exists(ws.dir() / "run" / f));
  const std::string csv = slurp(ws.dir() / "run" / "metrics.csv");
  CHECK(csv.rfind("epoch,wall_s,train_loss,val_top1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  std::stringstream jl(slurp(ws.dir() / "run" / "metrics.jsonl"));
  std::string line;
  while (std::getline(jl, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.size() == 4);
    for (const char* k : {"epoch", "wall_s", "train_loss", "val_top1"}) CHECK(j.contains(k));
  }
}

TEST_CASE("identical runs produce byte-identical artifacts and the snapshot reproduces them") {
  Workspace ws;
  const fs::path cfg = ws.write("c.json", kConfig);
  const fs::path a = ws.dir() / "a", b = ws.dir() / "b", c = ws.dir() / "c";
  REQUIRE(ws.run("train --config \"" + cfg.string() + "\" --out \"" + a.string() + "\"").code == 0);
  REQUIRE(ws.run("train --config \"" + cfg.string() + "\" --out \"" + b.string() + "\"").code == 0);
  for (const char* f : {"metrics.csv", "metrics.jsonl", "checkpoint.bin", "config.snapshot.json"})
    CHECK(slurp(a / f) == slurp(b / f));
  REQUIRE(ws.run("train --config \"" + (a / "config.snapshot.json").string() + "\" --out \"" + c.string() + "\"")
              .code == 0);
  for (const char* f : {"metrics.csv", "metrics.jsonl", "checkpoint.bin", "config.snapshot.json"})
    CHECK(slurp(a / f) == slurp(c / f));

  const fs::path d = ws.dir() / "d";
  REQUIRE(ws.run("train --seed 2 --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"").code == 0);
  CHECK(slurp(a / "metrics.csv") != slurp(d / "metrics.csv"));
}

TEST_CASE("an indivisible group size fails validation naming the layer") {
  Workspace ws;
  std::string text = kConfig;
  text.replace(text.find("\"m\": 4"), 6, "\"m\": 3");
  const fs::path cfg = ws.write("bad.json", text);
  for (const char* cmd : {"validate", "train"}) {
    const Result r = ws.run(std::string(cmd) + " --config \"" + cfg.string() + "\" --out \"" +
                            (ws.dir() / "x").string() + "\"");
    CHECK(r.code != 0);
    CHECK(r.err.find("bad.json:11:") != std::string::npos);
    CHECK(r.err.find("layer 'conv1'") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(ws.dir() / "x" / "metrics.csv"));
}

TEST_CASE("usage errors exit nonzero") {
  Workspace ws;
  CHECK(ws.run("").code != 0);
  CHECK(ws.run("train").code != 0);
  CHECK(ws.run("train --config \"" + (ws.dir() / "missing.json").string() + "\"").code != 0);
  CHECK(ws.run("frobnicate").code != 0);
  const fs::path cfg = ws.write("c.json", kConfig);
  CHECK(ws.run("validate --config \"" + cfg.string() + "\"").code == 0);
}

TEST_CASE("sweep emits one grid row per cell") {
  Workspace ws;
  const fs::path cfg = ws.write("c.json", kConfig);
  const fs::path out = ws.dir() / "sweep";
  const Result r = ws.run("sweep --config \"" + cfg.string() + "\" --grid 2:4,2:8,4:8,8:4,8:8 --workers 2 --out \"" +
                          out.string() + "\"");
  REQUIRE(r.code == 0);
  const std::string grid = slurp(out / "grid.csv");
  std::stringstream ss(grid);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "r,m,n,val_top1");
  std::vector<std::string> rows;
  while (std::getline(ss, line)) rows.push_back(line);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].rfind("2,4,2,", 0) == 0);
  CHECK(rows[1].rfind("4,8,2,", 0) == 0);
  CHECK(rows[2].rfind("2,8,4,", 0) == 0);
  CHECK(rows[3] == "0.5,4,8,NA");
  CHECK(fs::exists(out / "cells" / "n2_m4_s1" / "metrics.csv"));
  CHECK_FALSE(fs::exists(out / "cells" / "n8_m4_s1"));

  // r = 1 reproduces the dense run exactly.
  std::string dense = kConfig;
  const std::string prune = "\"prune\": {\"function\": \"magnitude\", \"n\": 2, \"m\": 4}";
  dense.replace(dense.find(prune), prune.size(), "\"prune\": {\"enabled\": false}");
  const fs::path dcfg = ws.write("dense.json", dense);
  REQUIRE(ws.run("train --config \"" + dcfg.string() + "\" --out \"" + (ws.dir() / "dense").string() + "\"").code ==
          0);
  CHECK(slurp(ws.dir() / "dense" / "metrics.csv") == slurp(out / "cells" / "n8_m8_s1" / "metrics.csv"));

  // Worker count does not change the results.
  const fs::path serial = ws.dir() / "serial";
  REQUIRE(ws.run("sweep --config \"" + cfg.string() + "\" --grid 2:4,2:8,4:8,8:4,8:8 --out \"" + serial.string() +
                 "\"")
              .code == 0);
  CHECK(slurp(serial / "grid.csv") == grid);
}

TEST_CASE("profile then estimate runs end to end") {
  Workspace ws;
  const fs::path cfg = ws.write("c.json", kConfig);
  const fs::path out = ws.dir() / "perf";
  REQUIRE(ws.run("profile --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"").code == 0);
  const std::string timing = slurp(out / "timing.csv");
  CHECK(timing.rfind("layer,fwd_ms,bwd_data_ms,bwd_weight_ms\n", 0) == 0);
  REQUIRE(ws.run("profile --config \"" + cfg.string() + "\" --out \"" + (ws.dir() / "perf2").string() + "\"").code ==
          0);
  CHECK(slurp(ws.dir() / "perf2" / "timing.csv") == timing);

  REQUIRE(ws.run("train --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"").code == 0);
  const Result r = ws.run("estimate --timing \"" + (out / "timing.csv").string() + "\" --metrics \"" +
                          (out / "metrics.csv").string() + "\" --n 2 --m 4 --target 0 --out \"" + out.string() + "\"");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(out / "estimate.json"));
  for (const char* k : {"n", "m", "ratio", "data_grad_fraction", "reduced_fraction", "total_reduction_percent",
                        "target_accuracy", "tta_reached", "tta_epoch", "tta_seconds", "raw_tta_seconds"})
    CHECK(j.contains(k));
  CHECK(j["tta_reached"] == true);
  CHECK(j["tta_epoch"] == 1);
  CHECK(j["tta_seconds"].get<double>() < j["raw_tta_seconds"].get<double>());
}

TEST_CASE("estimate gives 16.6 percent for 2:4 at f = 0.3317") {
  Workspace ws;
  const Result r = ws.run("estimate --fraction 0.3317 --n 2 --m 4 --out \"" + ws.dir().string() + "\"");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(ws.dir() / "estimate.json"));
  CHECK(std::fabs(j["total_reduction_percent"].get<double>() - 16.6) <= 0.05);
  CHECK(j["tta_reached"].is_null());

  REQUIRE(ws.run("estimate --fraction 0.3317 --n 4 --m 4 --out \"" + ws.dir().string() + "\"").code == 0);
  CHECK(nlohmann::json::parse(slurp(ws.dir() / "estimate.json"))["total_reduction_percent"].get<double>() == 0.0);
  CHECK(ws.run("estimate --fraction 0.3 --n 5 --m 4 --out \"" + ws.dir().string() + "\"").code != 0);
  CHECK(ws.run("estimate --n 2 --m 4 --out \"" + ws.dir().string() + "\"").code != 0);
}

TEST_CASE("output directory falls back to SDGP_OUT_DIR") {
  Workspace ws;
  const fs::path target = ws.dir() / "from_env";
  const Result r = ws.run("estimate --fraction 0.3 --n 2 --m 4", "SDGP_OUT_DIR=\"" + target.string() + "\"");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(target / "estimate.json"));
}
