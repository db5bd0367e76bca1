// Experiment runner: sdgp <train|sweep|profile|estimate|validate> --config <path> [...]
#include <malloc.h>

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sdgp/errors.hpp"
#include "sdgp/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::size_t workers = 1;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "Experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--out", c.out, "Output directory (default: config output_dir, $SDGP_OUT_DIR, ./out)");
  cmd->add_option("--workers", c.workers, "Parallel sweep workers")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "Override the top-level seed");
}

sdgp::ExperimentConfig load(const Common& c) {
  sdgp::ExperimentConfig cfg = c.config.empty() ? sdgp::parse_config("{}", "<defaults>") : sdgp::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::optional<std::filesystem::path> out_flag(const Common& c) {
  if (c.out.empty()) return std::nullopt;
  return std::filesystem::path(c.out);
}

}  // namespace

int main(int argc, char** argv) {
  // Activations are large and short-lived; keeping freed pages in the heap
  // avoids refaulting them on every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Structured data gradient pruning experiments"};
  app.require_subcommand(1);
  Common common;

  auto* train = app.add_subcommand("train", "Train one model and write metrics, checkpoint and config snapshot");
  add_common(train, common);

  auto* sweep = app.add_subcommand("sweep", "Train one model per (n, m) cell and write grid.csv");
  add_common(sweep, common);
  std::string grid;
  std::vector<std::uint64_t> seeds;
  sweep->add_option("--grid", grid, "Cells as n:m pairs, e.g. 2:4,2:8,4:8");
  sweep->add_option("--seeds", seeds, "Seeds to average over")->delimiter(',');

  auto* profile = app.add_subcommand("profile", "Time each layer's phases and write timing.csv");
  add_common(profile, common);

  auto* estimate = app.add_subcommand("estimate", "Speedup and time-to-accuracy estimate, written to estimate.json");
  add_common(estimate, common, false);
  sdgp::EstimateRequest req;
  std::string metrics, timing;
  estimate->add_option("--metrics", metrics, "metrics.csv from a training run");
  estimate->add_option("--timing", timing, "timing.csv from a profile run");
  estimate->add_option("--fraction", req.fraction, "Data-gradient share of runtime")->check(CLI::Range(0.0, 1.0));
  estimate->add_option("--n", req.n, "Kept values per group");
  estimate->add_option("--m", req.m, "Group size");
  estimate->add_option("--target", req.target_accuracy, "Target top-1 accuracy in percent");

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  add_common(validate, common);

  CLI11_PARSE(app, argc, argv);

  try {
    sdgp::ExperimentConfig cfg = load(common);
    const auto out = sdgp::resolve_output_dir(cfg, out_flag(common));
    if (train->parsed()) {
      sdgp::run_train(cfg, out, &std::cerr);
      std::cout << "wrote " << out.string() << "\n";
    } else if (sweep->parsed()) {
      if (!grid.empty()) cfg.sweep.cells = sdgp::parse_grid(grid);
      if (!seeds.empty()) cfg.sweep.seeds = seeds;
      std::cout << sdgp::grid_csv(sdgp::run_sweep(cfg, out, common.workers, &std::cerr));
    } else if (profile->parsed()) {
      const auto p = sdgp::run_profile(cfg, out);
      std::cout << "data_grad_fraction " << p.data_grad_fraction() << "\n";
    } else if (estimate->parsed()) {
      if (!metrics.empty()) req.metrics = metrics;
      if (!timing.empty()) req.timing = timing;
      std::cout << sdgp::run_estimate(cfg, req, out).dump(2) << "\n";
    } else if (validate->parsed()) {
      sdgp::validate_config(cfg);
      std::cout << "ok\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
