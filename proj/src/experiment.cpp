#include "sdgp/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "sdgp/errors.hpp"
#include "sdgp/rng.hpp"

namespace sdgp {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
  if (!out) throw InputError("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

DataSplits load_datasets(const ExperimentConfig& cfg) {
  const DatasetSpec& d = cfg.dataset;
  DataSplits s;
  if (d.kind == "synthetic") {
    SynthOptions o;
    o.classes = d.classes;
    o.height = d.height;
    o.width = d.width;
    o.channels = d.channels;
    o.noise = d.noise;
    o.seed = d.seed.value_or(derive_seed(cfg.seed, "data"));
    // Train and validation share the class prototypes; samples come from one draw.
    o.samples = d.train_samples + d.val_samples;
    std::tie(s.train, s.val) = split_dataset(synth_dataset(o, Normalization::UnitRange), d.train_samples);
  } else if (d.kind == "mnist") {
    s.train = load_idx(d.train_images, d.train_labels, Normalization::UnitRange);
    s.val = load_idx(d.test_images, d.test_labels, Normalization::UnitRange);
    s.train.num_classes = s.val.num_classes = 10;
  } else {
    s.train = load_cifar10_binary(d.train_files, Normalization::UnitRange);
    s.val = load_cifar10_binary({d.test_file}, Normalization::UnitRange);
  }
  if (d.limit_train) truncate(s.train, d.limit_train);
  if (d.limit_val) truncate(s.val, d.limit_val);
  standardize(s.train);
  standardize_with(s.val, s.train.channel_mean, s.train.channel_std);
  s.train.validate();
  s.val.validate();
  return s;
}

Network make_network(const ExperimentConfig& cfg, const Shape& sample_shape, std::size_t classes) {
  Network net = build_network(cfg.layer_specs(classes), sample_shape);
  net.init(derive_seed(cfg.seed, "init"));
  return net;
}

fs::path resolve_output_dir(const ExperimentConfig& cfg, const std::optional<fs::path>& cli) {
  if (cli && !cli->empty()) return *cli;
  if (cfg.output_dir && !cfg.output_dir->empty()) return *cfg.output_dir;
  if (const char* env = std::getenv("SDGP_OUT_DIR"); env && *env) return env;
  return "out";
}

TrainState run_train(const ExperimentConfig& cfg, const fs::path& out, std::ostream* log) {
  validate_config(cfg);
  return run_train(cfg, load_datasets(cfg), out, log);
}

TrainState run_train(const ExperimentConfig& cfg, const DataSplits& data, const fs::path& out, std::ostream* log) {
  Network net = make_network(cfg, data.train.sample_shape(), data.train.num_classes);
  fs::create_directories(out);
  TrainState state = train(net, data.train, data.val, cfg.train_options(), [&](const EpochMetrics& e) {
    if (log) {
      *log << "epoch " << e.epoch << "  loss " << format_double("%.4f", e.train_loss) << "  val_top1 "
           << format_double("%.2f", e.val_top1) << "  time " << format_double("%.2f", e.wall_s) << "s\n";
      log->flush();
    }
  });
  write_file(out / "metrics.csv", metrics_csv(state.history));
  write_file(out / "metrics.jsonl", metrics_jsonl(state.history));
  write_file(out / "config.snapshot.json", to_json(cfg).dump(2) + "\n");
  net.save(out / "checkpoint.bin");
  return state;
}

double SweepCell::mean_top1() const {
  if (val_top1.empty()) return std::nan("");
  double s = 0.0;
  for (double v : val_top1) s += v;
  return s / static_cast<double>(val_top1.size());
}

std::string grid_csv(const std::vector<SweepCell>& cells) {
  std::string s = "r,m,n,val_top1\n";
  for (const auto& c : cells) {
    const double r = static_cast<double>(c.m) / static_cast<double>(c.n);
    s += format_double("%.4g", r) + "," + std::to_string(c.m) + "," + std::to_string(c.n) + ",";
    s += c.feasible ? format_double("%.4f", c.mean_top1()) : std::string("NA");
    s += "\n";
  }
  return s;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, const fs::path& out, std::size_t workers,
                                 std::ostream* log) {
  if (cfg.sweep.cells.empty()) throw ConfigError(cfg.where("/sweep") + "sweep needs at least one (n, m) cell");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  const std::vector<std::uint64_t> seeds = cfg.sweep.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed}
                                                                   : cfg.sweep.seeds;
  std::vector<SweepCell> cells;
  struct Job {
    std::size_t cell;
    std::size_t seed_index;
    ExperimentConfig cfg;
    fs::path dir;
  };
  std::vector<Job> jobs;
  for (const auto& [n, m] : cfg.sweep.cells) {
    SweepCell c{n, m, n >= 1 && n <= m, {}};
    if (c.n == 0) throw ConfigError(cfg.where("/sweep/cells") + "sweep cell n must be >= 1");
    if (c.feasible) {
      for (std::size_t si = 0; si < seeds.size(); ++si) {
        ExperimentConfig run = cfg;
        run.seed = seeds[si];
        run.prune.enabled = true;
        run.prune.config.n = n;
        run.prune.config.m = m;
        run.prune.config.validate();
        validate_config(run);
        jobs.push_back({cells.size(), si, std::move(run),
                        out / "cells" / ("n" + std::to_string(n) + "_m" + std::to_string(m) + "_s" +
                                         std::to_string(seeds[si]))});
      }
      c.val_top1.assign(seeds.size(), 0.0);
    }
    cells.push_back(std::move(c));
  }

  // Data depends on the seed only through synthetic generation; load once per seed.
  std::vector<std::optional<DataSplits>> data(seeds.size());
  for (const Job& j : jobs) {
    if (!data[j.seed_index]) data[j.seed_index] = load_datasets(j.cfg);
  }

  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& j = jobs[i];
      try {
        TrainState st = run_train(j.cfg, *data[j.seed_index], j.dir, nullptr);
        cells[j.cell].val_top1[j.seed_index] = st.history.back().val_top1;
        if (log) {
          std::lock_guard lock(log_mutex);
          *log << j.dir.filename().string() << ": val_top1 " << format_double("%.2f", st.history.back().val_top1)
               << "\n";
          log->flush();
        }
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const std::size_t threads = std::min(workers, std::max<std::size_t>(jobs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  fs::create_directories(out);
  write_file(out / "grid.csv", grid_csv(cells));
  return cells;
}

TimingProfile run_profile(const ExperimentConfig& cfg, const fs::path& out) {
  validate_config(cfg);
  const auto [sample, classes] = dataset_geometry(cfg.dataset);
  Network net = make_network(cfg, sample, classes);
  const std::size_t batch = cfg.profile.batch_size ? cfg.profile.batch_size : cfg.optimizer.batch_size;
  TimingProfile profile = profile_network(net, batch, cfg.profile.repeats, cfg.clock, cfg.work_gflops,
                                          derive_seed(cfg.seed, "profile"));
  fs::create_directories(out);
  write_file(out / "timing.csv", timing_csv(profile));
  return profile;
}

nlohmann::ordered_json run_estimate(const ExperimentConfig& cfg, const EstimateRequest& req, const fs::path& out) {
  const std::size_t n = req.n.value_or(cfg.prune.config.n);
  const std::size_t m = req.m.value_or(cfg.prune.config.m);
  PruneConfig pc;
  pc.n = n;
  pc.m = m;
  pc.validate();

  double fraction = 0.0;
  if (req.fraction) {
    fraction = *req.fraction;
  } else if (req.timing || !cfg.estimate.timing.empty()) {
    const fs::path p = req.timing ? *req.timing : cfg.estimate.timing;
    fraction = parse_timing_csv(read_file(p)).data_grad_fraction();
  } else if (cfg.estimate.fraction) {
    fraction = *cfg.estimate.fraction;
  } else {
    throw ConfigError("estimate needs a data-gradient fraction (--fraction, --timing, or estimate.fraction)");
  }
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("data-gradient fraction must lie in [0, 1]");

  const SpeedupEstimate s = estimate_speedup(fraction, n, m);
  const double target = req.target_accuracy.value_or(cfg.estimate.target_accuracy);

  nlohmann::ordered_json j;
  j["n"] = n;
  j["m"] = m;
  j["ratio"] = s.ratio;
  j["data_grad_fraction"] = s.data_grad_fraction;
  j["reduced_fraction"] = s.reduced_fraction;
  j["total_reduction_percent"] = s.total_reduction_percent;
  j["target_accuracy"] = target;

  std::optional<fs::path> metrics = req.metrics;
  if (!metrics && !cfg.estimate.metrics.empty()) metrics = cfg.estimate.metrics;
  if (metrics) {
    const TtaEstimate t = estimate_tta(parse_metrics_csv(read_file(*metrics)), target, fraction, n, m);
    j["tta_reached"] = t.reached;
    j["tta_epoch"] = t.reached ? nlohmann::ordered_json(t.epoch) : nlohmann::ordered_json(nullptr);
    j["tta_seconds"] = t.reached ? nlohmann::ordered_json(t.seconds) : nlohmann::ordered_json(nullptr);
    j["raw_tta_seconds"] = t.reached ? nlohmann::ordered_json(t.raw_seconds) : nlohmann::ordered_json(nullptr);
  } else {
    j["tta_reached"] = nullptr;
    j["tta_epoch"] = nullptr;
    j["tta_seconds"] = nullptr;
    j["raw_tta_seconds"] = nullptr;
  }
  fs::create_directories(out);
  write_file(out / "estimate.json", j.dump(2) + "\n");
  return j;
}

}  // namespace sdgp
