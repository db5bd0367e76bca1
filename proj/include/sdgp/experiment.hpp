#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdgp/config.hpp"
#include "sdgp/perf.hpp"

namespace sdgp {

struct DataSplits {
  Dataset train;
  Dataset val;  // standardized with the training statistics
};

DataSplits load_datasets(const ExperimentConfig& cfg);

// Builds the configured model for the data geometry and initializes it from
// the experiment seed.
Network make_network(const ExperimentConfig& cfg, const Shape& sample_shape, std::size_t classes);

// --out, then the config's output_dir, then $SDGP_OUT_DIR, then "out".
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& cli);

// Writes metrics.csv, metrics.jsonl, checkpoint.bin and config.snapshot.json.
TrainState run_train(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream* log = nullptr);
// Same, reusing already loaded data.
TrainState run_train(const ExperimentConfig& cfg, const DataSplits& data, const std::filesystem::path& out,
                     std::ostream* log = nullptr);

struct SweepCell {
  std::size_t n = 0;
  std::size_t m = 0;
  bool feasible = true;
  std::vector<double> val_top1;  // one per seed
  double mean_top1() const;
};

// One run per feasible (n, m) cell and seed, in cells/n<n>_m<m>_s<seed>/.
// grid.csv holds r,m,n,val_top1 with seed-averaged accuracy, NA when n > m.
std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                 std::size_t workers = 1, std::ostream* log = nullptr);
std::string grid_csv(const std::vector<SweepCell>& cells);

// Writes timing.csv.
TimingProfile run_profile(const ExperimentConfig& cfg, const std::filesystem::path& out);

struct EstimateRequest {
  std::optional<double> fraction;                // overrides timing-derived fraction
  std::optional<std::filesystem::path> timing;   // timing.csv to derive the fraction from
  std::optional<std::filesystem::path> metrics;  // metrics.csv for the TTA estimate
  std::optional<std::size_t> n, m;
  std::optional<double> target_accuracy;
};

// Writes estimate.json and returns its content.
nlohmann::ordered_json run_estimate(const ExperimentConfig& cfg, const EstimateRequest& request,
                                    const std::filesystem::path& out);

}  // namespace sdgp
