#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sdgp/data.hpp"
#include "sdgp/network.hpp"
#include "sdgp/prune.hpp"
#include "sdgp/trainer.hpp"

namespace sdgp {

struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | mnist | cifar10
  // synthetic
  std::size_t train_samples = 2000;
  std::size_t val_samples = 500;
  std::size_t classes = 2;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  double noise = 0.5;
  std::optional<std::uint64_t> seed;
  // mnist (IDX)
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  // cifar10 (binary batches)
  std::vector<std::filesystem::path> train_files;
  std::filesystem::path test_file;
  // 0 keeps every sample
  std::size_t limit_train = 0;
  std::size_t limit_val = 0;
};

struct ModelSpec {
  std::string preset = "tinynet";  // tinynet | resnet9_tiny | "" (explicit layers)
  std::vector<LayerSpec> layers;
};

struct OptimizerSpec {
  float lr = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  float label_smoothing = 0.1f;
  double warmup_fraction = 0.3;
};

struct PruneSpec {
  bool enabled = false;
  PruneConfig config;
  bool seed_given = false;  // otherwise derived from the top-level seed
};

struct ProfileSpec {
  std::size_t repeats = 5;
  std::size_t batch_size = 0;  // 0: optimizer batch size
};

struct SweepSpec {
  std::vector<std::pair<std::size_t, std::size_t>> cells;  // (n, m), may include infeasible n > m
  std::vector<std::uint64_t> seeds;                         // empty: the top-level seed
};

struct EstimateSpec {
  std::optional<double> fraction;
  double target_accuracy = 94.5;
  std::filesystem::path metrics;
  std::filesystem::path timing;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  // Work time is reproducible; wall time is measured.
  ClockKind clock = ClockKind::Work;
  double work_gflops = 10.0;
  std::optional<std::filesystem::path> output_dir;
  DatasetSpec dataset;
  ModelSpec model;
  OptimizerSpec optimizer;
  PruneSpec prune;
  ProfileSpec profile;
  SweepSpec sweep;
  EstimateSpec estimate;

  // Where each JSON pointer (e.g. "/prune/m") appeared in the source document.
  std::map<std::string, std::size_t> lines;
  std::string source = "<config>";

  std::size_t line_of(const std::string& pointer) const;
  // "<source>:<line>: " for the pointer (or its closest located ancestor).
  std::string where(const std::string& pointer) const;

  std::vector<LayerSpec> layer_specs(std::size_t classes) const;
  std::optional<PruneConfig> prune_config() const;
  TrainOptions train_options() const;
};

// Parses and schema-checks a config document. Relative dataset paths resolve
// against base_dir. Errors are ConfigError with "<source>:<line>: " prefixes.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Checks that dataset files exist and that the model builds for the data
// with conv widths divisible by the prune group size.
void validate_config(const ExperimentConfig& cfg);

// Per-sample [H,W,C] and class count implied by the dataset spec, read from
// file headers where needed.
std::pair<Shape, std::size_t> dataset_geometry(const DatasetSpec& spec);

// Fully resolved document; parse_config(to_json(c)) reproduces c.
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

// "2:4,2:8,4:8" -> {(2,4),(2,8),(4,8)}
std::vector<std::pair<std::size_t, std::size_t>> parse_grid(const std::string& text);

}  // namespace sdgp
