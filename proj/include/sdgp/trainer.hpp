#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sdgp/data.hpp"
#include "sdgp/network.hpp"
#include "sdgp/optim.hpp"

namespace sdgp {

enum class ClockKind {
  Wall,  // steady-clock seconds
  Work,  // counted floating-point operations / nominal rate; reproducible
};

std::string to_string(ClockKind c);
ClockKind parse_clock(const std::string& name);

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  float peak_lr = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  float label_smoothing = 0.1f;
  double warmup_fraction = 0.3;
  std::uint64_t shuffle_seed = 0;
  std::optional<PruneConfig> prune;
  ClockKind clock = ClockKind::Wall;
  double work_gflops = 10.0;
  std::size_t eval_batch_size = 250;
};

struct EpochMetrics {
  std::size_t epoch = 0;    // 1-based
  double wall_s = 0.0;      // training time of this epoch
  double train_loss = 0.0;  // mean over batches
  double val_top1 = 0.0;    // percent
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainState {
  std::size_t epoch = 0;
  std::size_t step = 0;
  float lr = 0.0f;
  Sgd optimizer;
  std::uint64_t shuffle_draws = 0;
  std::vector<EpochMetrics> history;
};

// Runs options.epochs epochs of SGD on `train`, evaluating on `val` after each.
// The network must already be initialized. Throws ConfigError for invalid
// hyperparameters or a network whose conv widths do not fit options.prune,
// and InputError for empty datasets, before any step is taken.
TrainState train(Network& net, const Dataset& train, const Dataset& val, const TrainOptions& options,
                 const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Top-1 accuracy in percent, evaluation mode.
double evaluate(Network& net, const Dataset& data, std::size_t batch_size = 250);

}  // namespace sdgp
