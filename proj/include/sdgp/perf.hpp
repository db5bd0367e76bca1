#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdgp/network.hpp"
#include "sdgp/trainer.hpp"

namespace sdgp {

struct LayerTiming {
  std::string layer;
  LayerKind kind = LayerKind::Conv;
  double forward_s = 0.0;
  double backward_data_s = 0.0;
  double backward_weight_s = 0.0;
  double total_s() const { return forward_s + backward_data_s + backward_weight_s; }
};

struct TimingProfile {
  std::vector<LayerTiming> layers;

  double total_s() const;
  double conv_backward_data_s() const;
  // Share of the total spent computing conv data gradients.
  double data_grad_fraction() const;
};

// Median per-layer, per-phase cost over `repeats` dense training steps on a
// random batch. repeats must be >= 3. Wall clock mode measures; work clock
// mode converts counted operations at `work_gflops`.
TimingProfile profile_network(Network& net, std::size_t batch_size, std::size_t repeats = 5,
                              ClockKind clock = ClockKind::Wall, double work_gflops = 10.0, std::uint64_t seed = 0);

struct SpeedupEstimate {
  double data_grad_fraction = 0.0;
  double ratio = 1.0;                   // m / n
  double reduced_fraction = 0.0;        // f / r
  double total_reduction_percent = 0.0; // f * (1 - 1/r) * 100
};

SpeedupEstimate estimate_speedup(double data_grad_fraction, std::size_t n, std::size_t m);
SpeedupEstimate estimate_speedup_for_ratio(double data_grad_fraction, double ratio);

struct TtaEstimate {
  bool reached = false;
  std::size_t epoch = 0;     // first epoch meeting the target
  double seconds = 0.0;      // cumulative time, rescaled for the sparse data gradients
  double raw_seconds = 0.0;  // cumulative measured time
};

// Scales each epoch's time by (1 - f * (1 - n/m)) and accumulates up to the
// first epoch whose val_top1 >= target (percent). Throws InputError on an
// empty stream.
TtaEstimate estimate_tta(const std::vector<EpochMetrics>& stream, double target_top1, double data_grad_fraction,
                         std::size_t n, std::size_t m);

// CSV artifacts.
std::string timing_csv(const TimingProfile& profile);
TimingProfile parse_timing_csv(const std::string& text);
std::string metrics_csv(const std::vector<EpochMetrics>& metrics);
std::string metrics_jsonl(const std::vector<EpochMetrics>& metrics);
std::vector<EpochMetrics> parse_metrics_csv(const std::string& text);

}  // namespace sdgp
