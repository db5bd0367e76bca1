#include "doctest.h"
#include "sdgp/errors.hpp"
#include "sdgp/perf.hpp"

using namespace sdgp;

namespace {

std::vector<EpochMetrics> stream(std::vector<double> top1, double seconds = 100.0) {
  std::vector<EpochMetrics> s;
  for (std::size_t i = 0; i < top1.size(); ++i) s.push_back({i + 1, seconds, 1.0, top1[i]});
  return s;
}

}  // namespace

TEST_CASE("speedup arithmetic at the one-third data-gradient fraction") {
  CHECK(std::fabs(estimate_speedup(0.3317, 2, 4).total_reduction_percent - 16.6) <= 0.05);
  CHECK(std::fabs(estimate_speedup_for_ratio(0.3317, 4.0).total_reduction_percent - 24.9) <= 0.05);
  CHECK(std::fabs(estimate_speedup(0.3331, 4, 32).reduced_fraction * 100.0 - 4.16) <= 0.01);
  CHECK(estimate_speedup(0.3317, 4, 4).total_reduction_percent == 0.0);
}

TEST_CASE("speedup estimate invariants") {
  for (double f : {0.0, 0.1, 0.3317, 1.0}) {
    double prev = -1.0;
    for (auto [n, m] : {std::pair{8, 8}, {4, 8}, {2, 8}, {1, 8}}) {
      const SpeedupEstimate e = estimate_speedup(f, n, m);
      CHECK(e.reduced_fraction == doctest::Approx(f / e.ratio));
      CHECK(e.total_reduction_percent == doctest::Approx(f * (1.0 - 1.0 / e.ratio) * 100.0));
      CHECK(e.total_reduction_percent >= prev);
      prev = e.total_reduction_percent;
    }
  }
  CHECK(estimate_speedup(0.2, 2, 4).total_reduction_percent < estimate_speedup(0.3, 2, 4).total_reduction_percent);
  CHECK_THROWS_AS(estimate_speedup(0.3, 5, 4), ConfigError);
  CHECK_THROWS_AS(estimate_speedup(1.5, 2, 4), ConfigError);
  CHECK_THROWS_AS(estimate_speedup_for_ratio(0.3, 0.5), ConfigError);
}

TEST_CASE("time to accuracy on a hand-built stream") {
  const TtaEstimate t = estimate_tta(stream({90.0, 95.0, 96.0}), 94.5, 0.30, 1, 2);
  CHECK(t.reached);
  CHECK(t.epoch == 2);
  CHECK(t.seconds == 170.0);
  CHECK(t.raw_seconds == 200.0);
}

TEST_CASE("time to accuracy edge cases") {
  const auto s = stream({90.0, 95.0, 96.0});
  const TtaEstimate dense = estimate_tta(s, 94.5, 0.33, 4, 4);
  CHECK(dense.seconds == dense.raw_seconds);
  CHECK(dense.seconds == 200.0);
  const TtaEstimate never = estimate_tta(s, 99.0, 0.3, 2, 4);
  CHECK_FALSE(never.reached);
  CHECK_THROWS_AS(estimate_tta({}, 94.5, 0.3, 2, 4), InputError);
  double prev = 1e300;
  for (auto [n, m] : {std::pair{8, 8}, {4, 8}, {2, 8}, {1, 8}}) {
    const double t = estimate_tta(s, 94.5, 0.3, n, m).seconds;
    CHECK(t <= prev);
    prev = t;
  }
}

TEST_CASE("profiling a toy CNN") {
  Network net = build_network(tinynet_spec(10), {28, 28, 1});
  net.init(1);
  const TimingProfile p = profile_network(net, 32, 3);
  REQUIRE(p.layers.size() == 16);
  double sum = 0.0;
  for (const LayerTiming& t : p.layers) {
    CHECK(t.forward_s > 0.0);
    CHECK(t.backward_data_s > 0.0);
    if (t.kind == LayerKind::Conv || t.kind == LayerKind::Linear || t.kind == LayerKind::BatchNorm) {
      CHECK(t.backward_weight_s > 0.0);
    } else {
      CHECK(t.backward_weight_s == 0.0);
    }
    CHECK(t.total_s() == t.forward_s + t.backward_data_s + t.backward_weight_s);
    sum += t.total_s();
  }
  CHECK(p.total_s() == doctest::Approx(sum).epsilon(1e-12));
  const double f = p.data_grad_fraction();
  CHECK(f > 0.15);
  CHECK(f < 0.5);
  CHECK_THROWS_AS(profile_network(net, 32, 2), ConfigError);
}

TEST_CASE("work-clock profiles are reproducible") {
  Network net = build_network(tinynet_spec(10), {16, 16, 1});
  net.init(1);
  const TimingProfile a = profile_network(net, 8, 3, ClockKind::Work, 10.0);
  const TimingProfile b = profile_network(net, 8, 3, ClockKind::Work, 10.0);
  CHECK(timing_csv(a) == timing_csv(b));
  CHECK(a.data_grad_fraction() > 0.2);
  CHECK(a.data_grad_fraction() < 0.4);
}

TEST_CASE("timing and metric CSVs round-trip") {
  TimingProfile p;
  p.layers.push_back({"conv1", LayerKind::Conv, 0.001, 0.002, 0.003});
  p.layers.push_back({"relu1", LayerKind::Relu, 0.0005, 0.0005, 0.0});
  const std::string csv = timing_csv(p);
  CHECK(csv.rfind("layer,fwd_ms,bwd_data_ms,bwd_weight_ms\n", 0) == 0);
  const TimingProfile q = parse_timing_csv(csv);
  REQUIRE(q.layers.size() == 2);
  CHECK(q.layers[0].kind == LayerKind::Conv);
  CHECK(q.layers[1].kind == LayerKind::Relu);
  CHECK(q.data_grad_fraction() == doctest::Approx(p.data_grad_fraction()));

  const auto s = stream({50.0, 60.5});
  const std::string m = metrics_csv(s);
  CHECK(m.rfind("epoch,wall_s,train_loss,val_top1\n", 0) == 0);
  const auto back = parse_metrics_csv(m);
  REQUIRE(back.size() == 2);
  CHECK(back[1].val_top1 == 60.5);
  CHECK(back[1].wall_s == 100.0);
  const std::string jl = metrics_jsonl(s);
  CHECK(jl.find("{\"epoch\":1,\"wall_s\":100.0,\"train_loss\":1.0,\"val_top1\":50.0}\n") == 0);
  CHECK_THROWS_AS(parse_metrics_csv("epoch,wall_s\n1,2\n"), InputError);
}
