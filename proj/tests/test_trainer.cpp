#include <cmath>

#include "doctest.h"
#include "sdgp/errors.hpp"
#include "sdgp/layers.hpp"
#include "sdgp/trainer.hpp"

using namespace sdgp;

namespace {

std::vector<LayerSpec> toy_spec(std::size_t classes) {
  return {{.type = "conv", .out = 8},  {.type = "batchnorm"}, {.type = "relu"}, {.type = "maxpool"},
          {.type = "conv", .out = 16}, {.type = "batchnorm"}, {.type = "relu"}, {.type = "maxpool"},
          {.type = "flatten"},         {.type = "linear", .out = classes}};
}

std::pair<Dataset, Dataset> toy(std::size_t train, std::size_t val, std::uint64_t seed, std::size_t classes = 3) {
  SynthOptions o;
  o.samples = train + val;
  o.classes = classes;
  o.height = o.width = 8;
  o.noise = 0.8;
  o.seed = seed;
  return split_dataset(synth_dataset(o), train);
}

TrainOptions quick(std::size_t epochs = 3) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = 32;
  o.peak_lr = 0.05f;
  o.clock = ClockKind::Work;
  return o;
}

TrainState run(const TrainOptions& o, std::uint64_t init_seed = 2) {
  const auto [train_set, val_set] = toy(480, 120, 1);
  Network net = build_network(toy_spec(3), train_set.sample_shape());
  net.init(init_seed);
  return train(net, train_set, val_set, o);
}

}  // namespace

TEST_CASE("training learns the toy task and reports every epoch") {
  const auto [train_set, val_set] = toy(480, 120, 1);
  Network net = build_network(toy_spec(3), train_set.sample_shape());
  net.init(2);
  std::vector<EpochMetrics> seen;
  const TrainState st = train(net, train_set, val_set, quick(4), [&](const EpochMetrics& m) { seen.push_back(m); });
  REQUIRE(st.history.size() == 4);
  CHECK(seen == st.history);
  CHECK(st.step == 4 * 15);
  CHECK(st.history.back().val_top1 > 80.0);
  CHECK(st.history.back().train_loss < st.history.front().train_loss);
  for (const auto& m : st.history) CHECK(m.wall_s > 0.0);
  // The schedule ends near zero without reaching it.
  CHECK(st.lr > 0.0f);
  CHECK(st.lr < 0.01f);
}

TEST_CASE("identical options and seeds give identical metric streams") {
  TrainOptions o = quick(2);
  PruneConfig p;
  p.function = PruneFunction::Random;
  p.seed = 3;
  o.prune = p;
  CHECK(run(o).history == run(o).history);
  o.shuffle_seed = 99;
  CHECK_FALSE(run(o).history == run(quick(2)).history);
}

TEST_CASE("wall clock mode measures real time") {
  TrainOptions o = quick(1);
  o.clock = ClockKind::Wall;
  const TrainState st = run(o);
  CHECK(st.history[0].wall_s > 0.0);
}

TEST_CASE("first batch loss at initialization sits near ln k") {
  const auto [train_set, val_set] = toy(64, 10, 5, 10);
  Network net = build_network(toy_spec(10), train_set.sample_shape());
  net.init(6);
  SoftmaxCrossEntropy ce(0.0f);
  const double l = ce.forward(net.forward(train_set.images, Mode::Train), train_set.labels);
  CHECK(std::fabs(l - std::log(10.0)) < 0.2);
  SoftmaxCrossEntropy smooth(0.1f);
  CHECK(smooth.forward(net.forward(train_set.images, Mode::Train), train_set.labels) >=
        smoothed_label_entropy(0.1f, 10));
}

TEST_CASE("invalid inputs are rejected before any step") {
  const auto [train_set, val_set] = toy(64, 10, 5);
  Network net = build_network(toy_spec(3), train_set.sample_shape());
  net.init(1);
  Dataset empty;
  CHECK_THROWS_AS(train(net, empty, val_set, quick()), InputError);
  CHECK_THROWS_AS(train(net, train_set, empty, quick()), InputError);

  TrainOptions bad = quick();
  PruneConfig p;
  p.n = 1;
  p.m = 3;
  bad.prune = p;
  CHECK_THROWS_WITH_AS(train(net, train_set, val_set, bad), doctest::Contains("conv1"), ConfigError);
  CHECK(net.backward_passes() == 0);

  bad = quick();
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(net, train_set, val_set, bad), ConfigError);
  bad = quick();
  bad.label_smoothing = 1.0f;
  CHECK_THROWS_AS(train(net, train_set, val_set, bad), ConfigError);

  Network narrow = build_network(toy_spec(2), train_set.sample_shape());
  CHECK_THROWS_AS(train(narrow, train_set, val_set, quick()), ConfigError);
}

TEST_CASE("evaluation reports percent top-1") {
  const auto [train_set, val_set] = toy(64, 40, 5);
  Network net = build_network(toy_spec(3), train_set.sample_shape());
  net.init(1);
  const double acc = evaluate(net, val_set, 7);
  CHECK(acc >= 0.0);
  CHECK(acc <= 100.0);
  CHECK(acc == evaluate(net, val_set, 40));
}

TEST_CASE("clock names round-trip") {
  CHECK(parse_clock("wall") == ClockKind::Wall);
  CHECK(parse_clock(to_string(ClockKind::Work)) == ClockKind::Work);
  CHECK_THROWS_AS(parse_clock("cpu"), ConfigError);
}
