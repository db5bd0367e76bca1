#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "doctest.h"
#include "oracles.hpp"
#include "sdgp/errors.hpp"
#include "sdgp/network.hpp"

using namespace sdgp;

namespace {

std::vector<LayerSpec> small_spec() {
  return {{.type = "conv", .out = 4},
          {.type = "batchnorm"},
          {.type = "relu"},
          {.type = "maxpool"},
          {.type = "conv", .out = 8},
          {.type = "relu"},
          {.type = "flatten"},
          {.type = "linear", .out = 3}};
}

PruneConfig prune(std::size_t n, std::size_t m, PruneFunction f = PruneFunction::Magnitude) {
  PruneConfig c;
  c.n = n;
  c.m = m;
  c.function = f;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sdgp_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_CASE("tinynet shapes, names and conv widths") {
  Network net = build_network(tinynet_spec(10), {28, 28, 1});
  CHECK(net.output_shape(5) == Shape{5, 10});
  const auto convs = net.conv_layers();
  REQUIRE(convs.size() == 4);
  CHECK(convs[0]->out_channels() == 32);
  CHECK(convs[1]->out_channels() == 64);
  CHECK(convs[0]->name() == "conv1");
  CHECK(convs[3]->name() == "conv4");
  for (std::size_t i = 0; i < convs.size(); ++i) CHECK(convs[i]->ordinal() == i);
  for (std::size_t m : {2u, 4u, 8u, 16u, 32u}) CHECK_NOTHROW(net.check_prunable(prune(1, m)));

  Network res = build_network(resnet9_tiny_spec(10), {32, 32, 3});
  CHECK(res.output_shape(2) == Shape{2, 10});
  CHECK(res.conv_layers().size() == 7);
}

TEST_CASE("network gradients match finite differences with pruning disabled") {
  Network net = build_network(small_spec(), {6, 6, 2});
  net.init(3);
  std::mt19937_64 rng(4);
  // A full-scale head; the default small one leaves upstream gradients near FD noise.
  Param& head = static_cast<Linear&>(net.layer(net.layer_count() - 1)).weight();
  head.value = oracle::random_tensor(head.value.shape(), rng);
  Tensor x = oracle::random_tensor({2, 6, 6, 2}, rng);
  const Tensor proj = oracle::random_tensor({2, 3}, rng);
  auto loss = [&] { return dot(net.forward(x, Mode::Train), proj); };
  net.forward(x, Mode::Train);
  const BackwardResult r = net.backward(proj, std::nullopt);
  CHECK(r.prune_invocations == 0);

  std::size_t checked = 0, skipped = 0;
  auto check = [&](const std::string& name, const Tensor& analytic, Tensor& t) {
    const oracle::GradCheck c = oracle::check_gradient(analytic, t, loss, 3e-3);
    INFO(name);
    CHECK(c.error < 1e-3);
    checked += c.checked;
    skipped += c.skipped;
  };
  check("input", r.input_grad, x);
  for (Param* p : net.params()) check(p->name, Tensor(p->grad), p->value);
  // Kinks may exclude a few entries, never a meaningful share.
  CHECK(skipped * 20 < checked);
}

TEST_CASE("every conv prunes its output gradient once per backward pass") {
  Network net = build_network(tinynet_spec(10), {16, 16, 1});
  net.init(1);
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({2, 16, 16, 1}, rng);
  const Tensor g = oracle::random_tensor({2, 10}, rng);
  net.forward(x, Mode::Train);
  CHECK(net.backward(g, prune(2, 4)).prune_invocations == 4);
  // Without an input gradient the first conv has no data gradient to prune.
  net.forward(x, Mode::Train);
  BackwardOptions opts;
  opts.compute_input_grad = false;
  const BackwardResult r = net.backward(g, prune(2, 4), opts);
  CHECK(r.prune_invocations == 3);
  CHECK(r.input_grad.empty());
}

TEST_CASE("n == m pruning reproduces the unpruned backward pass bit for bit") {
  Network net = build_network(tinynet_spec(10), {16, 16, 1});
  net.init(5);
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({3, 16, 16, 1}, rng);
  const Tensor g = oracle::random_tensor({3, 10}, rng);
  net.forward(x, Mode::Train);
  const BackwardResult dense = net.backward(g, std::nullopt);
  for (auto f : {PruneFunction::Random, PruneFunction::Magnitude, PruneFunction::RescaledMagnitude}) {
    net.forward(x, Mode::Train);
    const BackwardResult same = net.backward(g, prune(8, 8, f));
    CHECK(same.input_grad == dense.input_grad);
    for (std::size_t i = 0; i < dense.layers.size(); ++i) {
      CHECK(same.layers[i].data_grad == dense.layers[i].data_grad);
      CHECK(same.layers[i].weight_grad == dense.layers[i].weight_grad);
    }
  }
}

TEST_CASE("random keep-sets are redrawn on every backward pass") {
  Network net = build_network(small_spec(), {6, 6, 2});
  net.init(7);
  std::mt19937_64 rng(8);
  const Tensor x = oracle::random_tensor({2, 6, 6, 2}, rng);
  const Tensor g = oracle::random_tensor({2, 3}, rng);
  net.forward(x, Mode::Train);
  const Tensor first = net.backward(g, prune(2, 4, PruneFunction::Random)).input_grad;
  net.forward(x, Mode::Train);
  const Tensor second = net.backward(g, prune(2, 4, PruneFunction::Random)).input_grad;
  CHECK_FALSE(first == second);
}

TEST_CASE("prunability errors name the offending layer") {
  Network net = build_network({{.type = "conv", .out = 32}, {.type = "conv", .out = 30}}, {8, 8, 1});
  CHECK_THROWS_WITH_AS(net.check_prunable(prune(1, 3)), doctest::Contains("layer 'conv1'"), ConfigError);
  CHECK_THROWS_WITH_AS(net.check_prunable(prune(2, 4)), doctest::Contains("layer 'conv2'"), ConfigError);
}

TEST_CASE("builder rejects bad specs") {
  CHECK_THROWS_AS(build_network({{.type = "dense"}}, {4, 4, 1}), ConfigError);
  CHECK_THROWS_AS(build_network({{.type = "conv", .out = 4, .kernel = 7, .padding = 0}}, {4, 4, 1}),
                  ConfigError);
  CHECK_THROWS_AS(build_network({{.type = "linear", .out = 2}}, {4, 4}), ConfigError);
}

TEST_CASE("backward before forward is a state error") {
  Network net = build_network(small_spec(), {6, 6, 2});
  CHECK_THROWS_AS(net.backward(Tensor({1, 3}), std::nullopt), StateError);
}

TEST_CASE("checkpoints round-trip exactly") {
  Network a = build_network(tinynet_spec(10), {12, 12, 1});
  a.init(9);
  // Move the batchnorm running statistics off their initial values.
  std::mt19937_64 rng(10);
  a.forward(oracle::random_tensor({4, 12, 12, 1}, rng), Mode::Train);
  const auto path = temp_path("ckpt.bin");
  a.save(path);

  Network b = build_network(tinynet_spec(10), {12, 12, 1});
  b.init(11);
  b.load(path);
  auto la = a.leaves(), lb = b.leaves();
  for (std::size_t i = 0; i < la.size(); ++i) {
    auto sa = la[i]->state(), sb = lb[i]->state();
    for (std::size_t j = 0; j < sa.size(); ++j) CHECK(*sa[j] == *sb[j]);
  }
  const Tensor x = oracle::random_tensor({2, 12, 12, 1}, rng);
  CHECK(a.forward(x, Mode::Eval) == b.forward(x, Mode::Eval));

  // Header layout.
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "SDGP");
  std::filesystem::remove(path);
}

TEST_CASE("corrupt or mismatched checkpoints are format errors") {
  Network a = build_network(small_spec(), {6, 6, 2});
  a.init(1);
  const auto path = temp_path("bad.bin");
  a.save(path);
  const auto size = std::filesystem::file_size(path);

  Network other = build_network(tinynet_spec(3), {8, 8, 2});
  CHECK_THROWS_AS(other.load(path), FormatError);

  std::filesystem::resize_file(path, size - 5);
  Network b = build_network(small_spec(), {6, 6, 2});
  try {
    b.load(path);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() <= size - 5);
  }

  { std::ofstream(path, std::ios::binary) << "NOPE"; }
  CHECK_THROWS_AS(b.load(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(b.load(path), FormatError);
}
