#include "sdgp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "sdgp/errors.hpp"

namespace sdgp {

std::string to_string(ClockKind c) { return c == ClockKind::Wall ? "wall" : "work"; }

ClockKind parse_clock(const std::string& name) {
  if (name == "wall") return ClockKind::Wall;
  if (name == "work") return ClockKind::Work;
  throw ConfigError("unknown clock '" + name + "' (expected wall or work)");
}

namespace {

class FlopCounter final : public PhaseObserver {
 public:
  void record(const Layer&, Phase, double, double flops) override { flops_ += flops; }
  double take() { return std::exchange(flops_, 0.0); }

 private:
  double flops_ = 0.0;
};

void check_options(const TrainOptions& o) {
  if (o.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (o.batch_size == 0 || o.eval_batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(o.peak_lr > 0.0f)) throw ConfigError("learning rate must be > 0");
  if (!(o.work_gflops > 0.0)) throw ConfigError("work clock rate must be > 0");
}

}  // namespace

double evaluate(Network& net, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw InputError("evaluate: empty dataset");
  std::size_t correct = 0;
  Tensor batch;
  std::vector<std::uint8_t> labels;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.size());
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    gather_batch(data, idx, batch, labels);
    const Tensor logits = net.forward(batch, Mode::Eval);
    const std::size_t k = logits.dim(1);
    for (std::size_t b = 0; b < labels.size(); ++b) {
      const float* z = logits.data() + b * k;
      correct += static_cast<std::size_t>(std::max_element(z, z + k) - z) == labels[b];
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainState train(Network& net, const Dataset& train_set, const Dataset& val_set, const TrainOptions& options,
                 const std::function<void(const EpochMetrics&)>& on_epoch) {
  check_options(options);
  if (train_set.size() == 0) throw InputError("training set is empty");
  if (val_set.size() == 0) throw InputError("validation set is empty");
  train_set.validate();
  val_set.validate();
  if (options.prune) net.check_prunable(*options.prune);
  const Shape out = net.output_shape(1);
  if (out.size() != 2 || out[1] < train_set.num_classes) {
    throw ConfigError("network output " + shape_to_string(out) + " cannot score " +
                      std::to_string(train_set.num_classes) + " classes");
  }

  TrainState state{.optimizer = Sgd({options.momentum, options.weight_decay})};
  SoftmaxCrossEntropy loss(options.label_smoothing);
  std::mt19937_64 shuffle_rng(options.shuffle_seed);
  const std::size_t steps_per_epoch = (train_set.size() + options.batch_size - 1) / options.batch_size;
  const std::size_t total_steps = steps_per_epoch * options.epochs;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto params = net.params();
  FlopCounter counter;
  PhaseObserver* observer = options.clock == ClockKind::Work ? &counter : nullptr;
  BackwardOptions bwd{.compute_input_grad = false, .keep_layer_grads = false, .observer = observer};

  Tensor batch;
  std::vector<std::uint8_t> labels;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    ++state.shuffle_draws;
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t start = s * options.batch_size;
      const std::size_t end = std::min(start + options.batch_size, order.size());
      gather_batch(train_set, std::span(order).subspan(start, end - start), batch, labels);
      const Tensor logits = net.forward(batch, Mode::Train, observer);
      const double l = loss.forward(logits, labels);
      if (!std::isfinite(l)) throw std::runtime_error("training diverged: non-finite loss at step " +
                                                      std::to_string(state.step));
      loss_sum += l;
      net.backward(loss.backward(), options.prune, bwd);
      state.lr = cyclic_lr(state.step + 1, total_steps + 1, options.peak_lr, options.warmup_fraction);
      state.optimizer.step(params, state.lr);
      ++state.step;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochMetrics m;
    m.epoch = epoch;
    m.wall_s = options.clock == ClockKind::Work ? counter.take() / (options.work_gflops * 1e9) : wall;
    m.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    m.val_top1 = evaluate(net, val_set, options.eval_batch_size);
    state.epoch = epoch;
    state.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return state;
}

}  // namespace sdgp
