#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sdgp/layers.hpp"

namespace sdgp {

struct SgdOptions {
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
};

// SGD with momentum and L2 weight decay:
//   v <- momentum * v + g + weight_decay * w
//   w <- w - lr * v
class Sgd {
 public:
  explicit Sgd(SgdOptions options = {});

  // Velocity buffers are created on the first step and must keep matching
  // the parameter shapes afterwards.
  void step(std::span<Param* const> params, float lr);

  const std::vector<Tensor>& velocity() const { return velocity_; }
  const SgdOptions& options() const { return options_; }

 private:
  SgdOptions options_;
  std::vector<Tensor> velocity_;
};

// One triangular cycle: 0 -> peak over the first `warmup` fraction of the
// steps, then linearly back to 0 at total_steps.
float cyclic_lr(std::size_t step, std::size_t total_steps, float peak_lr, double warmup = 0.3);

}  // namespace sdgp
