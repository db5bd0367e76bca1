#include "sdgp/optim.hpp"

#include "sdgp/errors.hpp"

namespace sdgp {

Sgd::Sgd(SgdOptions options) : options_(options) {
  if (options.momentum < 0.0f || options.weight_decay < 0.0f) {
    throw ConfigError("sgd: momentum and weight decay must be non-negative");
  }
}

void Sgd::step(std::span<Param* const> params, float lr) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const Param* p : params) velocity_.emplace_back(p->value.shape());
  }
  if (velocity_.size() != params.size()) throw DimensionError("sgd: parameter count changed between steps");
  const float mu = options_.momentum, wd = options_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    Tensor& v = velocity_[i];
    if (v.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw DimensionError("sgd: shape mismatch for parameter '" + p.name + "'");
    }
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* vv = v.data();
    for (std::size_t j = 0; j < v.size(); ++j) {
      vv[j] = mu * vv[j] + g[j] + wd * w[j];
      w[j] -= lr * vv[j];
    }
  }
}

float cyclic_lr(std::size_t step, std::size_t total_steps, float peak_lr, double warmup) {
  if (total_steps == 0) throw ConfigError("cyclic_lr: total_steps must be >= 1");
  if (!(warmup > 0.0 && warmup < 1.0)) throw ConfigError("cyclic_lr: warmup fraction must lie in (0, 1)");
  if (step >= total_steps) return 0.0f;
  const double s = static_cast<double>(step);
  const double total = static_cast<double>(total_steps);
  const double rise = warmup * total;
  const double frac = s <= rise ? s / rise : (total - s) / (total - rise);
  return static_cast<float>(peak_lr * frac);
}

}  // namespace sdgp
