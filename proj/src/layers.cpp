#include "sdgp/layers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "sdgp/errors.hpp"
#include "sdgp/rng.hpp"

namespace sdgp {

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(PhaseObserver* observer, const Layer& layer, Phase phase, const Stopwatch& sw, double flops) {
  if (observer) observer->record(layer, phase, sw.seconds(), flops);
}

void check_grad_shape(const Tensor& grad, const Shape& expected, const std::string& layer) {
  if (grad.shape() != expected) {
    throw DimensionError(layer + ": output gradient " + shape_to_string(grad.shape()) + " does not match output " +
                         shape_to_string(expected));
  }
}

void fill_normal(Tensor& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (float& v : t.values()) v = static_cast<float>(dist(rng));
}

// Column sums of a (rows x cols) tensor, accumulated row by row.
Tensor column_sums(const Tensor& t) {
  const std::size_t cols = t.channels(), rows = t.rows();
  Tensor out({cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += t[r * cols + c];
  return out;
}

// Transpose of a row-major (rows x cols) block.
std::vector<float> transposed(const float* src, std::size_t rows, std::size_t cols) {
  std::vector<float> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  return out;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Linear: return "linear";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Residual: return "residual";
  }
  return "?";
}

void Layer::require_cache(bool cached) const {
  if (!cached) throw StateError((name_.empty() ? to_string(kind()) : name_) + ": backward called before forward");
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::size_t padding)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride), padding_(padding) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw ConfigError("conv: channels, kernel and stride must be >= 1");
  }
  weight_ = {"weight", Tensor({kernel, kernel, in_channels, out_channels}), Tensor({kernel, kernel, in_channels, out_channels})};
  bias_ = {"bias", Tensor({out_channels}), Tensor({out_channels})};
}

ConvShape Conv2d::conv_shape(const Shape& input) const {
  if (input.size() != 4 || input[3] != in_channels_) {
    throw DimensionError((name_.empty() ? std::string("conv") : name_) + ": expected [B,H,W," +
                         std::to_string(in_channels_) + "] input, got " + shape_to_string(input));
  }
  ConvShape cs{input[0], in_channels_, input[1], input[2], out_channels_, kernel_, stride_, padding_};
  cs.validate();
  return cs;
}

Shape Conv2d::output_shape(const Shape& input) const { return conv_shape(input).output_shape(); }

Tensor Conv2d::forward(const Tensor& input, Mode, PhaseObserver* observer) {
  Stopwatch sw;
  const ConvShape cs = conv_shape(input.shape());
  im2col(input, cs, cols_);
  const std::size_t rows = cs.out_positions(), patch = cs.patch_size(), n = out_channels_;
  Tensor out(cs.output_shape());
  gemm(cols_.data(), weight_.value.data(), out.data(), rows, patch, n);
  const float* b = bias_.value.data();
  float* o = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) o[r * n + c] += b[c];
  cached_shape_ = cs;
  cached_ = true;
  report(observer, *this, Phase::Forward, sw, 2.0 * rows * patch * n);
  return out;
}

void Conv2d::backward_weight(const Tensor& output_grad, Tensor& weight_grad, Tensor& bias_grad) const {
  require_cache(cached_);
  const std::size_t rows = cached_shape_.out_positions(), patch = cached_shape_.patch_size();
  weight_grad = Tensor(weight_.value.shape());
  gemm_tn(cols_.data(), output_grad.data(), weight_grad.data(), rows, patch, out_channels_);
  bias_grad = column_sums(output_grad);
}

Tensor Conv2d::backward_data(const Tensor& output_grad, const PruneConfig* prune, std::uint64_t pass,
                             std::size_t* prune_calls) const {
  require_cache(cached_);
  const std::size_t rows = cached_shape_.out_positions(), patch = cached_shape_.patch_size();
  const Tensor* grad = &output_grad;
  Tensor pruned;
  if (prune) {
    PruneConfig cfg = *prune;
    cfg.seed = hash_combine(hash_combine(prune->seed, pass), ordinal_);
    pruned = sdgp(output_grad, cfg);
    grad = &pruned;
    if (prune_calls) ++*prune_calls;
  }
  const std::vector<float> wt = transposed(weight_.value.data(), patch, out_channels_);
  if (dcols_.shape() != Shape{rows, patch}) dcols_ = Tensor({rows, patch});
  gemm(grad->data(), wt.data(), dcols_.data(), rows, out_channels_, patch);
  return col2im(dcols_, cached_shape_);
}

LayerGrads Conv2d::backward(const Tensor& output_grad, const BackwardContext& ctx) {
  require_cache(cached_);
  check_grad_shape(output_grad, cached_shape_.output_shape(), name_);
  const double flops = 2.0 * cached_shape_.out_positions() * cached_shape_.patch_size() * out_channels_;
  LayerGrads g;
  if (ctx.keep_output_grad) g.output_grad = output_grad;
  {
    Stopwatch sw;
    backward_weight(output_grad, weight_.grad, bias_.grad);
    report(ctx.observer, *this, Phase::BackwardWeight, sw, flops);
  }
  g.weight_grad = weight_.grad;
  g.bias_grad = bias_.grad;
  if (ctx.need_data_grad) {
    Stopwatch sw;
    g.data_grad = backward_data(output_grad, ctx.prune, ctx.pass, ctx.prune_calls);
    report(ctx.observer, *this, Phase::BackwardData, sw, flops);
  }
  return g;
}

void Conv2d::init(std::mt19937_64& rng) {
  fill_normal(weight_.value, rng, std::sqrt(2.0 / static_cast<double>(kernel_ * kernel_ * in_channels_)));
  bias_.value.fill(0.0f);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in_features, std::size_t out_features) : in_(in_features), out_(out_features) {
  if (in_features == 0 || out_features == 0) throw ConfigError("linear: feature counts must be >= 1");
  weight_ = {"weight", Tensor({in_, out_}), Tensor({in_, out_})};
  bias_ = {"bias", Tensor({out_}), Tensor({out_})};
}

Shape Linear::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != in_) {
    throw DimensionError((name_.empty() ? std::string("linear") : name_) + ": expected [B," + std::to_string(in_) +
                         "] input, got " + shape_to_string(input));
  }
  return {input[0], out_};
}

Tensor Linear::forward(const Tensor& input, Mode, PhaseObserver* observer) {
  Stopwatch sw;
  const Shape out_shape = output_shape(input.shape());
  Tensor out(out_shape);
  const std::size_t batch = input.dim(0);
  gemm(input.data(), weight_.value.data(), out.data(), batch, in_, out_);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < out_; ++c) out[r * out_ + c] += bias_.value[c];
  input_ = input;
  cached_ = true;
  report(observer, *this, Phase::Forward, sw, 2.0 * batch * in_ * out_);
  return out;
}

LayerGrads Linear::backward(const Tensor& output_grad, const BackwardContext& ctx) {
  require_cache(cached_);
  const std::size_t batch = input_.dim(0);
  check_grad_shape(output_grad, {batch, out_}, name_);
  const double flops = 2.0 * batch * in_ * out_;
  LayerGrads g;
  if (ctx.keep_output_grad) g.output_grad = output_grad;
  {
    Stopwatch sw;
    gemm_tn(input_.data(), output_grad.data(), weight_.grad.data(), batch, in_, out_);
    bias_.grad = column_sums(output_grad);
    report(ctx.observer, *this, Phase::BackwardWeight, sw, flops);
  }
  g.weight_grad = weight_.grad;
  g.bias_grad = bias_.grad;
  if (ctx.need_data_grad) {
    Stopwatch sw;
    const std::vector<float> wt = transposed(weight_.value.data(), in_, out_);
    g.data_grad = Tensor({batch, in_});
    gemm(output_grad.data(), wt.data(), g.data_grad.data(), batch, out_, in_);
    report(ctx.observer, *this, Phase::BackwardData, sw, flops);
  }
  return g;
}

void Linear::init(std::mt19937_64& rng) {
  fill_normal(weight_.value, rng, std::sqrt(1.0 / static_cast<double>(in_)));
  bias_.value.fill(0.0f);
}

// ---------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& input, Mode, PhaseObserver* observer) {
  Stopwatch sw;
  Tensor out(input.shape());
  active_.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool on = input[i] > 0.0f;
    active_[i] = on;
    out[i] = on ? input[i] : 0.0f;
  }
  shape_ = input.shape();
  cached_ = true;
  report(observer, *this, Phase::Forward, sw, static_cast<double>(input.size()));
  return out;
}

LayerGrads Relu::backward(const Tensor& output_grad, const BackwardContext& ctx) {
  require_cache(cached_);
  check_grad_shape(output_grad, shape_, name_);
  LayerGrads g;
  if (ctx.keep_output_grad) g.output_grad = output_grad;
  if (ctx.need_data_grad) {
    Stopwatch sw;
    g.data_grad = Tensor(shape_);
    for (std::size_t i = 0; i < output_grad.size(); ++i) g.data_grad[i] = active_[i] ? output_grad[i] : 0.0f;
    report(ctx.observer, *this, Phase::BackwardData, sw, static_cast<double>(output_grad.size()));
  }
  return g;
}

// ---------------------------------------------------------------- MaxPool2d

MaxPool2d::MaxPool2d(std::size_t size) : size_(size) {
  if (size == 0) throw ConfigError("maxpool: size must be >= 1");
}

Shape MaxPool2d::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] < size_ || input[2] < size_) {
    throw DimensionError("maxpool: expected [B,H,W,C] input with H,W >= " + std::to_string(size_) + ", got " +
                         shape_to_string(input));
  }
  return {input[0], input[1] / size_, input[2] / size_, input[3]};
}

Tensor MaxPool2d::forward(const Tensor& input, Mode, PhaseObserver* observer) {
  Stopwatch sw;
  const Shape out_shape = output_shape(input.shape());
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2), ch = input.dim(3);
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  Tensor out(out_shape);
  argmax_.assign(out.size(), 0);
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        for (std::size_t c = 0; c < ch; ++c, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t ky = 0; ky < size_; ++ky) {
            for (std::size_t kx = 0; kx < size_; ++kx) {
              const std::size_t idx = ((b * h + y * size_ + ky) * w + x * size_ + kx) * ch + c;
              if (input[idx] > best || (ky == 0 && kx == 0)) {
                best = input[idx];
                best_idx = idx;
              }
            }
          }
          out[o] = best;
          argmax_[o] = best_idx;
        }
      }
    }
  }
  input_shape_ = input.shape();
  cached_ = true;
  report(observer, *this, Phase::Forward, sw, static_cast<double>(input.size()));
  return out;
}

LayerGrads MaxPool2d::backward(const Tensor& output_grad, const BackwardContext& ctx) {
  require_cache(cached_);
  check_grad_shape(output_grad, output_shape(input_shape_), name_);
  LayerGrads g;
  if (ctx.keep_output_grad) g.output_grad = output_grad;
  if (ctx.need_data_grad) {
    Stopwatch sw;
    g.data_grad = Tensor(input_shape_);
    for (std::size_t i = 0; i < output_grad.size(); ++i) g.data_grad[argmax_[i]] += output_grad[i];
    report(ctx.observer, *this, Phase::BackwardData, sw, static_cast<double>(output_grad.size()));
  }
  return g;
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, float momentum, float eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  if (channels == 0) throw ConfigError("batchnorm: channels must be >= 1");
  gamma_ = {"gamma", Tensor({channels}, 1.0f), Tensor({channels})};
  beta_ = {"beta", Tensor({channels}), Tensor({channels})};
  running_mean_ = Tensor({channels});
  running_var_ = Tensor({channels}, 1.0f);
}

void BatchNorm::init(std::mt19937_64&) {
  gamma_.value.fill(1.0f);
  beta_.value.fill(0.0f);
  running_mean_.fill(0.0f);
  running_var_.fill(1.0f);
}

Tensor BatchNorm::forward(const Tensor& input, Mode mode, PhaseObserver* observer) {
  Stopwatch sw;
  if (input.channels() != channels_ || input.rank() < 2) {
    throw DimensionError((name_.empty() ? std::string("batchnorm") : name_) + ": expected " +
                         std::to_string(channels_) + " channels, got " + shape_to_string(input.shape()));
  }
  const std::size_t rows = input.rows(), ch = channels_;
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  if (mode == Mode::Train) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) mean[c] += input[r * ch + c];
    for (double& v : mean) v /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = input[r * ch + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (double& v : var) v /= static_cast<double>(rows);
    const double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
    for (std::size_t c = 0; c < ch; ++c) {
      running_mean_[c] = static_cast<float>(momentum_ * running_mean_[c] + (1.0 - momentum_) * mean[c]);
      running_var_[c] = static_cast<float>(momentum_ * running_var_[c] + (1.0 - momentum_) * var[c] * unbias);
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = running_mean_[c];
      var[c] = running_var_[c];
    }
  }
  inv_std_.resize(ch);
  for (std::size_t c = 0; c < ch; ++c) inv_std_[c] = static_cast<float>(1.0 / std::sqrt(var[c] + eps_));

  normalized_ = Tensor(input.shape());
  Tensor out(input.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      const float xhat = static_cast<float>((input[i] - mean[c]) * inv_std_[c]);
      normalized_[i] = xhat;
      out[i] = gamma_.value[c] * xhat + beta_.value[c];
    }
  }
  cached_ = true;
  report(observer, *this, Phase::Forward, sw, 6.0 * input.size());
  return out;
}

LayerGrads BatchNorm::backward(const Tensor& output_grad, const BackwardContext& ctx) {
  require_cache(cached_);
  check_grad_shape(output_grad, normalized_.shape(), name_);
  const std::size_t rows = output_grad.rows(), ch = channels_;
  LayerGrads g;
  if (ctx.keep_output_grad) g.output_grad = output_grad;
  std::vector<double> sum_dy(ch, 0.0), sum_dy_xhat(ch, 0.0);
  {
    Stopwatch sw;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t i = r * ch + c;
        sum_dy[c] += output_grad[i];
        sum_dy_xhat[c] += static_cast<double>(output_grad[i]) * normalized_[i];
      }
    }
    for (std::size_t c = 0; c < ch; ++c) {
      gamma_.grad[c] = static_cast<float>(sum_dy_xhat[c]);
      beta_.grad[c] = static_cast<float>(sum_dy[c]);
    }
    report(ctx.observer, *this, Phase::BackwardWeight, sw, 4.0 * output_grad.size());
  }
  g.weight_grad = gamma_.grad;
  g.bias_grad = beta_.grad;
  if (ctx.need_data_grad) {
    Stopwatch sw;
    g.data_grad = Tensor(output_grad.shape());
    const double inv_rows = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t i = r * ch + c;
        const double scale = static_cast<double>(gamma_.value[c]) * inv_std_[c];
        g.data_grad[i] = static_cast<float>(
            scale * (output_grad[i] - inv_rows * sum_dy[c] - normalized_[i] * inv_rows * sum_dy_xhat[c]));
      }
    }
    report(ctx.observer, *this, Phase::BackwardData, sw, 6.0 * output_grad.size());
  }
  return g;
}

// ---------------------------------------------------------------- Flatten

Shape Flatten::output_shape(const Shape& input) const {
  if (input.empty()) throw DimensionError("flatten: rank-0 input");
  return {input[0], input[0] == 0 ? 0 : shape_size(input) / input[0]};
}

Tensor Flatten::forward(const Tensor& input, Mode, PhaseObserver*) {
  input_shape_ = input.shape();
  cached_ = true;
  return input.reshaped(output_shape(input.shape()));
}

LayerGrads Flatten::backward(const Tensor& output_grad, const BackwardContext& ctx) {
  require_cache(cached_);
  check_grad_shape(output_grad, output_shape(input_shape_), name_);
  LayerGrads g;
  if (ctx.keep_output_grad) g.output_grad = output_grad;
  if (ctx.need_data_grad) g.data_grad = output_grad.reshaped(input_shape_);
  return g;
}

// ---------------------------------------------------------------- Residual

Residual::Residual(std::vector<std::unique_ptr<Layer>> body) : body_(std::move(body)) {
  if (body_.empty()) throw ConfigError("residual: empty body");
}

Shape Residual::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : body_) s = l->output_shape(s);
  if (s != input) {
    throw DimensionError("residual: body maps " + shape_to_string(input) + " to " + shape_to_string(s));
  }
  return s;
}

Tensor Residual::forward(const Tensor& input, Mode mode, PhaseObserver* observer) {
  Tensor x = input;
  for (auto& l : body_) x = l->forward(x, mode, observer);
  if (x.shape() != input.shape()) throw DimensionError("residual: body changed the tensor shape");
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += input[i];
  cached_ = true;
  return x;
}

LayerGrads Residual::backward(const Tensor& output_grad, const BackwardContext& ctx) {
  require_cache(cached_);
  BackwardContext inner = ctx;
  inner.need_data_grad = true;
  inner.keep_output_grad = false;
  Tensor grad = output_grad;
  for (auto it = body_.rbegin(); it != body_.rend(); ++it) grad = (*it)->backward(grad, inner).data_grad;
  LayerGrads g;
  if (ctx.keep_output_grad) g.output_grad = output_grad;
  if (ctx.need_data_grad) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += output_grad[i];
    g.data_grad = std::move(grad);
  }
  return g;
}

void Residual::init(std::mt19937_64& rng) {
  for (auto& l : body_) l->init(rng);
}

std::vector<Param*> Residual::params() {
  std::vector<Param*> out;
  for (auto& l : body_) {
    auto p = l->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Tensor*> Residual::state() {
  std::vector<Tensor*> out;
  for (auto& l : body_) {
    auto s = l->state();
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

void Residual::for_each_leaf(const std::function<void(Layer&)>& fn) {
  for (auto& l : body_) l->for_each_leaf(fn);
}

// ---------------------------------------------------------------- loss

SoftmaxCrossEntropy::SoftmaxCrossEntropy(float smoothing) : smoothing_(smoothing) {
  if (!(smoothing >= 0.0f && smoothing < 1.0f)) throw ConfigError("label smoothing must lie in [0, 1)");
}

double SoftmaxCrossEntropy::forward(const Tensor& logits, std::span<const std::uint8_t> labels) {
  if (logits.rank() != 2) throw DimensionError("loss: logits must be [B,k]");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  if (labels.size() != batch) throw DimensionError("loss: label count does not match batch");
  if (batch == 0) throw InputError("loss: empty batch");
  probs_ = Tensor(logits.shape());
  labels_.assign(labels.begin(), labels.end());
  correct_ = 0;
  const double off = smoothing_ / static_cast<double>(k);
  const double on = 1.0 - smoothing_ + off;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= k) throw DimensionError("loss: label " + std::to_string(labels[b]) + " out of range");
    const float* z = logits.data() + b * k;
    std::size_t arg = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (z[j] > z[arg]) arg = j;
    correct_ += arg == labels[b];
    const double zmax = z[arg];
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
    const double log_sum = std::log(sum);
    double loss = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double log_p = z[j] - zmax - log_sum;
      probs_[b * k + j] = static_cast<float>(std::exp(log_p));
      loss -= (j == labels[b] ? on : off) * log_p;
    }
    total += loss;
  }
  cached_ = true;
  return total / static_cast<double>(batch);
}

Tensor SoftmaxCrossEntropy::backward() const {
  if (!cached_) throw StateError("loss: backward called before forward");
  const std::size_t batch = probs_.dim(0), k = probs_.dim(1);
  const double off = smoothing_ / static_cast<double>(k);
  const double on = 1.0 - smoothing_ + off;
  Tensor grad(probs_.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < k; ++j) {
      const double q = j == labels_[b] ? on : off;
      grad[b * k + j] = static_cast<float>((probs_[b * k + j] - q) / static_cast<double>(batch));
    }
  }
  return grad;
}

double smoothed_label_entropy(float smoothing, std::size_t classes) {
  const double off = smoothing / static_cast<double>(classes);
  const double on = 1.0 - smoothing + off;
  double h = -on * std::log(on);
  if (off > 0.0) h -= static_cast<double>(classes - 1) * off * std::log(off);
  return h;
}

}  // namespace sdgp
