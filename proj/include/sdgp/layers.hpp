#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sdgp/prune.hpp"
#include "sdgp/tensor.hpp"

namespace sdgp {

enum class LayerKind { Conv, Linear, Relu, MaxPool, BatchNorm, Flatten, Residual };
enum class Mode { Train, Eval };
enum class Phase { Forward, BackwardData, BackwardWeight };

std::string to_string(LayerKind kind);

class Layer;

// Receives per-layer phase costs. Used by the profiler and the work clock.
class PhaseObserver {
 public:
  virtual ~PhaseObserver() = default;
  virtual void record(const Layer& layer, Phase phase, double seconds, double flops) = 0;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Gradients produced by one layer's backward pass. weight_grad/bias_grad are
// empty for layers without parameters; data_grad is empty when not requested.
struct LayerGrads {
  Tensor output_grad;  // dL/dO as received (dense); only kept on request
  Tensor data_grad;    // dL/dD
  Tensor weight_grad;  // dL/dW
  Tensor bias_grad;
};

struct BackwardContext {
  const PruneConfig* prune = nullptr;  // SDGP on conv output gradients when set
  std::uint64_t pass = 0;              // backward pass index; keys random pruning
  bool need_data_grad = true;
  bool keep_output_grad = false;
  PhaseObserver* observer = nullptr;
  std::size_t* prune_calls = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  // Output shape for an input shape including the batch extent.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& input, Mode mode, PhaseObserver* observer = nullptr) = 0;
  // Throws StateError when no forward pass has been cached.
  virtual LayerGrads backward(const Tensor& output_grad, const BackwardContext& ctx) = 0;

  virtual void init(std::mt19937_64& /*rng*/) {}
  virtual std::vector<Param*> params() { return {}; }
  // Tensors persisted in checkpoints: parameter values, then buffers.
  virtual std::vector<Tensor*> state() { return {}; }
  // Visits this layer, or for composites every contained leaf in order.
  virtual void for_each_leaf(const std::function<void(Layer&)>& fn) { fn(*this); }

  const std::string& name() const noexcept { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

 protected:
  void require_cache(bool cached) const;
  std::string name_;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
         std::size_t padding = 0);

  LayerKind kind() const override { return LayerKind::Conv; }
  Shape output_shape(const Shape& input) const override;
  // matmul(im2col(input), W as (K*K*C) x N) + bias, reshaped to [B,H',W',N].
  Tensor forward(const Tensor& input, Mode mode, PhaseObserver* observer = nullptr) override;
  // dL/dW from the dense output gradient; dL/dD from sdgp(dL/dO) when ctx.prune is set.
  LayerGrads backward(const Tensor& output_grad, const BackwardContext& ctx) override;

  // The two halves of backward, exposed for profiling and tests.
  void backward_weight(const Tensor& output_grad, Tensor& weight_grad, Tensor& bias_grad) const;
  Tensor backward_data(const Tensor& output_grad, const PruneConfig* prune, std::uint64_t pass,
                       std::size_t* prune_calls = nullptr) const;

  void init(std::mt19937_64& rng) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::vector<Tensor*> state() override { return {&weight_.value, &bias_.value}; }

  ConvShape conv_shape(const Shape& input) const;
  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return out_channels_; }
  std::size_t kernel() const { return kernel_; }
  // Position among all conv layers of a network; keys random pruning streams.
  std::size_t ordinal() const { return ordinal_; }
  void set_ordinal(std::size_t ordinal) { ordinal_ = ordinal; }

  Param& weight() { return weight_; }  // [K,K,C,N]
  Param& bias() { return bias_; }      // [N]

 private:
  std::size_t in_channels_, out_channels_, kernel_, stride_, padding_;
  std::size_t ordinal_ = 0;
  Param weight_, bias_;
  ConvShape cached_shape_;
  Tensor cols_;
  mutable Tensor dcols_;  // backward workspace
  bool cached_ = false;
};

class Linear final : public Layer {
 public:
  Linear(std::size_t in_features, std::size_t out_features);

  LayerKind kind() const override { return LayerKind::Linear; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, PhaseObserver* observer = nullptr) override;
  LayerGrads backward(const Tensor& output_grad, const BackwardContext& ctx) override;
  void init(std::mt19937_64& rng) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::vector<Tensor*> state() override { return {&weight_.value, &bias_.value}; }

  Param& weight() { return weight_; }  // [in, out]
  Param& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Param weight_, bias_;
  Tensor input_;
  bool cached_ = false;
};

class Relu final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::Relu; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode, PhaseObserver* observer = nullptr) override;
  LayerGrads backward(const Tensor& output_grad, const BackwardContext& ctx) override;

 private:
  std::vector<std::uint8_t> active_;
  Shape shape_;
  bool cached_ = false;
};

// Non-overlapping max pooling over [B,H,W,C]; trailing rows/cols that do not
// fill a window are dropped. Equal maxima route the gradient to the first one.
class MaxPool2d final : public Layer {
 public:
  explicit MaxPool2d(std::size_t size = 2);
  LayerKind kind() const override { return LayerKind::MaxPool; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, PhaseObserver* observer = nullptr) override;
  LayerGrads backward(const Tensor& output_grad, const BackwardContext& ctx) override;
  std::size_t size() const { return size_; }

 private:
  std::size_t size_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
  bool cached_ = false;
};

// Normalizes over every row of the (rows x channels) view. Training uses
// batch statistics; evaluation uses running averages.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(std::size_t channels, float momentum = 0.9f, float eps = 1e-5f);

  LayerKind kind() const override { return LayerKind::BatchNorm; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode, PhaseObserver* observer = nullptr) override;
  LayerGrads backward(const Tensor& output_grad, const BackwardContext& ctx) override;
  void init(std::mt19937_64& rng) override;
  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> state() override { return {&gamma_.value, &beta_.value, &running_mean_, &running_var_}; }

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }

 private:
  std::size_t channels_;
  float momentum_, eps_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor normalized_;
  std::vector<float> inv_std_;
  bool cached_ = false;
};

class Flatten final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::Flatten; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, PhaseObserver* observer = nullptr) override;
  LayerGrads backward(const Tensor& output_grad, const BackwardContext& ctx) override;

 private:
  Shape input_shape_;
  bool cached_ = false;
};

// y = x + body(x). The body must preserve the input shape.
class Residual final : public Layer {
 public:
  explicit Residual(std::vector<std::unique_ptr<Layer>> body);

  LayerKind kind() const override { return LayerKind::Residual; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, PhaseObserver* observer = nullptr) override;
  LayerGrads backward(const Tensor& output_grad, const BackwardContext& ctx) override;
  void init(std::mt19937_64& rng) override;
  std::vector<Param*> params() override;
  std::vector<Tensor*> state() override;
  void for_each_leaf(const std::function<void(Layer&)>& fn) override;

  std::vector<std::unique_ptr<Layer>>& body() { return body_; }

 private:
  std::vector<std::unique_ptr<Layer>> body_;
  bool cached_ = false;
};

// Mean softmax cross-entropy against label-smoothed targets
// q = (1 - eps) * onehot + eps / k.
class SoftmaxCrossEntropy {
 public:
  explicit SoftmaxCrossEntropy(float smoothing = 0.0f);

  double forward(const Tensor& logits, std::span<const std::uint8_t> labels);
  // dL/dlogits = (softmax - q) / B.
  Tensor backward() const;
  // Correct top-1 predictions in the last forward batch.
  std::size_t correct() const { return correct_; }
  float smoothing() const { return smoothing_; }

 private:
  float smoothing_;
  Tensor probs_;
  std::vector<std::uint8_t> labels_;
  std::size_t correct_ = 0;
  bool cached_ = false;
};

// Entropy of the smoothed target distribution: a lower bound on the loss.
double smoothed_label_entropy(float smoothing, std::size_t classes);

}  // namespace sdgp
