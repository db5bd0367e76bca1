#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdgp/layers.hpp"

namespace sdgp {

// Declarative layer description, as found in experiment configs.
struct LayerSpec {
  std::string type;          // conv | linear | relu | maxpool | batchnorm | flatten | residual
  std::size_t out = 0;       // conv output channels / linear output features
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t size = 2;      // maxpool window
  std::vector<LayerSpec> body;  // residual body
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// 4 conv (32/64/64/64) + 1 linear.
std::vector<LayerSpec> tinynet_spec(std::size_t classes);
// ResNet-9-like stack with two skip-add blocks, still 32/64 channels wide.
std::vector<LayerSpec> resnet9_tiny_spec(std::size_t classes);

struct BackwardOptions {
  // The first layer's input gradient is never consumed in training; skipping
  // it also skips that layer's pruning.
  bool compute_input_grad = true;
  bool keep_layer_grads = true;
  PhaseObserver* observer = nullptr;
};

struct BackwardResult {
  std::vector<LayerGrads> layers;  // one per top-level layer, in forward order
  Tensor input_grad;
  std::size_t prune_invocations = 0;
};

class Network {
 public:
  // sample_shape is the per-sample [H,W,C] input shape.
  Network(Shape sample_shape, std::vector<std::unique_ptr<Layer>> layers);

  Tensor forward(const Tensor& batch, Mode mode, PhaseObserver* observer = nullptr);
  // Chains gradients from the last layer to the first. Every conv layer whose
  // data gradient is computed prunes a copy of its output gradient first.
  BackwardResult backward(const Tensor& loss_grad, const std::optional<PruneConfig>& prune,
                          const BackwardOptions& options = {});

  void init(std::uint64_t seed);
  std::vector<Param*> params();
  std::vector<Layer*> leaves();
  std::vector<Conv2d*> conv_layers();
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Shape& sample_shape() const { return sample_shape_; }
  Shape output_shape(std::size_t batch) const;
  std::uint64_t backward_passes() const { return passes_; }

  // Throws ConfigError naming the first conv layer whose width is not divisible by m.
  void check_prunable(const PruneConfig& cfg) const;

  // Binary checkpoint: "SDGP", u32 version, u32 leaf-layer count, then per
  // leaf a u32 tensor count and per tensor u32 rank, u32 extents, f32 values.
  // Everything little-endian.
  void save(const std::filesystem::path& path);
  void load(const std::filesystem::path& path);

 private:
  Shape sample_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::uint64_t passes_ = 0;
  bool forwarded_ = false;
};

// Builds (and names) layers for a per-sample input shape [H,W,C].
Network build_network(const std::vector<LayerSpec>& spec, const Shape& sample_shape);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace sdgp
