#include "sdgp/network.hpp"

#include <bit>
#include <fstream>
#include <map>

#include "sdgp/errors.hpp"
#include "sdgp/rng.hpp"

namespace sdgp {

namespace {

LayerSpec conv(std::size_t out) { return {.type = "conv", .out = out}; }
LayerSpec simple(const char* type) { return {.type = type}; }

void conv_bn_relu(std::vector<LayerSpec>& v, std::size_t out) {
  v.push_back(conv(out));
  v.push_back(simple("batchnorm"));
  v.push_back(simple("relu"));
}

}  // namespace

std::vector<LayerSpec> tinynet_spec(std::size_t classes) {
  std::vector<LayerSpec> v;
  conv_bn_relu(v, 32);
  v.push_back(simple("maxpool"));
  conv_bn_relu(v, 64);
  v.push_back(simple("maxpool"));
  conv_bn_relu(v, 64);
  conv_bn_relu(v, 64);
  v.push_back(simple("maxpool"));
  v.push_back(simple("flatten"));
  v.push_back({.type = "linear", .out = classes});
  return v;
}

std::vector<LayerSpec> resnet9_tiny_spec(std::size_t classes) {
  std::vector<LayerSpec> v;
  conv_bn_relu(v, 32);
  conv_bn_relu(v, 64);
  v.push_back(simple("maxpool"));
  LayerSpec res1{.type = "residual"};
  conv_bn_relu(res1.body, 64);
  conv_bn_relu(res1.body, 64);
  v.push_back(res1);
  conv_bn_relu(v, 64);
  v.push_back(simple("maxpool"));
  LayerSpec res2{.type = "residual"};
  conv_bn_relu(res2.body, 64);
  conv_bn_relu(res2.body, 64);
  v.push_back(res2);
  v.push_back(simple("maxpool"));
  v.push_back(simple("flatten"));
  v.push_back({.type = "linear", .out = classes});
  return v;
}

namespace {

struct Builder {
  std::map<std::string, std::size_t> counters;
  std::size_t conv_ordinal = 0;

  std::string next_name(const std::string& type) { return type + std::to_string(++counters[type]); }

  std::vector<std::unique_ptr<Layer>> build(const std::vector<LayerSpec>& specs, Shape& shape) {
    std::vector<std::unique_ptr<Layer>> out;
    for (const LayerSpec& s : specs) {
      std::unique_ptr<Layer> layer;
      if (s.type == "conv") {
        if (shape.size() != 4) throw ConfigError("conv layer needs an image input, got " + shape_to_string(shape));
        auto c = std::make_unique<Conv2d>(shape[3], s.out, s.kernel, s.stride, s.padding);
        c->set_ordinal(conv_ordinal++);
        layer = std::move(c);
      } else if (s.type == "linear") {
        if (shape.size() != 2) throw ConfigError("linear layer needs a flattened input; add a flatten layer");
        layer = std::make_unique<Linear>(shape[1], s.out);
      } else if (s.type == "relu") {
        layer = std::make_unique<Relu>();
      } else if (s.type == "maxpool") {
        layer = std::make_unique<MaxPool2d>(s.size);
      } else if (s.type == "batchnorm") {
        layer = std::make_unique<BatchNorm>(shape.back());
      } else if (s.type == "flatten") {
        layer = std::make_unique<Flatten>();
      } else if (s.type == "residual") {
        Shape inner = shape;
        layer = std::make_unique<Residual>(build(s.body, inner));
      } else {
        throw ConfigError("unknown layer type '" + s.type + "'");
      }
      layer->set_name(next_name(s.type));
      try {
        shape = layer->output_shape(shape);
      } catch (const DimensionError& e) {
        throw ConfigError(layer->name() + ": " + e.what());
      }
      out.push_back(std::move(layer));
    }
    return out;
  }
};

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open checkpoint " + path.string(), 0);
  }
  std::uint32_t u32() {
    unsigned char b[4];
    if (!in_.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated checkpoint", offset_);
    offset_ += 4;
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }
  std::size_t offset() const { return offset_; }

 private:
  std::ifstream in_;
  std::size_t offset_ = 0;
};

constexpr std::uint32_t kMagic = 0x50474453;  // "SDGP" little-endian

}  // namespace

Network build_network(const std::vector<LayerSpec>& spec, const Shape& sample_shape) {
  if (sample_shape.size() != 3) throw ConfigError("sample shape must be [H,W,C]");
  Builder b;
  Shape shape{1, sample_shape[0], sample_shape[1], sample_shape[2]};
  return Network(sample_shape, b.build(spec, shape));
}

Network::Network(Shape sample_shape, std::vector<std::unique_ptr<Layer>> layers)
    : sample_shape_(std::move(sample_shape)), layers_(std::move(layers)) {}

Shape Network::output_shape(std::size_t batch) const {
  Shape s{batch};
  s.insert(s.end(), sample_shape_.begin(), sample_shape_.end());
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor Network::forward(const Tensor& batch, Mode mode, PhaseObserver* observer) {
  Tensor x = batch;
  for (auto& l : layers_) x = l->forward(x, mode, observer);
  forwarded_ = true;
  return x;
}

BackwardResult Network::backward(const Tensor& loss_grad, const std::optional<PruneConfig>& prune,
                                 const BackwardOptions& options) {
  if (!forwarded_) throw StateError("network: backward called before forward");
  if (prune) prune->validate();
  BackwardResult result;
  BackwardContext ctx;
  ctx.prune = prune ? &*prune : nullptr;
  ctx.pass = passes_++;
  ctx.keep_output_grad = options.keep_layer_grads;
  ctx.observer = options.observer;
  ctx.prune_calls = &result.prune_invocations;
  if (options.keep_layer_grads) result.layers.resize(layers_.size());

  Tensor grad = loss_grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    ctx.need_data_grad = i > 0 || options.compute_input_grad;
    LayerGrads g = layers_[i]->backward(grad, ctx);
    grad = g.data_grad;
    if (options.keep_layer_grads) result.layers[i] = std::move(g);
  }
  result.input_grad = std::move(grad);
  return result;
}

void Network::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& l : layers_) l->init(rng);
  // A small classifier head keeps the initial loss near ln(classes).
  if (!layers_.empty() && layers_.back()->kind() == LayerKind::Linear) {
    Tensor& w = static_cast<Linear&>(*layers_.back()).weight().value;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= 0.1f;
  }
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    auto p = l->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Layer*> Network::leaves() {
  std::vector<Layer*> out;
  for (auto& l : layers_) l->for_each_leaf([&](Layer& leaf) { out.push_back(&leaf); });
  return out;
}

std::vector<Conv2d*> Network::conv_layers() {
  std::vector<Conv2d*> out;
  for (Layer* l : leaves())
    if (l->kind() == LayerKind::Conv) out.push_back(static_cast<Conv2d*>(l));
  return out;
}

void Network::check_prunable(const PruneConfig& cfg) const {
  cfg.validate();
  for (const auto& l : layers_) {
    l->for_each_leaf([&](Layer& leaf) {
      if (leaf.kind() == LayerKind::Conv) {
        sdgp::check_prunable(static_cast<Conv2d&>(leaf).out_channels(), cfg, "layer '" + leaf.name() + "'");
      }
    });
  }
}

void Network::save(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  const auto leaf_layers = leaves();
  put_u32(os, kMagic);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(leaf_layers.size()));
  for (Layer* l : leaf_layers) {
    const auto tensors = l->state();
    put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor* t : tensors) {
      put_u32(os, static_cast<std::uint32_t>(t->rank()));
      for (std::size_t d : t->shape()) put_u32(os, static_cast<std::uint32_t>(d));
      for (float v : t->values()) put_u32(os, std::bit_cast<std::uint32_t>(v));
    }
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

void Network::load(const std::filesystem::path& path) {
  Reader r(path);
  if (r.u32() != kMagic) throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const auto leaf_layers = leaves();
  if (r.u32() != leaf_layers.size()) throw FormatError("checkpoint layer count does not match the model", 8);
  // Parse everything before touching the model so a bad file leaves it intact.
  std::vector<std::vector<Tensor>> loaded;
  for (Layer* l : leaf_layers) {
    const auto tensors = l->state();
    const std::size_t at = r.offset();
    if (r.u32() != tensors.size()) throw FormatError("tensor count mismatch for layer " + l->name(), at);
    auto& out = loaded.emplace_back();
    for (const Tensor* t : tensors) {
      const std::size_t shape_at = r.offset();
      Shape shape(r.u32());
      for (auto& d : shape) d = r.u32();
      if (shape != t->shape()) {
        throw FormatError("shape " + shape_to_string(shape) + " does not match " + shape_to_string(t->shape()) +
                              " in layer " + l->name(),
                          shape_at);
      }
      std::vector<float> values(t->size());
      for (float& v : values) v = std::bit_cast<float>(r.u32());
      out.emplace_back(shape, std::move(values));
    }
  }
  for (std::size_t i = 0; i < leaf_layers.size(); ++i) {
    auto tensors = leaf_layers[i]->state();
    for (std::size_t j = 0; j < tensors.size(); ++j) *tensors[j] = std::move(loaded[i][j]);
  }
}

}  // namespace sdgp
