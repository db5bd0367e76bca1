#include "sdgp/config.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "sdgp/errors.hpp"
#include "sdgp/rng.hpp"

namespace sdgp {

using nlohmann::json;

namespace {

// Forward iterator over the document text that counts consumed newlines, so
// SAX callbacks can tell which line the parser is on.
struct LineCursor {
  using iterator_category = std::forward_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  const char* p = nullptr;
  std::size_t* newlines = nullptr;

  reference operator*() const { return *p; }
  LineCursor& operator++() {
    if (*p == '\n') ++*newlines;
    ++p;
    return *this;
  }
  LineCursor operator++(int) {
    LineCursor t = *this;
    ++*this;
    return t;
  }
  bool operator==(const LineCursor& o) const { return p == o.p; }
};

class LineRecorder {
 public:
  using number_integer_t = json::number_integer_t;
  using number_unsigned_t = json::number_unsigned_t;
  using number_float_t = json::number_float_t;
  using string_t = json::string_t;
  using binary_t = json::binary_t;

  LineRecorder(const std::size_t* newlines, std::map<std::string, std::size_t>& lines)
      : newlines_(newlines), lines_(lines) {}

  bool null() { return scalar(); }
  bool boolean(bool) { return scalar(); }
  bool number_integer(number_integer_t) { return scalar(); }
  bool number_unsigned(number_unsigned_t) { return scalar(); }
  bool number_float(number_float_t, const string_t&) { return scalar(); }
  bool string(string_t&) { return scalar(); }
  bool binary(binary_t&) { return scalar(); }
  bool start_object(std::size_t) { return open(false); }
  bool start_array(std::size_t) { return open(true); }
  bool end_object() { return close(); }
  bool end_array() { return close(); }
  bool key(string_t& k) {
    stack_.back().key = k;
    lines_[stack_.back().path + "/" + k] = line();
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) { return false; }

 private:
  struct Frame {
    bool array = false;
    std::size_t index = 0;
    std::string key;
    std::string path;
  };

  std::size_t line() const { return *newlines_ + 1; }
  std::string child_path() const {
    if (stack_.empty()) return "";
    const Frame& f = stack_.back();
    return f.path + "/" + (f.array ? std::to_string(f.index) : f.key);
  }
  bool scalar() {
    if (!stack_.empty() && stack_.back().array) {
      lines_.try_emplace(child_path(), line());
      ++stack_.back().index;
    }
    return true;
  }
  bool open(bool array) {
    const std::string path = child_path();
    if (stack_.empty() || stack_.back().array) lines_.try_emplace(path, line());
    stack_.push_back({array, 0, "", path});
    return true;
  }
  bool close() {
    stack_.pop_back();
    if (!stack_.empty() && stack_.back().array) ++stack_.back().index;
    return true;
  }

  const std::size_t* newlines_;
  std::map<std::string, std::size_t>& lines_;
  std::vector<Frame> stack_;
};

std::map<std::string, std::size_t> record_lines(const std::string& text) {
  std::map<std::string, std::size_t> lines;
  std::size_t newlines = 0;
  LineRecorder sax(&newlines, lines);
  LineCursor first{text.data(), &newlines}, last{text.data() + text.size(), &newlines};
  json::sax_parse(first, last, &sax);
  return lines;
}

// Typed, strict access to one JSON object; unknown keys are reported by finish().
class Section {
 public:
  Section(const json& j, std::string path, const ExperimentConfig& cfg) : j_(j), path_(std::move(path)), cfg_(cfg) {
    if (!j.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string child(const std::string& key) const { return path_ + "/" + key; }
  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::size_t count(const std::string& key, std::size_t def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) fail(child(key), "'" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
  }
  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) fail(child(key), "'" + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
  }
  double real(const std::string& key, double def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number()) fail(child(key), "'" + key + "' must be a number");
    return v.get<double>();
  }
  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(child(key), "'" + key + "' must be true or false");
    return v.get<bool>();
  }
  std::string text(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_string()) fail(child(key), "'" + key + "' must be a string");
    return v.get<std::string>();
  }
  const json& array(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) fail(child(key), "'" + key + "' must be an array");
    return v;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) fail(child(k), "unknown key '" + k + "'");
    }
  }

  [[noreturn]] void fail(const std::string& pointer, const std::string& msg) const {
    throw ConfigError(cfg_.where(pointer) + msg);
  }

 private:
  const json& j_;
  std::string path_;
  const ExperimentConfig& cfg_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.empty() || path.is_absolute()) return path;
  return std::filesystem::absolute(base / path).lexically_normal();
}

LayerSpec parse_layer(const json& j, const std::string& path, const ExperimentConfig& cfg) {
  Section s(j, path, cfg);
  LayerSpec l;
  l.type = s.text("type", "");
  if (l.type.empty()) s.fail(path, "layer needs a 'type'");
  l.out = s.count("out", 0);
  l.kernel = s.count("kernel", 3);
  l.stride = s.count("stride", 1);
  l.padding = s.count("padding", l.kernel / 2);
  l.size = s.count("size", 2);
  if ((l.type == "conv" || l.type == "linear") && l.out == 0) s.fail(path, l.type + " layer needs 'out' >= 1");
  if (l.type == "residual") {
    const json& body = s.array("layers");
    for (std::size_t i = 0; i < body.size(); ++i)
      l.body.push_back(parse_layer(body[i], s.child("layers") + "/" + std::to_string(i), cfg));
  }
  s.finish();
  return l;
}

nlohmann::ordered_json layer_to_json(const LayerSpec& l) {
  nlohmann::ordered_json j;
  j["type"] = l.type;
  if (l.type == "conv") {
    j["out"] = l.out;
    j["kernel"] = l.kernel;
    j["stride"] = l.stride;
    j["padding"] = l.padding;
  } else if (l.type == "linear") {
    j["out"] = l.out;
  } else if (l.type == "maxpool") {
    j["size"] = l.size;
  } else if (l.type == "residual") {
    j["layers"] = nlohmann::ordered_json::array();
    for (const auto& b : l.body) j["layers"].push_back(layer_to_json(b));
  }
  return j;
}

std::array<std::uint32_t, 4> read_idx_header(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  unsigned char b[16] = {};
  in.read(reinterpret_cast<char*>(b), 16);
  if (in.gcount() != 16) throw FormatError(p.string() + ": truncated IDX header", static_cast<std::size_t>(in.gcount()));
  std::array<std::uint32_t, 4> out{};
  for (int i = 0; i < 4; ++i)
    out[i] = static_cast<std::uint32_t>(b[4 * i]) << 24 | static_cast<std::uint32_t>(b[4 * i + 1]) << 16 |
             static_cast<std::uint32_t>(b[4 * i + 2]) << 8 | b[4 * i + 3];
  if (out[0] != 0x00000803) throw FormatError(p.string() + ": not an IDX image file", 0);
  return out;
}

}  // namespace

std::size_t ExperimentConfig::line_of(const std::string& pointer) const {
  std::string p = pointer;
  while (!p.empty()) {
    auto it = lines.find(p);
    if (it != lines.end()) return it->second;
    p = p.substr(0, p.rfind('/'));
  }
  auto it = lines.find("");
  return it == lines.end() ? 1 : it->second;
}

std::string ExperimentConfig::where(const std::string& pointer) const {
  return source + ":" + std::to_string(line_of(pointer)) + ": ";
}

std::vector<LayerSpec> ExperimentConfig::layer_specs(std::size_t classes) const {
  if (model.preset == "tinynet") return tinynet_spec(classes);
  if (model.preset == "resnet9_tiny") return resnet9_tiny_spec(classes);
  return model.layers;
}

std::optional<PruneConfig> ExperimentConfig::prune_config() const {
  if (!prune.enabled) return std::nullopt;
  PruneConfig c = prune.config;
  if (!prune.seed_given) c.seed = derive_seed(seed, "prune");
  return c;
}

TrainOptions ExperimentConfig::train_options() const {
  TrainOptions o;
  o.epochs = optimizer.epochs;
  o.batch_size = optimizer.batch_size;
  o.peak_lr = optimizer.lr;
  o.momentum = optimizer.momentum;
  o.weight_decay = optimizer.weight_decay;
  o.label_smoothing = optimizer.label_smoothing;
  o.warmup_fraction = optimizer.warmup_fraction;
  o.shuffle_seed = derive_seed(seed, "shuffle");
  o.prune = prune_config();
  o.clock = clock;
  o.work_gflops = work_gflops;
  return o;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source,
                              const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  cfg.source = source;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + upto, '\n'));
    throw ConfigError(source + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  cfg.lines = record_lines(text);

  Section root(doc, "", cfg);
  cfg.seed = root.u64("seed", 0);
  try {
    cfg.clock = parse_clock(root.text("clock", "work"));
  } catch (const ConfigError& e) {
    root.fail("/clock", e.what());
  }
  cfg.work_gflops = root.real("work_gflops", 10.0);
  if (!(cfg.work_gflops > 0.0)) root.fail("/work_gflops", "'work_gflops' must be > 0");
  if (root.has("output_dir")) cfg.output_dir = root.text("output_dir", "");

  if (root.has("dataset")) {
    Section s(root.raw("dataset"), "/dataset", cfg);
    DatasetSpec& d = cfg.dataset;
    d.kind = s.text("kind", "synthetic");
    if (d.kind == "synthetic") {
      d.train_samples = s.count("train_samples", d.train_samples);
      d.val_samples = s.count("val_samples", d.val_samples);
      d.classes = s.count("classes", d.classes);
      d.height = s.count("height", d.height);
      d.width = s.count("width", d.width);
      d.channels = s.count("channels", d.channels);
      d.noise = s.real("noise", d.noise);
      if (s.has("seed")) d.seed = s.u64("seed", 0);
      if (d.classes == 0 || d.classes > 256) s.fail(s.child("classes"), "'classes' must be in [1, 256]");
      if (d.height == 0 || d.width == 0 || d.channels == 0) s.fail("/dataset", "image extents must be >= 1");
      if (d.noise < 0.0) s.fail(s.child("noise"), "'noise' must be >= 0");
    } else if (d.kind == "mnist") {
      d.train_images = resolve(base_dir, s.text("train_images", ""));
      d.train_labels = resolve(base_dir, s.text("train_labels", ""));
      d.test_images = resolve(base_dir, s.text("test_images", ""));
      d.test_labels = resolve(base_dir, s.text("test_labels", ""));
    } else if (d.kind == "cifar10") {
      if (s.has("train_files")) {
        const json& files = s.array("train_files");
        for (std::size_t i = 0; i < files.size(); ++i) {
          if (!files[i].is_string()) s.fail(s.child("train_files") + "/" + std::to_string(i), "expected a path string");
          d.train_files.push_back(resolve(base_dir, files[i].get<std::string>()));
        }
      }
      d.test_file = resolve(base_dir, s.text("test_file", ""));
    } else {
      s.fail(s.child("kind"), "unknown dataset kind '" + d.kind + "' (expected synthetic, mnist, cifar10)");
    }
    d.limit_train = s.count("limit_train", 0);
    d.limit_val = s.count("limit_val", 0);
    s.finish();
  }

  if (root.has("model")) {
    Section s(root.raw("model"), "/model", cfg);
    if (s.has("layers")) {
      cfg.model.preset = "";
      const json& layers = s.array("layers");
      for (std::size_t i = 0; i < layers.size(); ++i)
        cfg.model.layers.push_back(parse_layer(layers[i], "/model/layers/" + std::to_string(i), cfg));
      if (s.has("preset")) s.fail(s.child("preset"), "give either 'preset' or 'layers', not both");
    } else {
      cfg.model.preset = s.text("preset", "tinynet");
      if (cfg.model.preset != "tinynet" && cfg.model.preset != "resnet9_tiny") {
        s.fail(s.child("preset"), "unknown model preset '" + cfg.model.preset + "' (expected tinynet, resnet9_tiny)");
      }
    }
    s.finish();
  }

  if (root.has("optimizer")) {
    Section s(root.raw("optimizer"), "/optimizer", cfg);
    OptimizerSpec& o = cfg.optimizer;
    o.lr = static_cast<float>(s.real("lr", o.lr));
    o.momentum = static_cast<float>(s.real("momentum", o.momentum));
    o.weight_decay = static_cast<float>(s.real("weight_decay", o.weight_decay));
    o.epochs = s.count("epochs", o.epochs);
    o.batch_size = s.count("batch_size", o.batch_size);
    o.label_smoothing = static_cast<float>(s.real("label_smoothing", o.label_smoothing));
    o.warmup_fraction = s.real("warmup_fraction", o.warmup_fraction);
    if (!(o.lr > 0.0f)) s.fail(s.child("lr"), "'lr' must be > 0");
    if (o.momentum < 0.0f) s.fail(s.child("momentum"), "'momentum' must be >= 0");
    if (o.weight_decay < 0.0f) s.fail(s.child("weight_decay"), "'weight_decay' must be >= 0");
    if (o.epochs == 0) s.fail(s.child("epochs"), "'epochs' must be >= 1");
    if (o.batch_size == 0) s.fail(s.child("batch_size"), "'batch_size' must be >= 1");
    if (!(o.label_smoothing >= 0.0f && o.label_smoothing < 1.0f)) {
      s.fail(s.child("label_smoothing"), "'label_smoothing' must lie in [0, 1)");
    }
    if (!(o.warmup_fraction > 0.0 && o.warmup_fraction < 1.0)) {
      s.fail(s.child("warmup_fraction"), "'warmup_fraction' must lie in (0, 1)");
    }
    s.finish();
  }

  if (root.has("prune")) {
    Section s(root.raw("prune"), "/prune", cfg);
    PruneSpec& p = cfg.prune;
    p.enabled = s.flag("enabled", true);
    try {
      p.config.function = parse_prune_function(s.text("function", "magnitude"));
    } catch (const ConfigError& e) {
      s.fail(s.child("function"), e.what());
    }
    try {
      p.config.rescale = parse_rescale_scope(s.text("rescale", "channel"));
    } catch (const ConfigError& e) {
      s.fail(s.child("rescale"), e.what());
    }
    p.config.n = s.count("n", p.config.n);
    p.config.m = s.count("m", p.config.m);
    p.seed_given = s.has("seed");
    p.config.seed = s.u64("seed", 0);
    try {
      p.config.validate();
    } catch (const ConfigError& e) {
      s.fail(s.child(p.config.n > p.config.m || p.config.n == 0 ? "n" : "m"), e.what());
    }
    s.finish();
  }

  if (root.has("profile")) {
    Section s(root.raw("profile"), "/profile", cfg);
    cfg.profile.repeats = s.count("repeats", cfg.profile.repeats);
    cfg.profile.batch_size = s.count("batch_size", 0);
    if (cfg.profile.repeats < 3) s.fail(s.child("repeats"), "'repeats' must be >= 3");
    s.finish();
  }

  if (root.has("sweep")) {
    Section s(root.raw("sweep"), "/sweep", cfg);
    if (s.has("cells")) {
      const json& cells = s.array("cells");
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const json& c = cells[i];
        if (!c.is_array() || c.size() != 2 || !c[0].is_number_unsigned() || !c[1].is_number_unsigned()) {
          s.fail(s.child("cells") + "/" + std::to_string(i), "a sweep cell is [n, m]");
        }
        cfg.sweep.cells.emplace_back(c[0].get<std::size_t>(), c[1].get<std::size_t>());
      }
    }
    if (s.has("seeds")) {
      const json& seeds = s.array("seeds");
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!seeds[i].is_number_unsigned()) s.fail(s.child("seeds") + "/" + std::to_string(i), "seeds are non-negative integers");
        cfg.sweep.seeds.push_back(seeds[i].get<std::uint64_t>());
      }
    }
    s.finish();
  }

  if (root.has("estimate")) {
    Section s(root.raw("estimate"), "/estimate", cfg);
    if (s.has("fraction")) cfg.estimate.fraction = s.real("fraction", 0.0);
    cfg.estimate.target_accuracy = s.real("target_accuracy", cfg.estimate.target_accuracy);
    cfg.estimate.metrics = resolve(base_dir, s.text("metrics", ""));
    cfg.estimate.timing = resolve(base_dir, s.text("timing", ""));
    if (cfg.estimate.fraction && !(*cfg.estimate.fraction >= 0.0 && *cfg.estimate.fraction <= 1.0)) {
      s.fail(s.child("fraction"), "'fraction' must lie in [0, 1]");
    }
    s.finish();
  }

  root.finish();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ":0: cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), path.parent_path());
}

std::pair<Shape, std::size_t> dataset_geometry(const DatasetSpec& d) {
  if (d.kind == "synthetic") return {{d.height, d.width, d.channels}, d.classes};
  if (d.kind == "mnist") {
    const auto h = read_idx_header(d.train_images);
    return {{h[2], h[3], 1}, 10};
  }
  return {{32, 32, 3}, 10};
}

void validate_config(const ExperimentConfig& cfg) {
  const DatasetSpec& d = cfg.dataset;
  auto require_file = [&](const std::filesystem::path& p, const std::string& pointer) {
    if (p.empty()) throw ConfigError(cfg.where(pointer) + "missing dataset path '" + pointer.substr(pointer.rfind('/') + 1) + "'");
    if (!std::filesystem::is_regular_file(p)) throw ConfigError(cfg.where(pointer) + "dataset file not found: " + p.string());
  };
  if (d.kind == "mnist") {
    require_file(d.train_images, "/dataset/train_images");
    require_file(d.train_labels, "/dataset/train_labels");
    require_file(d.test_images, "/dataset/test_images");
    require_file(d.test_labels, "/dataset/test_labels");
  } else if (d.kind == "cifar10") {
    if (d.train_files.empty()) throw ConfigError(cfg.where("/dataset") + "cifar10 needs at least one train file");
    for (std::size_t i = 0; i < d.train_files.size(); ++i)
      require_file(d.train_files[i], "/dataset/train_files/" + std::to_string(i));
    require_file(d.test_file, "/dataset/test_file");
  } else if (d.train_samples == 0 || d.val_samples == 0) {
    throw ConfigError(cfg.where("/dataset") + "synthetic dataset needs train_samples and val_samples >= 1");
  }

  std::pair<Shape, std::size_t> geometry;
  try {
    geometry = dataset_geometry(d);
  } catch (const FormatError& e) {
    throw ConfigError(cfg.where("/dataset") + e.what());
  }
  const auto& [sample, classes] = geometry;
  std::optional<Network> net;
  try {
    net.emplace(build_network(cfg.layer_specs(classes), sample));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(cfg.where("/model") + "model does not build for input " + shape_to_string(sample) + ": " + e.what());
  }
  const Shape out = net->output_shape(1);
  if (out.size() != 2 || out[1] < classes) {
    throw ConfigError(cfg.where("/model") + "model output " + shape_to_string(out) + " cannot score " +
                      std::to_string(classes) + " classes");
  }
  if (auto p = cfg.prune_config()) {
    try {
      net->check_prunable(*p);
    } catch (const ConfigError& e) {
      throw ConfigError(cfg.where("/prune/m") + e.what());
    }
  }
}

nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["clock"] = to_string(cfg.clock);
  j["work_gflops"] = cfg.work_gflops;

  const DatasetSpec& d = cfg.dataset;
  nlohmann::ordered_json ds;
  ds["kind"] = d.kind;
  if (d.kind == "synthetic") {
    ds["train_samples"] = d.train_samples;
    ds["val_samples"] = d.val_samples;
    ds["classes"] = d.classes;
    ds["height"] = d.height;
    ds["width"] = d.width;
    ds["channels"] = d.channels;
    ds["noise"] = d.noise;
    ds["seed"] = d.seed.value_or(derive_seed(cfg.seed, "data"));
  } else if (d.kind == "mnist") {
    ds["train_images"] = d.train_images.string();
    ds["train_labels"] = d.train_labels.string();
    ds["test_images"] = d.test_images.string();
    ds["test_labels"] = d.test_labels.string();
  } else {
    ds["train_files"] = json::array();
    for (const auto& f : d.train_files) ds["train_files"].push_back(f.string());
    ds["test_file"] = d.test_file.string();
  }
  ds["limit_train"] = d.limit_train;
  ds["limit_val"] = d.limit_val;
  j["dataset"] = ds;

  nlohmann::ordered_json model;
  if (!cfg.model.preset.empty()) {
    model["preset"] = cfg.model.preset;
  } else {
    model["layers"] = nlohmann::ordered_json::array();
    for (const auto& l : cfg.model.layers) model["layers"].push_back(layer_to_json(l));
  }
  j["model"] = model;

  const OptimizerSpec& o = cfg.optimizer;
  nlohmann::ordered_json opt;
  opt["lr"] = o.lr;
  opt["momentum"] = o.momentum;
  opt["weight_decay"] = o.weight_decay;
  opt["epochs"] = o.epochs;
  opt["batch_size"] = o.batch_size;
  opt["label_smoothing"] = o.label_smoothing;
  opt["warmup_fraction"] = o.warmup_fraction;
  j["optimizer"] = opt;

  nlohmann::ordered_json pr;
  pr["enabled"] = cfg.prune.enabled;
  pr["function"] = to_string(cfg.prune.config.function);
  pr["n"] = cfg.prune.config.n;
  pr["m"] = cfg.prune.config.m;
  pr["seed"] = cfg.prune.seed_given ? cfg.prune.config.seed : derive_seed(cfg.seed, "prune");
  pr["rescale"] = to_string(cfg.prune.config.rescale);
  j["prune"] = pr;

  j["profile"] = {{"repeats", cfg.profile.repeats}, {"batch_size", cfg.profile.batch_size}};

  nlohmann::ordered_json sw;
  sw["cells"] = json::array();
  for (const auto& [n, m] : cfg.sweep.cells) sw["cells"].push_back({n, m});
  sw["seeds"] = cfg.sweep.seeds;
  j["sweep"] = sw;

  nlohmann::ordered_json est;
  if (cfg.estimate.fraction) est["fraction"] = *cfg.estimate.fraction;
  est["target_accuracy"] = cfg.estimate.target_accuracy;
  est["metrics"] = cfg.estimate.metrics.string();
  est["timing"] = cfg.estimate.timing.string();
  j["estimate"] = est;
  return j;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_grid(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto colon = cell.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument("missing ':'");
      std::size_t used = 0;
      const std::string ns = cell.substr(0, colon), ms = cell.substr(colon + 1);
      const unsigned long n = std::stoul(ns, &used);
      if (used != ns.size()) throw std::invalid_argument("trailing characters");
      const unsigned long m = std::stoul(ms, &used);
      if (used != ms.size()) throw std::invalid_argument("trailing characters");
      out.emplace_back(n, m);
    } catch (const std::exception&) {
      throw ConfigError("bad grid cell '" + cell + "' (expected n:m)");
    }
  }
  if (out.empty()) throw ConfigError("empty sweep grid");
  return out;
}

}  // namespace sdgp
