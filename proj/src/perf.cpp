#include "sdgp/perf.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

#include "sdgp/errors.hpp"

namespace sdgp {

double TimingProfile::total_s() const {
  double t = 0.0;
  for (const auto& l : layers) t += l.total_s();
  return t;
}

double TimingProfile::conv_backward_data_s() const {
  double t = 0.0;
  for (const auto& l : layers)
    if (l.kind == LayerKind::Conv) t += l.backward_data_s;
  return t;
}

double TimingProfile::data_grad_fraction() const {
  const double total = total_s();
  return total > 0.0 ? conv_backward_data_s() / total : 0.0;
}

namespace {

class PhaseRecorder final : public PhaseObserver {
 public:
  explicit PhaseRecorder(const std::vector<Layer*>& leaves) {
    for (std::size_t i = 0; i < leaves.size(); ++i) index_[leaves[i]] = i;
    costs_.resize(leaves.size());
  }
  void record(const Layer& layer, Phase phase, double seconds, double flops) override {
    auto it = index_.find(&layer);
    if (it == index_.end()) return;
    auto& c = costs_[it->second][static_cast<int>(phase)];
    c.seconds += seconds;
    c.flops += flops;
    c.seen = true;
  }
  struct Cost {
    double seconds = 0.0, flops = 0.0;
    bool seen = false;
  };
  std::vector<std::array<Cost, 3>> take() {
    auto out = costs_;
    for (auto& row : costs_) row = {};
    return out;
  }

 private:
  std::map<const Layer*, std::size_t> index_;
  std::vector<std::array<Cost, 3>> costs_;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

LayerKind kind_from_name(const std::string& name) {
  const std::string prefix = name.substr(0, name.find_first_of("0123456789"));
  for (LayerKind k : {LayerKind::Conv, LayerKind::Linear, LayerKind::Relu, LayerKind::MaxPool, LayerKind::BatchNorm,
                      LayerKind::Flatten, LayerKind::Residual}) {
    if (to_string(k) == prefix) return k;
  }
  throw InputError("timing csv: cannot infer layer kind from '" + name + "'");
}

void check_fraction(double f) {
  if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("data-gradient fraction must lie in [0, 1]");
}

}  // namespace

TimingProfile profile_network(Network& net, std::size_t batch_size, std::size_t repeats, ClockKind clock,
                              double work_gflops, std::uint64_t seed) {
  if (repeats < 3) throw ConfigError("profile: repeats must be >= 3");
  if (batch_size == 0) throw ConfigError("profile: batch size must be >= 1");
  if (!(work_gflops > 0.0)) throw ConfigError("profile: work clock rate must be > 0");
  const auto leaves = net.leaves();
  PhaseRecorder recorder(leaves);

  Shape shape{batch_size};
  shape.insert(shape.end(), net.sample_shape().begin(), net.sample_shape().end());
  Tensor batch(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  for (float& v : batch.values()) v = gauss(rng);
  const std::size_t classes = net.output_shape(1).back();
  std::vector<std::uint8_t> labels(batch_size);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % classes);

  SoftmaxCrossEntropy loss(0.0f);
  std::vector<std::vector<std::array<PhaseRecorder::Cost, 3>>> runs;
  for (std::size_t r = 0; r < repeats; ++r) {
    const Tensor logits = net.forward(batch, Mode::Train, &recorder);
    loss.forward(logits, labels);
    net.backward(loss.backward(), std::nullopt,
                 {.compute_input_grad = true, .keep_layer_grads = false, .observer = &recorder});
    runs.push_back(recorder.take());
  }

  TimingProfile profile;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i]->kind() == LayerKind::Flatten) continue;
    LayerTiming t{leaves[i]->name(), leaves[i]->kind()};
    double* phases[3] = {&t.forward_s, &t.backward_data_s, &t.backward_weight_s};
    for (int p = 0; p < 3; ++p) {
      std::vector<double> samples;
      for (const auto& run : runs) {
        const auto& c = run[i][p];
        samples.push_back(clock == ClockKind::Work ? c.flops / (work_gflops * 1e9) : c.seconds);
      }
      *phases[p] = median(samples);
    }
    profile.layers.push_back(t);
  }
  return profile;
}

SpeedupEstimate estimate_speedup(double data_grad_fraction, std::size_t n, std::size_t m) {
  PruneConfig{.n = n, .m = m}.validate();
  check_fraction(data_grad_fraction);
  const double kept = static_cast<double>(n) / static_cast<double>(m);
  SpeedupEstimate e;
  e.data_grad_fraction = data_grad_fraction;
  e.ratio = static_cast<double>(m) / static_cast<double>(n);
  e.reduced_fraction = data_grad_fraction * kept;
  e.total_reduction_percent = data_grad_fraction * (1.0 - kept) * 100.0;
  return e;
}

SpeedupEstimate estimate_speedup_for_ratio(double data_grad_fraction, double ratio) {
  check_fraction(data_grad_fraction);
  if (!(ratio >= 1.0)) throw ConfigError("sparsity ratio must be >= 1");
  SpeedupEstimate e;
  e.data_grad_fraction = data_grad_fraction;
  e.ratio = ratio;
  e.reduced_fraction = data_grad_fraction / ratio;
  e.total_reduction_percent = data_grad_fraction * (1.0 - 1.0 / ratio) * 100.0;
  return e;
}

TtaEstimate estimate_tta(const std::vector<EpochMetrics>& stream, double target_top1, double data_grad_fraction,
                         std::size_t n, std::size_t m) {
  if (stream.empty()) throw InputError("estimate_tta: empty metric stream");
  PruneConfig{.n = n, .m = m}.validate();
  check_fraction(data_grad_fraction);
  const double scale = 1.0 - data_grad_fraction * (1.0 - static_cast<double>(n) / static_cast<double>(m));
  TtaEstimate out;
  for (const EpochMetrics& e : stream) {
    if (e.wall_s < 0.0) throw InputError("estimate_tta: negative epoch time");
    out.raw_seconds += e.wall_s;
    if (e.val_top1 >= target_top1) {
      out.reached = true;
      out.epoch = e.epoch;
      out.seconds = out.raw_seconds * scale;
      return out;
    }
  }
  out.seconds = out.raw_seconds * scale;
  return out;
}

std::string timing_csv(const TimingProfile& profile) {
  std::string s = "layer,fwd_ms,bwd_data_ms,bwd_weight_ms\n";
  char buf[256];
  for (const auto& l : profile.layers) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f\n", l.layer.c_str(), l.forward_s * 1e3,
                  l.backward_data_s * 1e3, l.backward_weight_s * 1e3);
    s += buf;
  }
  return s;
}

TimingProfile parse_timing_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "layer,fwd_ms,bwd_data_ms,bwd_weight_ms") {
    throw InputError("timing csv: missing header");
  }
  TimingProfile p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) throw InputError("timing csv: expected 4 fields in '" + line + "'");
    p.layers.push_back({f[0], kind_from_name(f[0]), std::stod(f[1]) / 1e3, std::stod(f[2]) / 1e3,
                        std::stod(f[3]) / 1e3});
  }
  return p;
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::string s = "epoch,wall_s,train_loss,val_top1\n";
  char buf[256];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.4f\n", m.epoch, m.wall_s, m.train_loss, m.val_top1);
    s += buf;
  }
  return s;
}

std::string metrics_jsonl(const std::vector<EpochMetrics>& metrics) {
  std::string s;
  for (const auto& m : metrics) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["wall_s"] = m.wall_s;
    j["train_loss"] = m.train_loss;
    j["val_top1"] = m.val_top1;
    s += j.dump() + "\n";
  }
  return s;
}

std::vector<EpochMetrics> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,wall_s,train_loss,val_top1") {
    throw InputError("metrics csv: missing header");
  }
  std::vector<EpochMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) throw InputError("metrics csv: expected 4 fields in '" + line + "'");
    out.push_back({static_cast<std::size_t>(std::stoul(f[0])), std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
  }
  return out;
}

}  // namespace sdgp
