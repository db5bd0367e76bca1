#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "sdgp/config.hpp"
#include "sdgp/errors.hpp"
#include "sdgp/experiment.hpp"
#include "sdgp/perf.hpp"
#include "sdgp/prune.hpp"

namespace py = pybind11;
using namespace sdgp;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  if (a.ndim() < 1) throw DimensionError("expected an array with a channel dimension");
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t) {
  FloatArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

PruneConfig make_prune(std::size_t n, std::size_t m, const std::string& function, std::uint64_t seed,
                       const std::string& rescale) {
  PruneConfig cfg;
  cfg.n = n;
  cfg.m = m;
  cfg.function = parse_prune_function(function);
  cfg.seed = seed;
  cfg.rescale = parse_rescale_scope(rescale);
  cfg.validate();
  return cfg;
}

py::dict speedup_dict(const SpeedupEstimate& e) {
  py::dict d;
  d["data_grad_fraction"] = e.data_grad_fraction;
  d["ratio"] = e.ratio;
  d["reduced_fraction"] = e.reduced_fraction;
  d["total_reduction_percent"] = e.total_reduction_percent;
  return d;
}

py::list metrics_list(const std::vector<EpochMetrics>& history) {
  py::list out;
  for (const EpochMetrics& m : history) {
    py::dict d;
    d["epoch"] = m.epoch;
    d["wall_s"] = m.wall_s;
    d["train_loss"] = m.train_loss;
    d["val_top1"] = m.val_top1;
    out.append(d);
  }
  return out;
}

std::vector<EpochMetrics> metrics_from(const py::iterable& stream) {
  std::vector<EpochMetrics> out;
  for (const py::handle& item : stream) {
    const py::dict d = py::reinterpret_borrow<py::dict>(item);
    EpochMetrics m;
    m.epoch = d.contains("epoch") ? d["epoch"].cast<std::size_t>() : out.size() + 1;
    m.wall_s = d["wall_s"].cast<double>();
    m.train_loss = d.contains("train_loss") ? d["train_loss"].cast<double>() : 0.0;
    m.val_top1 = d["val_top1"].cast<double>();
    out.push_back(m);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Structured data gradient pruning: n:m pruning, training and the speedup model";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);

  m.def(
      "prune",
      [](const FloatArray& grad, std::size_t n, std::size_t mm, const std::string& function, std::uint64_t seed,
         const std::string& rescale) { return to_array(sdgp::sdgp(to_tensor(grad), make_prune(n, mm, function, seed, rescale))); },
      py::arg("grad"), py::arg("n") = 2, py::arg("m") = 4, py::arg("function") = "magnitude", py::arg("seed") = 0,
      py::arg("rescale") = "channel",
      "Prunes every group of m consecutive entries along the last axis to n survivors.");

  m.def(
      "keep_set",
      [](const std::vector<float>& group, std::size_t n) { return magnitude_keep_set(group, n).kept; },
      py::arg("group"), py::arg("n"), "Indices kept by magnitude pruning, ascending.");

  m.def(
      "estimate_speedup",
      [](double f, std::size_t n, std::size_t mm) { return speedup_dict(estimate_speedup(f, n, mm)); },
      py::arg("fraction"), py::arg("n"), py::arg("m"));
  m.def(
      "estimate_speedup_for_ratio", [](double f, double r) { return speedup_dict(estimate_speedup_for_ratio(f, r)); },
      py::arg("fraction"), py::arg("ratio"));

  m.def(
      "estimate_tta",
      [](const py::iterable& stream, double target, double f, std::size_t n, std::size_t mm) -> py::object {
        const TtaEstimate e = estimate_tta(metrics_from(stream), target, f, n, mm);
        if (!e.reached) return py::none();
        py::dict d;
        d["epoch"] = e.epoch;
        d["seconds"] = e.seconds;
        d["raw_seconds"] = e.raw_seconds;
        return d;
      },
      py::arg("metrics"), py::arg("target"), py::arg("fraction"), py::arg("n"), py::arg("m"),
      "Estimated seconds to the target accuracy, or None when it is never reached.");

  m.def(
      "load_config",
      [](const std::filesystem::path& path) {
        const ExperimentConfig cfg = load_config(path);
        validate_config(cfg);
        return py::module_::import("json").attr("loads")(to_json(cfg).dump());
      },
      py::arg("path"), "Parses and validates a config file; returns the fully resolved document.");

  m.def(
      "train",
      [](const std::filesystem::path& config, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
        ExperimentConfig cfg = load_config(config);
        if (seed) cfg.seed = *seed;
        TrainState st;
        {
          py::gil_scoped_release release;
          st = run_train(cfg, out);
        }
        return metrics_list(st.history);
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none(),
      "Trains as the CLI does, writing artifacts to out; returns per-epoch metrics.");

  m.def(
      "read_metrics", [](const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return metrics_list(parse_metrics_csv(ss.str()));
      },
      py::arg("path"));
}
