#include "sdgp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>

#include "sdgp/errors.hpp"
#include "sdgp/rng.hpp"

namespace sdgp {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& bytes, std::size_t at, const std::filesystem::path& path) {
  if (bytes.size() < at + 4) throw FormatError(path.string() + ": truncated IDX header", bytes.size());
  return static_cast<std::uint32_t>(bytes[at]) << 24 | static_cast<std::uint32_t>(bytes[at + 1]) << 16 |
         static_cast<std::uint32_t>(bytes[at + 2]) << 8 | static_cast<std::uint32_t>(bytes[at + 3]);
}

// Returns the extents of an unsigned-byte IDX file with the expected magic.
std::vector<std::size_t> idx_header(const std::vector<std::uint8_t>& bytes, std::uint32_t magic,
                                    const std::filesystem::path& path) {
  if (bytes.empty()) throw FormatError(path.string() + ": empty file", 0);
  const std::uint32_t got = be32(bytes, 0, path);
  if (got != magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX magic 0x%08X (expected 0x%08X)", got, magic);
    throw FormatError(path.string() + ": " + buf, 0);
  }
  std::vector<std::size_t> dims(magic & 0xFF);
  std::size_t expected = 1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    dims[i] = be32(bytes, 4 + 4 * i, path);
    expected *= dims[i];
  }
  const std::size_t header = 4 + 4 * dims.size();
  if (bytes.size() < header + expected) {
    throw FormatError(path.string() + ": truncated IDX payload, expected " + std::to_string(expected) + " bytes",
                      bytes.size());
  }
  return dims;
}

void finish(Dataset& d, Normalization norm) {
  if (norm == Normalization::Standardize) standardize(d);
}

}  // namespace

Shape Dataset::sample_shape() const {
  if (images.rank() != 4) return {};
  return {images.dim(1), images.dim(2), images.dim(3)};
}

void Dataset::validate() const {
  if (images.rank() != 4) throw InputError("dataset images must be [N,H,W,C]");
  if (images.dim(0) != labels.size()) {
    throw InputError("dataset has " + std::to_string(images.dim(0)) + " images but " + std::to_string(labels.size()) +
                     " labels");
  }
  for (std::uint8_t l : labels) {
    if (l >= num_classes) throw InputError("label " + std::to_string(l) + " out of range");
  }
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Normalization norm) {
  const auto img_bytes = read_file(images);
  const auto dims = idx_header(img_bytes, 0x00000803, images);
  const auto lbl_bytes = read_file(labels);
  const auto ldims = idx_header(lbl_bytes, 0x00000801, labels);
  if (dims[0] != ldims[0]) {
    throw InputError("IDX count mismatch: " + std::to_string(dims[0]) + " images vs " + std::to_string(ldims[0]) +
                     " labels");
  }
  Dataset d;
  d.images = Tensor({dims[0], dims[1], dims[2], 1});
  const std::size_t header = 16;
  for (std::size_t i = 0; i < d.images.size(); ++i) d.images[i] = img_bytes[header + i] / 255.0f;
  d.labels.assign(lbl_bytes.begin() + 8, lbl_bytes.begin() + 8 + static_cast<std::ptrdiff_t>(ldims[0]));
  d.num_classes = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1u;
  finish(d, norm);
  return d;
}

Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& files, Normalization norm) {
  constexpr std::size_t kRecord = 3073, kSide = 32, kPlane = kSide * kSide;
  std::vector<std::vector<std::uint8_t>> contents;
  std::size_t records = 0;
  for (const auto& f : files) {
    auto bytes = read_file(f);
    if (bytes.empty()) throw FormatError(f.string() + ": empty CIFAR-10 batch", 0);
    if (bytes.size() % kRecord != 0) {
      throw FormatError(f.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 3073",
                        bytes.size() / kRecord * kRecord);
    }
    records += bytes.size() / kRecord;
    contents.push_back(std::move(bytes));
  }
  Dataset d;
  d.num_classes = 10;
  d.images = Tensor({records, kSide, kSide, 3});
  d.labels.reserve(records);
  std::size_t sample = 0;
  for (std::size_t f = 0; f < contents.size(); ++f) {
    const auto& bytes = contents[f];
    for (std::size_t r = 0; r < bytes.size() / kRecord; ++r, ++sample) {
      const std::uint8_t* rec = bytes.data() + r * kRecord;
      if (rec[0] >= 10) throw FormatError(files[f].string() + ": label out of range", r * kRecord);
      d.labels.push_back(rec[0]);
      float* out = d.images.data() + sample * kPlane * 3;
      for (std::size_t p = 0; p < kPlane; ++p)
        for (std::size_t c = 0; c < 3; ++c) out[p * 3 + c] = rec[1 + c * kPlane + p] / 255.0f;
    }
  }
  finish(d, norm);
  return d;
}

Dataset synth_dataset(const SynthOptions& o, Normalization norm) {
  if (o.classes == 0 || o.classes > 256) throw ConfigError("synthetic dataset: classes must be in [1, 256]");
  if (o.height == 0 || o.width == 0 || o.channels == 0) throw ConfigError("synthetic dataset: empty image shape");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // One prototype per class: a Gaussian blob at a class-specific position with
  // a class-specific sign pattern across channels.
  const std::size_t pixels = o.height * o.width * o.channels;
  std::vector<std::vector<float>> prototypes(o.classes, std::vector<float>(pixels));
  const double sigma = 0.15 * static_cast<double>(std::min(o.height, o.width));
  for (auto& proto : prototypes) {
    const double cy = unit(rng) * static_cast<double>(o.height - 1);
    const double cx = unit(rng) * static_cast<double>(o.width - 1);
    std::vector<double> sign(o.channels);
    for (auto& s : sign) s = unit(rng) < 0.5 ? -1.0 : 1.0;
    for (std::size_t y = 0; y < o.height; ++y) {
      for (std::size_t x = 0; x < o.width; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double v = std::exp(-d2 / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < o.channels; ++c)
          proto[(y * o.width + x) * o.channels + c] = static_cast<float>(sign[c] * v);
      }
    }
  }

  Dataset d;
  d.num_classes = o.classes;
  d.images = Tensor({o.samples, o.height, o.width, o.channels});
  d.labels.resize(o.samples);
  for (std::size_t i = 0; i < o.samples; ++i) {
    const std::size_t label = static_cast<std::size_t>(unit(rng) * static_cast<double>(o.classes)) % o.classes;
    d.labels[i] = static_cast<std::uint8_t>(label);
    float* out = d.images.data() + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p)
      out[p] = static_cast<float>(prototypes[label][p] + o.noise * gauss(rng));
  }
  finish(d, norm);
  return d;
}

void standardize(Dataset& data) {
  const std::size_t ch = data.images.channels();
  const std::size_t rows = data.images.rows();
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) mean[c] += data.images[r * ch + c];
  for (auto& m : mean) m /= std::max<std::size_t>(rows, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double dv = data.images[r * ch + c] - mean[c];
      var[c] += dv * dv;
    }
  }
  std::vector<float> m(ch), s(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    m[c] = static_cast<float>(mean[c]);
    const double sd = std::sqrt(var[c] / std::max<std::size_t>(rows, 1));
    s[c] = static_cast<float>(sd > 1e-12 ? sd : 1.0);
  }
  standardize_with(data, m, s);
}

void standardize_with(Dataset& data, std::span<const float> mean, std::span<const float> stddev) {
  const std::size_t ch = data.images.channels();
  if (mean.size() != ch || stddev.size() != ch) throw DimensionError("standardize: statistics do not match channels");
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const std::size_t c = i % ch;
    data.images[i] = (data.images[i] - mean[c]) / stddev[c];
  }
  data.channel_mean.assign(mean.begin(), mean.end());
  data.channel_std.assign(stddev.begin(), stddev.end());
}

void gather_batch(const Dataset& data, std::span<const std::size_t> indices, Tensor& batch,
                  std::vector<std::uint8_t>& labels) {
  const Shape sample = data.sample_shape();
  const std::size_t per = shape_size(sample);
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample.begin(), sample.end());
  if (batch.shape() != shape) batch = Tensor(shape);
  labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= data.size()) throw DimensionError("gather_batch: index out of range");
    std::copy_n(data.images.data() + src * per, per, batch.data() + i * per);
    labels[i] = data.labels[src];
  }
}

void truncate(Dataset& data, std::size_t count) {
  if (count >= data.size()) return;
  const Shape sample = data.sample_shape();
  Shape shape{count};
  shape.insert(shape.end(), sample.begin(), sample.end());
  std::vector<float> v(data.images.data(), data.images.data() + count * shape_size(sample));
  data.images = Tensor(shape, std::move(v));
  data.labels.resize(count);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t count) {
  if (count > data.size()) throw InputError("cannot split " + std::to_string(data.size()) + " samples at " +
                                            std::to_string(count));
  const std::size_t per = shape_size(data.sample_shape());
  Shape head_shape = data.images.shape(), tail_shape = data.images.shape();
  head_shape[0] = count;
  tail_shape[0] = data.size() - count;
  const auto& v = data.images.vector();
  const auto cut = v.begin() + static_cast<std::ptrdiff_t>(count * per);
  std::pair<Dataset, Dataset> out;
  out.first.images = Tensor(head_shape, std::vector<float>(v.begin(), cut));
  out.second.images = Tensor(tail_shape, std::vector<float>(cut, v.end()));
  out.first.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(count));
  out.second.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(count), data.labels.end());
  for (Dataset* d : {&out.first, &out.second}) {
    d->num_classes = data.num_classes;
    d->channel_mean = data.channel_mean;
    d->channel_std = data.channel_std;
  }
  return out;
}

}  // namespace sdgp
