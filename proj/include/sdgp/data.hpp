#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "sdgp/tensor.hpp"

namespace sdgp {

enum class Normalization {
  UnitRange,    // bytes / 255
  Standardize,  // bytes / 255, then zero mean and unit variance per channel
};

struct Dataset {
  Tensor images;  // [N,H,W,C]
  std::vector<std::uint8_t> labels;
  std::size_t num_classes = 0;
  // Statistics removed by Standardize (empty for UnitRange).
  std::vector<float> channel_mean;
  std::vector<float> channel_std;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  // Throws InputError when counts disagree or a label is out of range.
  void validate() const;
};

// IDX pair: images magic 0x00000803 [N,rows,cols], labels magic 0x00000801 [N].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Normalization norm = Normalization::Standardize);

// CIFAR-10 binary batches: records of 1 label byte + 3072 planar RGB bytes.
Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& files,
                            Normalization norm = Normalization::Standardize);

struct SynthOptions {
  std::size_t samples = 1000;
  std::size_t classes = 2;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  double noise = 0.5;  // per-pixel Gaussian noise; blob amplitude is 1
  std::uint64_t seed = 0;
};

// Gaussian class-conditional blobs rendered as images.
Dataset synth_dataset(const SynthOptions& options, Normalization norm = Normalization::Standardize);

// Applies per-channel standardization in place and records the statistics.
void standardize(Dataset& data);
// Applies statistics computed on another dataset.
void standardize_with(Dataset& data, std::span<const float> mean, std::span<const float> stddev);

// Copies the samples at `indices` into a batch tensor and label vector.
void gather_batch(const Dataset& data, std::span<const std::size_t> indices, Tensor& batch,
                  std::vector<std::uint8_t>& labels);

// Keeps the first `count` samples.
void truncate(Dataset& data, std::size_t count);

// The first `count` samples and the rest, sharing num_classes.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t count);

}  // namespace sdgp
