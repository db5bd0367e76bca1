#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sdgp {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense float32 tensor, row-major with the channel extent last (stride 1).
// A tensor of rank r is also viewed as a (rows x channels) matrix where
// channels is the last extent and rows the product of the others.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);
  Tensor(std::initializer_list<std::size_t> shape, std::initializer_list<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t channels() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return channels() == 0 ? 0 : size() / channels(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  const std::vector<float>& vector() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& at(std::initializer_list<std::size_t> index);
  float at(std::initializer_list<std::size_t> index) const;

  // Same data, new extents. Throws DimensionError when the sizes differ.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  bool all_finite() const;
  void fill(float v);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<float> data_;
};

// Convolution geometry. Input is [B,H,W,C], weights [K,K,C,N], output [B,H',W',N].
struct ConvShape {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const;
  std::size_t out_width() const;
  std::size_t patch_size() const { return kernel * kernel * in_channels; }
  std::size_t out_positions() const { return batch * out_height() * out_width(); }
  Shape input_shape() const { return {batch, height, width, in_channels}; }
  Shape output_shape() const { return {batch, out_height(), out_width(), out_channels}; }

  // Throws DimensionError if any extent is zero or the kernel does not fit.
  void validate() const;
  friend bool operator==(const ConvShape&, const ConvShape&) = default;
};

// c[r, j] = sum_k a[r, k] * b[k, j], accumulated in ascending k for every
// element. Raw-pointer kernels used by the layers; `c` is overwritten.
void gemm(const float* a, const float* b, float* c, std::size_t rows, std::size_t inner,
          std::size_t cols);
// c[i, j] = sum_r a[r, i] * b[r, j] (a transposed), ascending r. `c` is overwritten.
void gemm_tn(const float* a, const float* b, float* c, std::size_t rows, std::size_t a_cols,
             std::size_t b_cols);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Unrolls receptive fields: one row per output position, columns ordered (kh, kw, c).
Tensor im2col(const Tensor& input, const ConvShape& conv);
// Same, writing into `cols` and reusing its storage when the shape already fits.
void im2col(const Tensor& input, const ConvShape& conv, Tensor& cols);
// Scatter-add adjoint of im2col.
Tensor col2im(const Tensor& cols, const ConvShape& conv);

double dot(const Tensor& a, const Tensor& b);

}  // namespace sdgp
