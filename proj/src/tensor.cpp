#include "sdgp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "sdgp/errors.hpp"

namespace sdgp {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor::Tensor(std::initializer_list<std::size_t> shape, std::initializer_list<float> values)
    : Tensor(Shape(shape), std::vector<float>(values)) {}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("index rank does not match tensor rank");
  std::size_t off = 0;
  std::size_t i = 0;
  for (std::size_t v : index) {
    if (v >= shape_[i]) throw DimensionError("index out of range");
    off = off * shape_[i] + v;
    ++i;
  }
  return off;
}

float& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
float Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }
Tensor Tensor::reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

std::size_t ConvShape::out_height() const {
  if (height + 2 * padding < kernel || stride == 0) return 0;
  return (height + 2 * padding - kernel) / stride + 1;
}

std::size_t ConvShape::out_width() const {
  if (width + 2 * padding < kernel || stride == 0) return 0;
  return (width + 2 * padding - kernel) / stride + 1;
}

void ConvShape::validate() const {
  if (batch == 0 || in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw DimensionError("conv shape: batch, channels, kernel and stride must be >= 1");
  }
  if (out_height() == 0 || out_width() == 0) {
    throw DimensionError("conv shape: kernel " + std::to_string(kernel) + " does not fit a " +
                         std::to_string(height) + "x" + std::to_string(width) + " input with padding " +
                         std::to_string(padding));
  }
}

namespace {

typedef float vfloat __attribute__((vector_size(64)));

constexpr std::size_t kLanes = 16;
constexpr std::size_t kPanel = 2 * kLanes;
constexpr std::size_t kRows = 6;
constexpr std::size_t kDepth = 64;

vfloat load_vec(const float* p) {
  vfloat v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

void store_vec(float* p, vfloat v) { std::memcpy(p, &v, sizeof v); }

// C[i, j0 .. j0 + kPanel) for MR rows. Element (i, k) of A lives at a[i * si + k * sk];
// the packed panel holds B[k, j0 .. j0 + kPanel) contiguously. Each output sums over
// k in ascending order; with `resume` the sums continue from the values in C.
template <std::size_t MR>
void tile(const float* a, std::size_t si, std::size_t sk, const float* panel, std::size_t inner, float* c,
          std::size_t ldc, std::size_t width, bool resume) {
  vfloat acc[MR][2] = {};
  if (resume) {
    for (std::size_t i = 0; i < MR; ++i) {
      float tmp[kPanel] = {};
      std::memcpy(tmp, c + i * ldc, width * sizeof(float));
      acc[i][0] = load_vec(tmp);
      acc[i][1] = load_vec(tmp + kLanes);
    }
  }
  for (std::size_t k = 0; k < inner; ++k) {
    const vfloat b0 = load_vec(panel + k * kPanel), b1 = load_vec(panel + k * kPanel + kLanes);
    for (std::size_t i = 0; i < MR; ++i) {
      const float av = a[i * si + k * sk];
      acc[i][0] += av * b0;
      acc[i][1] += av * b1;
    }
  }
  for (std::size_t i = 0; i < MR; ++i) {
    if (width == kPanel) {
      store_vec(c + i * ldc, acc[i][0]);
      store_vec(c + i * ldc + kLanes, acc[i][1]);
    } else {
      float tmp[kPanel];
      store_vec(tmp, acc[i][0]);
      store_vec(tmp + kLanes, acc[i][1]);
      std::memcpy(c + i * ldc, tmp, width * sizeof(float));
    }
  }
}

// C (rows x cols) = A (rows x inner, strided) * B (inner x cols, row-major).
void blocked_gemm(const float* a, std::size_t si, std::size_t sk, const float* b, float* c, std::size_t rows,
                  std::size_t inner, std::size_t cols) {
  if (inner == 0) {
    std::fill(c, c + rows * cols, 0.0f);
    return;
  }
  const std::size_t panels = (cols + kPanel - 1) / kPanel;
  std::vector<float> packed(panels * kDepth * kPanel);
  for (std::size_t k0 = 0; k0 < inner; k0 += kDepth) {
    const std::size_t depth = std::min(kDepth, inner - k0);
    const bool resume = k0 > 0;
    for (std::size_t p = 0; p < panels; ++p) {
      const std::size_t j0 = p * kPanel, width = std::min(kPanel, cols - j0);
      for (std::size_t k = 0; k < depth; ++k) {
        float* dst = packed.data() + (p * kDepth + k) * kPanel;
        std::memcpy(dst, b + (k0 + k) * cols + j0, width * sizeof(float));
        std::fill(dst + width, dst + kPanel, 0.0f);
      }
    }
    const float* ak = a + k0 * sk;
    auto run = [&]<std::size_t MR>(std::size_t r) {
      for (std::size_t p = 0; p < panels; ++p) {
        const std::size_t j0 = p * kPanel, width = std::min(kPanel, cols - j0);
        tile<MR>(ak + r * si, si, sk, packed.data() + p * kDepth * kPanel, depth, c + r * cols + j0, cols, width,
                 resume);
      }
    };
    std::size_t r = 0;
    for (; r + kRows <= rows; r += kRows) run.template operator()<kRows>(r);
    switch (rows - r) {
      case 5: run.template operator()<5>(r); break;
      case 4: run.template operator()<4>(r); break;
      case 3: run.template operator()<3>(r); break;
      case 2: run.template operator()<2>(r); break;
      case 1: run.template operator()<1>(r); break;
      default: break;
    }
  }
}

}  // namespace

void gemm(const float* __restrict a, const float* __restrict b, float* __restrict c, std::size_t rows,
          std::size_t inner, std::size_t cols) {
  blocked_gemm(a, inner, 1, b, c, rows, inner, cols);
}

void gemm_tn(const float* __restrict a, const float* __restrict b, float* __restrict c, std::size_t rows,
             std::size_t a_cols, std::size_t b_cols) {
  blocked_gemm(a, 1, a_cols, b, c, a_cols, rows, b_cols);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects rank-2 tensors");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul inner extents differ: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  gemm(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects a rank-2 tensor");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
  return t;
}

namespace {

void check_image(const Tensor& input, const ConvShape& conv) {
  conv.validate();
  if (input.shape() != conv.input_shape()) {
    throw DimensionError("input " + shape_to_string(input.shape()) + " does not match conv input " +
                         shape_to_string(conv.input_shape()));
  }
}

// Calls fn(row, col_offset, src_offset) for every in-bounds (position, tap)
// pair, where src_offset indexes the first channel of the input pixel.
template <typename Fn>
void for_each_tap(const ConvShape& conv, Fn&& fn) {
  const std::size_t oh = conv.out_height(), ow = conv.out_width();
  const std::size_t ch = conv.in_channels;
  std::size_t row = 0;
  for (std::size_t b = 0; b < conv.batch; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++row) {
        for (std::size_t kh = 0; kh < conv.kernel; ++kh) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * conv.stride + kh) -
                                    static_cast<std::ptrdiff_t>(conv.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(conv.height)) continue;
          for (std::size_t kw = 0; kw < conv.kernel; ++kw) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * conv.stride + kw) -
                                      static_cast<std::ptrdiff_t>(conv.padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(conv.width)) continue;
            const std::size_t src = ((b * conv.height + static_cast<std::size_t>(iy)) * conv.width +
                                     static_cast<std::size_t>(ix)) * ch;
            fn(row, (kh * conv.kernel + kw) * ch, src);
          }
        }
      }
    }
  }
}

}  // namespace

Tensor im2col(const Tensor& input, const ConvShape& conv) {
  Tensor cols;
  im2col(input, conv, cols);
  return cols;
}

void im2col(const Tensor& input, const ConvShape& conv, Tensor& cols) {
  check_image(input, conv);
  const std::size_t patch = conv.patch_size(), ch = conv.in_channels;
  const Shape shape{conv.out_positions(), patch};
  if (cols.shape() == shape) {
    cols.fill(0.0f);
  } else {
    cols = Tensor(shape);
  }
  float* out = cols.data();
  const float* in = input.data();
  for_each_tap(conv, [&](std::size_t row, std::size_t col, std::size_t src) {
    std::copy_n(in + src, ch, out + row * patch + col);
  });
}

Tensor col2im(const Tensor& cols, const ConvShape& conv) {
  conv.validate();
  const Shape expected{conv.out_positions(), conv.patch_size()};
  if (cols.shape() != expected) {
    throw DimensionError("col2im input " + shape_to_string(cols.shape()) + " does not match " +
                         shape_to_string(expected));
  }
  const std::size_t patch = conv.patch_size(), ch = conv.in_channels;
  Tensor image(conv.input_shape());
  float* out = image.data();
  const float* in = cols.data();
  for_each_tap(conv, [&](std::size_t row, std::size_t col, std::size_t dst) {
    const float* s = in + row * patch + col;
    for (std::size_t c = 0; c < ch; ++c) out[dst + c] += s[c];
  });
  return image;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("dot: sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

}  // namespace sdgp
