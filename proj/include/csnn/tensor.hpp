#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "csnn/common.hpp"

namespace csnn {

/// Dense row-major real tensor, rank <= 4. The batch dimension, when
/// present, is always outermost; images are stored height, width, channels.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);

  static Tensor from_data(std::vector<std::size_t> shape,
                          std::vector<float> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t d) const { return shape_[d]; }
  std::size_t size() const { return data_.size(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<const float> values() const { return data_; }
  std::span<float> values() { return data_; }

  float& at(std::size_t i) { return data_[i]; }
  float at(std::size_t i) const { return data_[i]; }

  // Rank-3 (h,w,c) and rank-4 (n,h,w,c) indexers.
  std::size_t idx3(std::size_t h, std::size_t w, std::size_t c) const {
    return (h * shape_[1] + w) * shape_[2] + c;
  }
  std::size_t idx4(std::size_t n, std::size_t h, std::size_t w,
                   std::size_t c) const {
    return ((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c;
  }

  // Rank-3 view of sample n within a rank-4 tensor (no copy; caller keeps
  // the owner alive).
  std::span<const float> sample(std::size_t n) const;
  std::size_t sample_size() const;

  bool all_finite() const;
  void require_finite(const char* where) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

/// Flattened convolution windows of one image: patch (r,c) is the window
/// anchored per standard convolution indexing, stored row-major over
/// (kernel row, kernel col, channel).
struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t patch_len = 0;
  std::vector<float> patches;                     // rows*cols x patch_len
  std::vector<std::pair<int, int>> anchors;       // top-left source coords

  std::size_t count() const { return rows * cols; }
  const float* patch(std::size_t p) const { return patches.data() + p * patch_len; }
  float* patch(std::size_t p) { return patches.data() + p * patch_len; }
};

struct Kernel2d {
  std::size_t h = 1;
  std::size_t w = 1;
};

struct Stride2d {
  std::size_t h = 1;
  std::size_t w = 1;
};

// Output extent for one spatial dimension.
std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t s,
                        Padding pad);

/// Extracts every convolution window of a rank-3 input (h,w,c). Same
/// padding pads with zeros, split floor-left / ceil-right.
PatchGrid extract_patches(const Tensor& input, Kernel2d kernel,
                          Stride2d stride, Padding padding);

// As above but reading sample-shaped raw data (h,w,c row-major).
PatchGrid extract_patches(std::span<const float> data, std::size_t h,
                          std::size_t w, std::size_t c, Kernel2d kernel,
                          Stride2d stride, Padding padding);

/// L2-normalizes v in place; the norm is accumulated in double.
/// Throws DegenerateVectorError when the norm is below 1e-12.
void l2_normalize(std::span<float> v);
std::vector<float> l2_normalized(std::span<const float> v);

double l2_norm(std::span<const float> v);
double dot_f64(std::span<const float> a, std::span<const float> b);

/// Reference convolution: y[m,n,i] = dot(window(m,n), w_i) computed by
/// explicit loops with a sequential double accumulator, no reordering.
/// This is the correctness oracle for the optimized sconv forward.
Tensor naive_sconv_oracle(const Tensor& input,
                          const std::vector<std::vector<float>>& weights,
                          Kernel2d kernel, Stride2d stride, Padding padding);

}  // namespace csnn
