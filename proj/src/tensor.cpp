#include "csnn/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace csnn {

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 4)
    throw DimensionError("tensor rank must be 1..4");
  std::size_t n = 1;
  for (std::size_t e : shape_) {
    if (e == 0) throw DimensionError("tensor extent must be positive");
    n *= e;
  }
  data_.assign(n, fill);
}

Tensor Tensor::from_data(std::vector<std::size_t> shape,
                         std::vector<float> data) {
  Tensor t(std::move(shape));
  if (t.data_.size() != data.size())
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape product " +
                         std::to_string(t.data_.size()));
  t.data_ = std::move(data);
  return t;
}

std::span<const float> Tensor::sample(std::size_t n) const {
  const std::size_t ss = sample_size();
  return {data_.data() + n * ss, ss};
}

std::size_t Tensor::sample_size() const {
  std::size_t ss = 1;
  for (std::size_t d = 1; d < shape_.size(); ++d) ss *= shape_[d];
  return ss;
}

bool Tensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const char* where) const {
  if (!all_finite())
    throw InvariantError(std::string("non-finite values in ") + where);
}

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t s,
                        Padding pad) {
  if (k == 0 || s == 0) throw DimensionError("kernel and stride must be >= 1");
  if (pad == Padding::valid) {
    if (k > in)
      throw DimensionError("kernel " + std::to_string(k) +
                           " larger than input " + std::to_string(in) +
                           " with valid padding");
    return (in - k) / s + 1;
  }
  return (in + s - 1) / s;  // ceil(in / s)
}

PatchGrid extract_patches(std::span<const float> data, std::size_t h,
                          std::size_t w, std::size_t c, Kernel2d kernel,
                          Stride2d stride, Padding padding) {
  const std::size_t out_h = conv_extent(h, kernel.h, stride.h, padding);
  const std::size_t out_w = conv_extent(w, kernel.w, stride.w, padding);

  // Same padding: zeros split floor-left / ceil-right.
  long pad_top = 0, pad_left = 0;
  if (padding == Padding::same) {
    const long tot_h = std::max<long>(
        0, static_cast<long>((out_h - 1) * stride.h + kernel.h) -
               static_cast<long>(h));
    const long tot_w = std::max<long>(
        0, static_cast<long>((out_w - 1) * stride.w + kernel.w) -
               static_cast<long>(w));
    pad_top = tot_h / 2;
    pad_left = tot_w / 2;
  }

  PatchGrid grid;
  grid.rows = out_h;
  grid.cols = out_w;
  grid.patch_len = kernel.h * kernel.w * c;
  grid.patches.assign(grid.count() * grid.patch_len, 0.0f);
  grid.anchors.resize(grid.count());

  for (std::size_t pr = 0; pr < out_h; ++pr) {
    const long r0 = static_cast<long>(pr * stride.h) - pad_top;
    for (std::size_t pc = 0; pc < out_w; ++pc) {
      const long c0 = static_cast<long>(pc * stride.w) - pad_left;
      const std::size_t p = pr * out_w + pc;
      grid.anchors[p] = {static_cast<int>(r0), static_cast<int>(c0)};
      float* dst = grid.patch(p);
      for (std::size_t kr = 0; kr < kernel.h; ++kr) {
        const long row = r0 + static_cast<long>(kr);
        if (row < 0 || row >= static_cast<long>(h)) continue;  // stays zero
        for (std::size_t kc = 0; kc < kernel.w; ++kc) {
          const long col = c0 + static_cast<long>(kc);
          if (col < 0 || col >= static_cast<long>(w)) continue;
          const float* src = data.data() + (static_cast<std::size_t>(row) * w +
                                            static_cast<std::size_t>(col)) *
                                               c;
          std::memcpy(dst + (kr * kernel.w + kc) * c, src, c * sizeof(float));
        }
      }
    }
  }
  return grid;
}

PatchGrid extract_patches(const Tensor& input, Kernel2d kernel,
                          Stride2d stride, Padding padding) {
  if (input.rank() != 3)
    throw DimensionError("extract_patches expects a rank-3 (h,w,c) tensor");
  return extract_patches(input.values(), input.extent(0), input.extent(1),
                         input.extent(2), kernel, stride, padding);
}

double dot_f64(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

double l2_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

void l2_normalize(std::span<float> v) {
  const double norm = l2_norm(v);
  if (norm <= 1e-12)
    throw DegenerateVectorError("l2_normalize: near-zero vector");
  const float inv = static_cast<float>(1.0 / norm);
  for (float& x : v) x *= inv;
}

std::vector<float> l2_normalized(std::span<const float> v) {
  std::vector<float> out(v.begin(), v.end());
  l2_normalize(out);
  return out;
}

Tensor naive_sconv_oracle(const Tensor& input,
                          const std::vector<std::vector<float>>& weights,
                          Kernel2d kernel, Stride2d stride, Padding padding) {
  if (input.rank() != 3)
    throw DimensionError("naive_sconv_oracle expects a rank-3 tensor");
  const std::size_t h = input.extent(0);
  const std::size_t w = input.extent(1);
  const std::size_t c = input.extent(2);
  const std::size_t flen = kernel.h * kernel.w * c;
  for (const auto& f : weights)
    if (f.size() != flen)
      throw DimensionError("filter length does not match kernel volume");

  const std::size_t out_h = conv_extent(h, kernel.h, stride.h, padding);
  const std::size_t out_w = conv_extent(w, kernel.w, stride.w, padding);

  long pad_top = 0, pad_left = 0;
  if (padding == Padding::same) {
    pad_top = std::max<long>(
                  0, static_cast<long>((out_h - 1) * stride.h + kernel.h) -
                         static_cast<long>(h)) /
              2;
    pad_left = std::max<long>(
                   0, static_cast<long>((out_w - 1) * stride.w + kernel.w) -
                          static_cast<long>(w)) /
               2;
  }

  Tensor out({out_h, out_w, weights.size()});
  for (std::size_t m = 0; m < out_h; ++m) {
    for (std::size_t n = 0; n < out_w; ++n) {
      for (std::size_t i = 0; i < weights.size(); ++i) {
        double acc = 0.0;
        for (std::size_t kr = 0; kr < kernel.h; ++kr) {
          for (std::size_t kc = 0; kc < kernel.w; ++kc) {
            const long row = static_cast<long>(m * stride.h + kr) - pad_top;
            const long col = static_cast<long>(n * stride.w + kc) - pad_left;
            if (row < 0 || row >= static_cast<long>(h) || col < 0 ||
                col >= static_cast<long>(w))
              continue;
            for (std::size_t ch = 0; ch < c; ++ch) {
              const float x = input.at(input.idx3(static_cast<std::size_t>(row),
                                                  static_cast<std::size_t>(col),
                                                  ch));
              const float wv = weights[i][(kr * kernel.w + kc) * c + ch];
              acc += static_cast<double>(x) * static_cast<double>(wv);
            }
          }
        }
        out.at(out.idx3(m, n, i)) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

}  // namespace csnn
