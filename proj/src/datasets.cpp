#include "csnn/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "csnn/io.hpp"
#include "csnn/rng.hpp"

namespace csnn {

std::uint64_t Dataset::digest() const {
  std::uint64_t h = fnv1a64(images.data(), images.size() * sizeof(float));
  h ^= fnv1a64(labels.data(), labels.size() * sizeof(std::int32_t));
  return h;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.class_count = class_count;
  out.split = split;
  out.normalized = normalized;
  out.stats = stats;
  const std::size_t ss = images.sample_size();
  std::vector<float> data(indices.size() * ss);
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(images.sample(indices[i]).data(), ss, data.data() + i * ss);
    out.labels[i] = labels[indices[i]];
  }
  auto shape = images.shape();
  shape[0] = indices.size();
  out.images = Tensor::from_data(shape, std::move(data));
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  std::iota(idx.begin(), idx.end(), 0);
  return subset(idx);
}

Dataset load_cifar_binary(const std::vector<std::filesystem::path>& files,
                          CifarVariant variant) {
  const std::size_t record =
      variant == CifarVariant::cifar10 ? 3073 : 3074;
  const std::size_t label_offset =
      variant == CifarVariant::cifar10 ? 0 : 1;  // fine label follows coarse

  Dataset out;
  out.class_count = variant == CifarVariant::cifar10 ? 10 : 100;

  std::vector<float> data;
  for (const auto& file : files) {
    const std::vector<std::uint8_t> bytes = read_file(file);
    if (bytes.empty() || bytes.size() % record != 0)
      throw DataError("truncated CIFAR file " + file.string() + ": " +
                      std::to_string(bytes.size()) +
                      " bytes is not a multiple of " + std::to_string(record));
    const std::size_t count = bytes.size() / record;
    for (std::size_t r = 0; r < count; ++r) {
      const std::uint8_t* rec = bytes.data() + r * record;
      const std::uint8_t label = rec[label_offset];
      if (label >= out.class_count)
        throw DataError("label byte " + std::to_string(label) +
                        " out of range in " + file.string());
      out.labels.push_back(label);
      const std::uint8_t* planes = rec + label_offset + 1;
      // channel-planar (1024 R, 1024 G, 1024 B) -> HWC
      const std::size_t base = data.size();
      data.resize(base + 32 * 32 * 3);
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t px = 0; px < 1024; ++px)
          data[base + px * 3 + ch] =
              static_cast<float>(planes[ch * 1024 + px]) / 255.0f;
    }
  }
  if (out.labels.empty()) throw DataError("no CIFAR records loaded");
  out.images =
      Tensor::from_data({out.labels.size(), 32, 32, 3}, std::move(data));
  return out;
}

Dataset load_cifar_dir(const std::filesystem::path& dir, CifarVariant variant,
                       bool train_split) {
  std::vector<std::filesystem::path> files;
  if (variant == CifarVariant::cifar10) {
    if (train_split) {
      for (int i = 1; i <= 5; ++i)
        files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
      files.push_back(dir / "test_batch.bin");
    }
  } else {
    files.push_back(dir / (train_split ? "train.bin" : "test.bin"));
  }
  for (const auto& f : files)
    if (!std::filesystem::exists(f))
      throw DataError("missing dataset file " + f.string());
  Dataset d = load_cifar_binary(files, variant);
  d.split = train_split ? DatasetSplit::train : DatasetSplit::test;
  return d;
}

namespace {

std::uint32_t read_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) |
         static_cast<std::uint32_t>(p[3]);
}

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images_file,
                       const std::filesystem::path& labels_file) {
  const auto ibytes = read_file(images_file);
  const auto lbytes = read_file(labels_file);
  if (ibytes.size() < 16 || read_be32(ibytes.data()) != 0x00000803)
    throw DataError("bad IDX image magic in " + images_file.string());
  if (lbytes.size() < 8 || read_be32(lbytes.data()) != 0x00000801)
    throw DataError("bad IDX label magic in " + labels_file.string());

  const std::size_t n = read_be32(ibytes.data() + 4);
  const std::size_t rows = read_be32(ibytes.data() + 8);
  const std::size_t cols = read_be32(ibytes.data() + 12);
  const std::size_t ln = read_be32(lbytes.data() + 4);
  if (n != ln)
    throw DataError("IDX image count " + std::to_string(n) +
                    " != label count " + std::to_string(ln));
  if (ibytes.size() != 16 + n * rows * cols)
    throw DataError("IDX image payload size mismatch");
  if (lbytes.size() != 8 + n)
    throw DataError("IDX label payload size mismatch");

  Dataset out;
  out.class_count = 10;
  out.labels.resize(n);
  std::vector<float> data(n * rows * cols);
  for (std::size_t i = 0; i < n * rows * cols; ++i)
    data[i] = static_cast<float>(ibytes[16 + i]) / 255.0f;
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = lbytes[8 + i];
    if (out.labels[i] > 9)
      throw DataError("IDX label out of range");
  }
  out.images = Tensor::from_data({n, rows, cols, 1}, std::move(data));
  return out;
}

std::pair<Dataset, Dataset> split_eval(const Dataset& data,
                                       std::size_t eval_count,
                                       std::uint64_t seed) {
  if (eval_count >= data.size())
    throw DataError("split_eval: eval_count " + std::to_string(eval_count) +
                    " >= dataset size " + std::to_string(data.size()));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, SeedStream::data_split);
  rng.shuffle(order.data(), order.size());

  std::vector<std::size_t> first(order.begin(), order.begin() + eval_count);
  std::vector<std::size_t> rest(order.begin() + eval_count, order.end());
  Dataset a = data.subset(first);
  Dataset b = data.subset(rest);
  a.split = DatasetSplit::eval;
  b.split = DatasetSplit::test;
  return {std::move(a), std::move(b)};
}

ChannelStats normalize_inplace(Dataset& data,
                               const std::optional<ChannelStats>& stats) {
  if (data.normalized)
    throw DataError("dataset already normalized; refusing to double-apply");
  const std::size_t c = data.images.shape().back();
  ChannelStats use;
  if (stats) {
    use = *stats;
    if (use.mean.size() != c || use.stddev.size() != c)
      throw DimensionError("channel stats do not match dataset channels");
  } else {
    if (data.split != DatasetSplit::train)
      throw DataError("normalization stats must come from the train split");
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    const std::size_t per_channel = data.images.size() / c;
    const float* p = data.images.data();
    for (std::size_t i = 0; i < data.images.size(); ++i) mean[i % c] += p[i];
    for (auto& m : mean) m /= static_cast<double>(per_channel);
    for (std::size_t i = 0; i < data.images.size(); ++i) {
      const double d = p[i] - mean[i % c];
      var[i % c] += d * d;
    }
    use.mean.resize(c);
    use.stddev.resize(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      use.mean[ch] = static_cast<float>(mean[ch]);
      use.stddev[ch] = static_cast<float>(
          std::max(std::sqrt(var[ch] / per_channel), 1e-6));
    }
  }

  float* p = data.images.data();
  for (std::size_t i = 0; i < data.images.size(); ++i)
    p[i] = (p[i] - use.mean[i % c]) / use.stddev[i % c];
  data.normalized = true;
  data.stats = use;
  return use;
}

std::vector<std::uint8_t> encode_cifar_record(std::int32_t label,
                                              const float* hwc, std::size_t h,
                                              std::size_t w) {
  std::vector<std::uint8_t> rec(1 + h * w * 3);
  rec[0] = static_cast<std::uint8_t>(label);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t px = 0; px < h * w; ++px) {
      const float v = std::clamp(hwc[px * 3 + ch], 0.0f, 1.0f);
      rec[1 + ch * h * w + px] =
          static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return rec;
}

}  // namespace csnn
