#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csnn/tensor.hpp"

namespace csnn {

enum class DatasetSplit : std::uint8_t { train, eval, test };

struct ChannelStats {
  std::vector<float> mean;
  std::vector<float> stddev;
};

struct Dataset {
  Tensor images;  // [n, h, w, c], values in [0,1] until normalized
  std::vector<std::int32_t> labels;
  std::size_t class_count = 0;
  DatasetSplit split = DatasetSplit::train;
  bool normalized = false;
  std::optional<ChannelStats> stats;  // the stats this set was normalized with

  std::size_t size() const { return labels.size(); }
  std::uint64_t digest() const;  // content hash of the decoded tensor+labels

  Dataset subset(const std::vector<std::size_t>& indices) const;
  Dataset head(std::size_t n) const;
};

enum class CifarVariant : std::uint8_t { cifar10, cifar100 };

/// Reads one or more CIFAR binary batch files (3073-byte records for
/// CIFAR-10, 3074 with coarse+fine labels for CIFAR-100; the fine label is
/// used). Channel-planar bytes decode to HWC floats in [0,1].
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& files,
                          CifarVariant variant);

/// Standard directory layout: data_batch_1..5.bin + test_batch.bin
/// (CIFAR-10) or train.bin + test.bin (CIFAR-100).
Dataset load_cifar_dir(const std::filesystem::path& dir, CifarVariant variant,
                       bool train_split);

/// IDX pair: images (magic 0x00000803) and labels (0x00000801), big-endian
/// dimensions; 28x28x1 floats in [0,1].
Dataset load_mnist_idx(const std::filesystem::path& images_file,
                       const std::filesystem::path& labels_file);

/// Deterministic seeded partition into (first `eval_count`, rest): disjoint
/// and covering.
std::pair<Dataset, Dataset> split_eval(const Dataset& data,
                                       std::size_t eval_count,
                                       std::uint64_t seed);

/// Per-channel (x - mean) / std. Train splits derive their own stats;
/// other splits must pass the train stats. Double application is refused.
ChannelStats normalize_inplace(Dataset& data,
                               const std::optional<ChannelStats>& stats = {});

/// Helper for writing synthetic CIFAR-format files (round-trip tests, data
/// generation): packs HWC [0,1] floats back into label + planar bytes.
std::vector<std::uint8_t> encode_cifar_record(std::int32_t label,
                                              const float* hwc,
                                              std::size_t h, std::size_t w);

}  // namespace csnn
