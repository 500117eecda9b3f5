#pragma once

#include <filesystem>

#include "csnn/rng.hpp"
#include "csnn/tensor.hpp"

namespace csnn::testsupport {

/// One 32x32x3 image of the synthetic 10-class texture corpus, values in
/// [0,1]. Classes differ by grating orientation/frequency/waveform and a
/// secondary checker scale; phase, offsets and tint are randomized per
/// image so raw pixels carry little linear class signal.
Tensor synth_image(std::size_t cls, Rng& rng);

/// Writes the corpus in the exact CIFAR-10 binary layout:
/// data_batch_1.bin (train) and test_batch.bin (test).
void write_synthetic_cifar10(const std::filesystem::path& dir,
                             std::size_t train_count, std::size_t test_count,
                             std::uint64_t seed);

/// A small MNIST-format pair (idx3/idx1) of blurred digit-like blobs; only
/// exercises the IDX loader, not meant for learning experiments.
void write_synthetic_mnist(const std::filesystem::path& dir,
                           std::size_t train_count, std::size_t test_count,
                           std::uint64_t seed);

}  // namespace csnn::testsupport
