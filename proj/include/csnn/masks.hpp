#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csnn/rng.hpp"
#include "csnn/tensor.hpp"

namespace csnn {

enum class MaskKind : std::uint8_t { input, channel };
enum class BaseRule : std::uint8_t { hebb, oja };
enum class InputMod : std::uint8_t { all_masks, prefix_masks };
enum class MaskAvg : std::uint8_t { all_patches, gated_patches };

/// Per-neuron mask vectors. Input masks match the patch length, channel
/// masks match the previous layer's feature count and are broadcast over
/// the kernel's spatial positions.
struct NeuronMasks {
  MaskKind kind = MaskKind::input;
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // count x dim

  float* mask(std::size_t i) { return values.data() + i * dim; }
  const float* mask(std::size_t i) const { return values.data() + i * dim; }

  static NeuronMasks init(MaskKind kind, std::size_t count, std::size_t dim,
                          Rng& rng);
  static NeuronMasks identity(MaskKind kind, std::size_t count,
                              std::size_t dim);

  void require_finite() const;
};

struct MaskRuleConfig {
  BaseRule base_rule = BaseRule::hebb;
  InputMod input_mod = InputMod::all_masks;
  float gamma = 1.0f;   // input-modification strength, in [0,1]
  MaskAvg avg = MaskAvg::all_patches;

  // Section pairing: the all-masks modification runs plain Hebb (gamma 1.0),
  // the prefix modification runs Oja (gamma 0.5).
  static MaskRuleConfig hebb_all() { return {BaseRule::hebb, InputMod::all_masks, 1.0f, MaskAvg::all_patches}; }
  static MaskRuleConfig oja_prefix() { return {BaseRule::oja, InputMod::prefix_masks, 0.5f, MaskAvg::all_patches}; }
};

// Elementwise product of patch and mask (the masked patch y-hat).
std::vector<float> apply_input_mask(std::span<const float> patch,
                                    std::span<const float> mask);

// Channel mask broadcast over the kernel's spatial positions: patch is
// viewed as (patch_len / channels) stacked channel vectors.
std::vector<float> apply_channel_mask(std::span<const float> patch,
                                      std::span<const float> mask);

// Plain Hebb: yhat o p.
std::vector<float> hebb_delta(std::span<const float> p,
                              std::span<const float> yhat);

// Oja: yhat o (p - yhat o m).
std::vector<float> oja_delta(std::span<const float> p,
                             std::span<const float> yhat,
                             std::span<const float> m);

// Modified input patch: p - gamma * sum of the given yhat_k o m_k products,
// over all k (all_masks) or k < i (prefix_masks).
std::vector<float> modified_input(
    std::span<const float> p,
    const std::vector<std::vector<float>>& masked_outputs,
    const MaskRuleConfig& cfg, std::size_t i);

struct MaskUpdateStats {
  double delta_norm = 0.0;
  std::size_t gated = 0;
};

/// Accumulate-then-apply mask learning over one batch. The modified-input
/// sums collapse to p o (sum_k m_k o m_k), so they are precomputed from the
/// batch-start masks once and each gated patch costs O(dim).
class MaskUpdateAccumulator {
 public:
  MaskUpdateAccumulator(const NeuronMasks& masks, const MaskRuleConfig& cfg);

  // One gated (patch, overall-BMU neuron) pair.
  void accumulate(std::span<const float> patch, std::size_t neuron);

  // Every patch counts toward the all_patches denominator, gated or not.
  void note_patches(std::size_t n) { total_patches_ += n; }

  MaskUpdateStats apply(NeuronMasks& masks, float lr);

 private:
  const NeuronMasks& snapshot_;
  MaskRuleConfig cfg_;
  std::size_t spatial_positions_ = 1;  // kernel volume / dim for channel masks
  std::vector<float> mask_sq_;         // all_masks: sum_k m_k o m_k
  std::vector<float> prefix_sq_;       // prefix_masks: count x dim prefix sums
  std::vector<float> acc_;             // count x dim accumulated deltas
  std::vector<std::uint8_t> touched_;
  std::size_t total_patches_ = 0;
  std::size_t gated_ = 0;
};

/// Spec-shaped convenience: one grid of patches, gate[p] = winning neuron
/// index or -1 when the patch is not gated for this map.
MaskUpdateStats mask_batch_update(NeuronMasks& masks, const PatchGrid& patches,
                                  std::span<const std::int32_t> bmu_gate,
                                  const MaskRuleConfig& cfg, float lr);

}  // namespace csnn
