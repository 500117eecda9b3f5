#include "csnn/masks.hpp"

#include <cmath>
#include <string>

namespace csnn {

NeuronMasks NeuronMasks::init(MaskKind kind, std::size_t count,
                              std::size_t dim, Rng& rng) {
  NeuronMasks m;
  m.kind = kind;
  m.count = count;
  m.dim = dim;
  m.values.resize(count * dim);
  for (float& v : m.values) v = rng.uniform_f(-1.0f, 1.0f);
  return m;
}

NeuronMasks NeuronMasks::identity(MaskKind kind, std::size_t count,
                                  std::size_t dim) {
  NeuronMasks m;
  m.kind = kind;
  m.count = count;
  m.dim = dim;
  m.values.assign(count * dim, 1.0f);
  return m;
}

void NeuronMasks::require_finite() const {
  for (float v : values)
    if (!std::isfinite(v)) throw InvariantError("non-finite mask value");
}

std::vector<float> apply_input_mask(std::span<const float> patch,
                                    std::span<const float> mask) {
  if (patch.size() != mask.size())
    throw DimensionError("input mask length != patch length");
  std::vector<float> out(patch.size());
  for (std::size_t i = 0; i < patch.size(); ++i) out[i] = patch[i] * mask[i];
  return out;
}

std::vector<float> apply_channel_mask(std::span<const float> patch,
                                      std::span<const float> mask) {
  const std::size_t c = mask.size();
  if (c == 0 || patch.size() % c != 0)
    throw DimensionError("patch length not divisible by channel mask length");
  std::vector<float> out(patch.size());
  const std::size_t positions = patch.size() / c;
  for (std::size_t s = 0; s < positions; ++s)
    for (std::size_t j = 0; j < c; ++j)
      out[s * c + j] = patch[s * c + j] * mask[j];
  return out;
}

std::vector<float> hebb_delta(std::span<const float> p,
                              std::span<const float> yhat) {
  if (p.size() != yhat.size()) throw DimensionError("hebb_delta length mismatch");
  std::vector<float> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = yhat[i] * p[i];
  return out;
}

std::vector<float> oja_delta(std::span<const float> p,
                             std::span<const float> yhat,
                             std::span<const float> m) {
  if (p.size() != yhat.size() || p.size() != m.size())
    throw DimensionError("oja_delta length mismatch");
  std::vector<float> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    out[i] = yhat[i] * (p[i] - yhat[i] * m[i]);
  return out;
}

std::vector<float> modified_input(
    std::span<const float> p,
    const std::vector<std::vector<float>>& masked_outputs,
    const MaskRuleConfig& cfg, std::size_t i) {
  std::vector<float> out(p.begin(), p.end());
  const std::size_t upto =
      cfg.input_mod == InputMod::all_masks ? masked_outputs.size()
                                           : std::min(i, masked_outputs.size());
  for (std::size_t k = 0; k < upto; ++k) {
    const auto& term = masked_outputs[k];
    if (term.size() != p.size())
      throw DimensionError("masked output length mismatch in modified_input");
    for (std::size_t j = 0; j < p.size(); ++j) out[j] -= cfg.gamma * term[j];
  }
  return out;
}

MaskUpdateAccumulator::MaskUpdateAccumulator(const NeuronMasks& masks,
                                             const MaskRuleConfig& cfg)
    : snapshot_(masks), cfg_(cfg) {
  acc_.assign(masks.count * masks.dim, 0.0f);
  touched_.assign(masks.count, 0);
  if (cfg.input_mod == InputMod::all_masks) {
    mask_sq_.assign(masks.dim, 0.0f);
    for (std::size_t k = 0; k < masks.count; ++k) {
      const float* m = masks.mask(k);
      for (std::size_t j = 0; j < masks.dim; ++j) mask_sq_[j] += m[j] * m[j];
    }
  } else {
    // prefix_sq_[i] = sum over k < i of m_k o m_k (row-major flat order)
    prefix_sq_.assign(masks.count * masks.dim, 0.0f);
    for (std::size_t i = 1; i < masks.count; ++i) {
      const float* prev = prefix_sq_.data() + (i - 1) * masks.dim;
      const float* m = masks.mask(i - 1);
      float* cur = prefix_sq_.data() + i * masks.dim;
      for (std::size_t j = 0; j < masks.dim; ++j)
        cur[j] = prev[j] + m[j] * m[j];
    }
  }
}

void MaskUpdateAccumulator::accumulate(std::span<const float> patch,
                                       std::size_t neuron) {
  const std::size_t dim = snapshot_.dim;
  if (patch.size() % dim != 0)
    throw DimensionError("patch length not a multiple of mask dim");
  const std::size_t positions = patch.size() / dim;
  spatial_positions_ = positions;
  ++gated_;
  touched_[neuron] = 1;

  const float* m = snapshot_.mask(neuron);
  const float* sq = cfg_.input_mod == InputMod::all_masks
                        ? mask_sq_.data()
                        : prefix_sq_.data() + neuron * dim;
  float* acc = acc_.data() + neuron * dim;
  const float gamma = cfg_.gamma;

  for (std::size_t s = 0; s < positions; ++s) {
    const float* pv = patch.data() + s * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      const float yhat = pv[j] * m[j];
      const float modified = pv[j] - gamma * pv[j] * sq[j];
      if (cfg_.base_rule == BaseRule::hebb) {
        acc[j] += yhat * modified;
      } else {
        acc[j] += yhat * (modified - yhat * m[j]);
      }
    }
  }
}

MaskUpdateStats MaskUpdateAccumulator::apply(NeuronMasks& masks, float lr) {
  MaskUpdateStats stats;
  stats.gated = gated_;
  if (gated_ == 0 || lr == 0.0f) return stats;

  const std::size_t denom_patches =
      cfg_.avg == MaskAvg::all_patches ? total_patches_ : gated_;
  const double denom =
      static_cast<double>(denom_patches) * static_cast<double>(spatial_positions_);
  if (denom <= 0.0) return stats;
  const float scale = static_cast<float>(static_cast<double>(lr) / denom);

  double delta_sq = 0.0;
  for (std::size_t i = 0; i < masks.count; ++i) {
    if (!touched_[i]) continue;
    float* m = masks.mask(i);
    const float* acc = acc_.data() + i * masks.dim;
    for (std::size_t j = 0; j < masks.dim; ++j) {
      const float d = scale * acc[j];
      m[j] += d;
      delta_sq += static_cast<double>(d) * d;
    }
  }
  stats.delta_norm = std::sqrt(delta_sq);
  masks.require_finite();
  return stats;
}

MaskUpdateStats mask_batch_update(NeuronMasks& masks, const PatchGrid& patches,
                                  std::span<const std::int32_t> bmu_gate,
                                  const MaskRuleConfig& cfg, float lr) {
  if (bmu_gate.size() != patches.count())
    throw DimensionError("bmu gate length != patch count");
  MaskUpdateAccumulator acc(masks, cfg);
  acc.note_patches(patches.count());
  for (std::size_t p = 0; p < patches.count(); ++p) {
    const std::int32_t b = bmu_gate[p];
    if (b < 0) continue;
    acc.accumulate({patches.patch(p), patches.patch_len},
                   static_cast<std::size_t>(b));
  }
  return acc.apply(masks, lr);
}

}  // namespace csnn
