#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "csnn/rng.hpp"
#include "csnn/tensor.hpp"

namespace csnn {

/// One 2-D grid of unit-norm weight vectors (one "head" of a layer).
struct SomMap {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t dim = 0;
  std::vector<float> weights;  // (grid_h*grid_w) x dim, each row unit norm

  std::size_t neuron_count() const { return grid_h * grid_w; }
  float* weight(std::size_t i) { return weights.data() + i * dim; }
  const float* weight(std::size_t i) const { return weights.data() + i * dim; }
  std::pair<std::size_t, std::size_t> coord(std::size_t i) const {
    return {i / grid_w, i % grid_w};
  }

  // U[-1,1] init per component followed by L2 normalization.
  static SomMap init(std::size_t grid_h, std::size_t grid_w, std::size_t dim,
                     Rng& rng);

  void require_unit_norm(double tol = 1e-5) const;
};

struct LearningSchedule {
  float som_lr = 0.1f;
  float mask_lr = 0.005f;
  float delta = 1.0f;   // Gaussian neighborhood radius
  std::uint64_t step = 0;  // carried for future decay schedules

  float som_rate() const { return som_lr; }
};

/// Per-patch winners over one map: flat neuron index plus the winning score.
struct BmuMap {
  std::vector<std::uint32_t> indices;
  std::vector<float> scores;

  std::size_t count() const { return indices.size(); }
};

/// Masked or raw activations of one map for a set of patches:
/// y[p,i] = dot(q_p, w_i) with q the (optionally masked) patch.
/// Stored row-major, count x neurons.
struct Activations {
  std::size_t patch_count = 0;
  std::size_t neurons = 0;
  std::vector<float> values;

  const float* row(std::size_t p) const { return values.data() + p * neurons; }
};

/// Forward pass over a patch grid. `unit_vectors` are the per-neuron dot
/// vectors: the raw weights, or weights premultiplied elementwise with the
/// neuron's mask (so the masked convolution is a single GEMM).
Activations som_forward(const PatchGrid& patches,
                        std::span<const float> unit_vectors,
                        std::size_t neurons, std::size_t dim);

/// Argmax of one activation slice; ties break to the lowest flat index.
std::size_t bmu(std::span<const float> activation_slice);

/// BMU per patch over full activations.
BmuMap bmu_map(const Activations& acts);

/// Gaussian neighborhood coefficient between grid positions of `bmu_index`
/// and `i`: exp(-d^2 / (2 delta^2)), d the Euclidean grid distance.
float neighborhood(const SomMap& map, std::size_t bmu_index, std::size_t i,
                   float delta);

/// Precomputed neighborhood table: row b holds h(b -> i) for all i.
std::vector<float> neighborhood_table(const SomMap& map, float delta);

struct UpdateStats {
  double delta_norm = 0.0;        // Frobenius norm of the applied update
  std::size_t gated_patches = 0;
  std::size_t degenerate_renorms = 0;  // ||w+dw|| ~ 0 fallbacks
};

/// Competitive batch update, Eqs of the averaged SOM rule: for every neuron
/// i, dw_i = (a/G) * sum over gated patches of h[c_p][i] * p_raw, where G is
/// the number of gated patches, then w_i <- normalize(w_i + dw_i). Neurons
/// with an exactly zero accumulated delta stay untouched. Patches are always
/// the raw (unmasked) ones; only BMU selection saw masks.
UpdateStats competitive_update(SomMap& map, const PatchGrid& patches,
                               const BmuMap& bmus,
                               std::span<const std::uint8_t> update_gate,
                               const LearningSchedule& sched,
                               const std::vector<float>& nbr_table);

}  // namespace csnn
