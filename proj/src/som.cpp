#include "csnn/som.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "csnn/linalg.hpp"

namespace csnn {

SomMap SomMap::init(std::size_t grid_h, std::size_t grid_w, std::size_t dim,
                    Rng& rng) {
  SomMap map;
  map.grid_h = grid_h;
  map.grid_w = grid_w;
  map.dim = dim;
  map.weights.resize(grid_h * grid_w * dim);
  for (float& v : map.weights) v = rng.uniform_f(-1.0f, 1.0f);
  for (std::size_t i = 0; i < map.neuron_count(); ++i)
    l2_normalize({map.weight(i), dim});
  return map;
}

void SomMap::require_unit_norm(double tol) const {
  for (std::size_t i = 0; i < neuron_count(); ++i) {
    const double norm = l2_norm({weight(i), dim});
    if (std::abs(norm - 1.0) > tol)
      throw InvariantError("SOM weight " + std::to_string(i) +
                           " norm drifted to " + std::to_string(norm));
  }
}

Activations som_forward(const PatchGrid& patches,
                        std::span<const float> unit_vectors,
                        std::size_t neurons, std::size_t dim) {
  if (patches.patch_len != dim)
    throw DimensionError("patch length " + std::to_string(patches.patch_len) +
                         " != som dim " + std::to_string(dim));
  if (unit_vectors.size() != neurons * dim)
    throw DimensionError("unit vector block size mismatch");

  Activations acts;
  acts.patch_count = patches.count();
  acts.neurons = neurons;
  acts.values.resize(acts.patch_count * neurons);
  matmul_nt(patches.patches.data(), unit_vectors.data(), acts.values.data(),
            acts.patch_count, neurons, dim);
  return acts;
}

std::size_t bmu(std::span<const float> activation_slice) {
  if (activation_slice.empty())
    throw DimensionError("bmu over empty activation slice");
  std::size_t best = 0;
  float best_v = activation_slice[0];
  for (std::size_t i = 1; i < activation_slice.size(); ++i) {
    if (activation_slice[i] > best_v) {  // ties keep the lowest index
      best_v = activation_slice[i];
      best = i;
    }
  }
  if (!std::isfinite(best_v)) throw InvariantError("non-finite activation in bmu");
  return best;
}

BmuMap bmu_map(const Activations& acts) {
  BmuMap out;
  out.indices.resize(acts.patch_count);
  out.scores.resize(acts.patch_count);
  for (std::size_t p = 0; p < acts.patch_count; ++p) {
    const std::size_t b = bmu({acts.row(p), acts.neurons});
    out.indices[p] = static_cast<std::uint32_t>(b);
    out.scores[p] = acts.row(p)[b];
  }
  return out;
}

float neighborhood(const SomMap& map, std::size_t bmu_index, std::size_t i,
                   float delta) {
  if (!(delta > 0.0f)) throw InvariantError("neighborhood delta must be > 0");
  const auto [br, bc] = map.coord(bmu_index);
  const auto [ir, ic] = map.coord(i);
  const double dr = static_cast<double>(br) - static_cast<double>(ir);
  const double dc = static_cast<double>(bc) - static_cast<double>(ic);
  const double d2 = dr * dr + dc * dc;
  return static_cast<float>(
      std::exp(-d2 / (2.0 * static_cast<double>(delta) * delta)));
}

std::vector<float> neighborhood_table(const SomMap& map, float delta) {
  const std::size_t n = map.neuron_count();
  std::vector<float> table(n * n);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < n; ++i)
      table[b * n + i] = neighborhood(map, b, i, delta);
  return table;
}

UpdateStats competitive_update(SomMap& map, const PatchGrid& patches,
                               const BmuMap& bmus,
                               std::span<const std::uint8_t> update_gate,
                               const LearningSchedule& sched,
                               const std::vector<float>& nbr_table) {
  if (bmus.count() != patches.count())
    throw DimensionError("bmu map does not cover the patch grid");
  if (update_gate.size() != patches.count())
    throw DimensionError("update gate length != patch count");
  const std::size_t n = map.neuron_count();
  const std::size_t dim = map.dim;
  if (patches.patch_len != dim)
    throw DimensionError("patch length != som dim in competitive_update");

  UpdateStats stats;
  if (sched.som_rate() == 0.0f) return stats;

  // Gather gated patches and their neighborhood coefficient rows, then a
  // single H^T * P GEMM gives every neuron's accumulated pull. One GEMM per
  // batch keeps results independent of the worker count.
  std::vector<float> gated;       // G x dim
  std::vector<float> coeffs;      // G x n  (row = nbr_table[bmu])
  for (std::size_t p = 0; p < patches.count(); ++p) {
    if (!update_gate[p]) continue;
    gated.insert(gated.end(), patches.patch(p), patches.patch(p) + dim);
    const float* row = nbr_table.data() + bmus.indices[p] * n;
    coeffs.insert(coeffs.end(), row, row + n);
  }
  const std::size_t g = gated.size() / (dim == 0 ? 1 : dim);
  stats.gated_patches = g;
  if (g == 0) return stats;

  std::vector<float> delta(n * dim, 0.0f);
  matmul_tn_acc(coeffs.data(), gated.data(), delta.data(), n, dim, g);

  const float scale = sched.som_rate() / static_cast<float>(g);
  double applied_sq = 0.0;  // ||w_new - w_old||^2, the Fig-A.2 style signal
  for (std::size_t i = 0; i < n; ++i) {
    float* d = delta.data() + i * dim;
    bool all_zero = true;
    for (std::size_t j = 0; j < dim; ++j)
      if (d[j] != 0.0f) {
        all_zero = false;
        break;
      }
    if (all_zero) continue;  // untouched, norm preserved

    float* w = map.weight(i);
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      d[j] = w[j] + scale * d[j];
      norm_sq += static_cast<double>(d[j]) * d[j];
    }
    if (norm_sq <= 1e-24) {
      // w + dw collapsed; keep the previous weight and count the event.
      ++stats.degenerate_renorms;
      continue;
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
    for (std::size_t j = 0; j < dim; ++j) {
      const float w_new = d[j] * inv;
      const double moved = static_cast<double>(w_new) - w[j];
      applied_sq += moved * moved;
      w[j] = w_new;
    }
  }
  stats.delta_norm = std::sqrt(applied_sq);
  return stats;
}

}  // namespace csnn
