#include "csnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace csnn {

NetworkSpec NetworkSpec::s_csnn() {
  NetworkSpec spec;
  spec.preset = "s-csnn";
  LayerSpec l1;
  l1.heads = 1;
  l1.grid_h = l1.grid_w = 10;
  l1.kernel = {3, 3};
  l1.stride = {2, 2};
  l1.padding = Padding::same;
  l1.mask_kind = MaskKind::input;
  l1.rule = MaskRuleConfig::oja_prefix();
  l1.delta = 1.0f;
  LayerSpec l2 = l1;
  l2.grid_h = l2.grid_w = 16;
  l2.stride = {1, 1};
  l2.mask_kind = MaskKind::channel;
  l2.delta = 1.25f;
  spec.layers = {l1, l2};
  return spec;
}

NetworkSpec NetworkSpec::d_csnn() {
  NetworkSpec spec;
  spec.preset = "d-csnn";
  const std::size_t grids[3] = {12, 14, 16};
  const float deltas[3] = {1.0f, 1.5f, 1.5f};
  for (int i = 0; i < 3; ++i) {
    LayerSpec l;
    l.heads = 3;
    l.grid_h = l.grid_w = grids[i];
    l.kernel = {3, 3};
    l.stride = {1, 1};
    l.padding = Padding::same;
    l.mask_kind = i == 0 ? MaskKind::input : MaskKind::channel;
    l.rule = MaskRuleConfig::hebb_all();
    l.delta = deltas[i];
    spec.layers.push_back(l);
  }
  return spec;
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  std::uint64_t prev_end = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string at = "layer " + std::to_string(i);
    if (l.heads < 1) throw ConfigError(at + ": heads must be >= 1");
    if (l.grid_h == 0 || l.grid_w == 0)
      throw ConfigError(at + ": grid extents must be positive");
    if (l.rule.gamma < 0.0f || l.rule.gamma > 1.0f)
      throw ConfigError(at + ": gamma must be in [0,1]");
    if (!(l.delta > 0.0f)) throw ConfigError(at + ": delta must be > 0");
    if (l.train_end < l.train_begin)
      throw ConfigError(at + ": train interval end before begin");
    if (i > 0 && l.train_begin < prev_end)
      throw ConfigError(at + ": train interval overlaps or precedes layer " +
                        std::to_string(i - 1) +
                        " (bottom-up intervals must be ordered and disjoint)");
    prev_end = l.train_end;
  }
}

BatchNormState BatchNormState::init(std::size_t features) {
  BatchNormState s;
  s.running_mean.assign(features, 0.0f);
  s.running_var.assign(features, 1.0f);
  return s;
}

Tensor batch_norm_notrain(const Tensor& x, BatchNormState& state,
                          BnMode mode) {
  const std::size_t rank = x.rank();
  if (rank != 2 && rank != 4)
    throw DimensionError("batch_norm_notrain expects rank-2 or rank-4 input");
  const std::size_t features = x.extent(rank - 1);
  if (state.running_mean.size() != features)
    throw DimensionError("batch norm state feature count mismatch");
  const std::size_t rows = x.size() / features;

  Tensor out(x.shape());
  const float* in = x.data();
  float* o = out.data();

  if (mode == BnMode::train) {
    if (rows < 2)
      throw DimensionError(
          "batch_norm_notrain: train mode needs >= 2 elements per feature");
    std::vector<double> mean(features, 0.0), var(features, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < features; ++f)
        mean[f] += in[r * features + f];
    for (std::size_t f = 0; f < features; ++f) mean[f] /= rows;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < features; ++f) {
        const double d = in[r * features + f] - mean[f];
        var[f] += d * d;
      }
    for (std::size_t f = 0; f < features; ++f) var[f] /= rows;

    std::vector<float> inv_std(features);
    for (std::size_t f = 0; f < features; ++f)
      inv_std[f] = static_cast<float>(
          1.0 / std::sqrt(var[f] + static_cast<double>(state.eps)));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < features; ++f)
        o[r * features + f] =
            (in[r * features + f] - static_cast<float>(mean[f])) * inv_std[f];

    const float mom = state.momentum;
    for (std::size_t f = 0; f < features; ++f) {
      state.running_mean[f] = mom * state.running_mean[f] +
                              (1.0f - mom) * static_cast<float>(mean[f]);
      state.running_var[f] = mom * state.running_var[f] +
                             (1.0f - mom) * static_cast<float>(var[f]);
    }
  } else {
    std::vector<float> inv_std(features);
    for (std::size_t f = 0; f < features; ++f)
      inv_std[f] = static_cast<float>(
          1.0 / std::sqrt(static_cast<double>(state.running_var[f]) +
                          static_cast<double>(state.eps)));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < features; ++f)
        o[r * features + f] =
            (in[r * features + f] - state.running_mean[f]) * inv_std[f];
  }
  return out;
}

Tensor max_pool_2x2(const Tensor& x) {
  if (x.rank() != 4)
    throw DimensionError("max_pool_2x2 expects a rank-4 (n,h,w,c) tensor");
  const std::size_t n = x.extent(0), h = x.extent(1), w = x.extent(2),
                    c = x.extent(3);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor out({n, oh, ow, c});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t q = 0; q < ow; ++q)
        for (std::size_t ch = 0; ch < c; ++ch) {
          float best = -std::numeric_limits<float>::infinity();
          for (std::size_t dr = 0; dr < 2; ++dr) {
            const std::size_t rr = r * 2 + dr;
            if (rr >= h) continue;
            for (std::size_t dq = 0; dq < 2; ++dq) {
              const std::size_t qq = q * 2 + dq;
              if (qq >= w) continue;
              best = std::max(best, x.at(x.idx4(s, rr, qq, ch)));
            }
          }
          out.at(out.idx4(s, r, q, ch)) = best;
        }
  return out;
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "random_masks") return Ablation::random_masks;
  if (s == "noise_masks") return Ablation::noise_masks;
  if (s == "no_masks") return Ablation::no_masks;
  if (s == "random_som") return Ablation::random_som;
  throw ConfigError("unknown ablation mode '" + s + "'");
}

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::random_masks: return "random_masks";
    case Ablation::noise_masks: return "noise_masks";
    case Ablation::no_masks: return "no_masks";
    case Ablation::random_som: return "random_som";
  }
  return "?";
}

GlobalGate global_bmu_gate(const std::vector<BmuMap>& head_bmus) {
  if (head_bmus.empty()) throw DimensionError("global_bmu_gate: no heads");
  const std::size_t patches = head_bmus[0].count();
  for (const auto& b : head_bmus)
    if (b.count() != patches)
      throw DimensionError("heads scored different patch counts");

  GlobalGate gate;
  gate.winning_head.resize(patches);
  gate.head_gates.assign(head_bmus.size(),
                         std::vector<std::uint8_t>(patches, 0));
  for (std::size_t p = 0; p < patches; ++p) {
    std::size_t best_head = 0;
    float best = head_bmus[0].scores[p];
    for (std::size_t h = 1; h < head_bmus.size(); ++h) {
      if (head_bmus[h].scores[p] > best) {  // tie keeps the lowest head
        best = head_bmus[h].scores[p];
        best_head = h;
      }
    }
    gate.winning_head[p] = static_cast<std::uint32_t>(best_head);
    gate.head_gates[best_head][p] = 1;
  }
  return gate;
}

std::vector<float> build_unit_vectors(const SomMap& map,
                                      const NeuronMasks* masks) {
  const std::size_t n = map.neuron_count();
  const std::size_t dim = map.dim;
  std::vector<float> u(map.weights);
  if (!masks) return u;
  if (masks->kind == MaskKind::input) {
    if (masks->dim != dim) throw DimensionError("input mask dim != som dim");
    for (std::size_t i = 0; i < n; ++i) {
      const float* m = masks->mask(i);
      float* ui = u.data() + i * dim;
      for (std::size_t j = 0; j < dim; ++j) ui[j] *= m[j];
    }
  } else {
    const std::size_t c = masks->dim;
    if (c == 0 || dim % c != 0)
      throw DimensionError("channel mask dim does not divide som dim");
    const std::size_t positions = dim / c;
    for (std::size_t i = 0; i < n; ++i) {
      const float* m = masks->mask(i);
      float* ui = u.data() + i * dim;
      for (std::size_t s = 0; s < positions; ++s)
        for (std::size_t j = 0; j < c; ++j) ui[s * c + j] *= m[j];
    }
  }
  return u;
}

Network::LayerForward csnn_layer_forward(const CsnnLayer& layer,
                                         const Tensor& x,
                                         const std::vector<NeuronMasks>* masks,
                                         bool need_training_extras) {
  const LayerSpec& ls = layer.spec;
  const std::size_t batch = x.extent(0);
  const std::size_t h = x.extent(1), w = x.extent(2), c = x.extent(3);
  if (c != layer.in_channels)
    throw DimensionError("layer expects " + std::to_string(layer.in_channels) +
                         " input channels, got " + std::to_string(c));
  if (masks && masks->size() != ls.heads)
    throw DimensionError("mask set count != head count");

  const std::size_t oh = conv_extent(h, ls.kernel.h, ls.stride.h, ls.padding);
  const std::size_t ow = conv_extent(w, ls.kernel.w, ls.stride.w, ls.padding);
  const std::size_t per_head = ls.neurons_per_head();
  const std::size_t features = ls.features();

  std::vector<std::vector<float>> units(ls.heads);
  for (std::size_t head = 0; head < ls.heads; ++head)
    units[head] = build_unit_vectors(layer.maps[head],
                                     masks ? &(*masks)[head] : nullptr);

  Network::LayerForward out;
  out.output = Tensor({batch, oh, ow, features});
  if (need_training_extras) {
    out.patches.resize(batch);
    out.bmus.assign(batch, std::vector<BmuMap>(ls.heads));
  }

  for (std::size_t s = 0; s < batch; ++s) {
    PatchGrid grid = extract_patches(x.sample(s), h, w, c, ls.kernel,
                                     ls.stride, ls.padding);
    float* dst = out.output.data() + s * oh * ow * features;
    for (std::size_t head = 0; head < ls.heads; ++head) {
      Activations acts =
          som_forward(grid, units[head], per_head, layer.patch_len());
      for (std::size_t p = 0; p < acts.patch_count; ++p)
        std::memcpy(dst + p * features + head * per_head, acts.row(p),
                    per_head * sizeof(float));
      if (need_training_extras) out.bmus[s][head] = bmu_map(acts);
    }
    if (need_training_extras) out.patches[s] = std::move(grid);
  }
  return out;
}

Network Network::init(const NetworkSpec& spec, std::size_t in_h,
                      std::size_t in_w, std::size_t in_c,
                      std::uint64_t master_seed) {
  spec.validate();
  Network net;
  net.spec_ = spec;
  net.in_h_ = in_h;
  net.in_w_ = in_w;
  net.in_c_ = in_c;
  net.master_seed_ = master_seed;

  std::size_t c = in_c;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& ls = spec.layers[li];
    CsnnLayer layer;
    layer.spec = ls;
    layer.in_channels = c;
    const std::size_t dim = layer.patch_len();
    for (std::size_t head = 0; head < ls.heads; ++head) {
      Rng wrng = make_rng(master_seed, SeedStream::som_init, li * 64 + head);
      layer.maps.push_back(SomMap::init(ls.grid_h, ls.grid_w, dim, wrng));
      Rng mrng = make_rng(master_seed, SeedStream::mask_init, li * 64 + head);
      layer.masks.push_back(NeuronMasks::init(
          ls.mask_kind, ls.grid_h * ls.grid_w, layer.mask_dim(), mrng));
    }
    layer.bn = BatchNormState::init(ls.features());
    net.layers_.push_back(std::move(layer));
    c = ls.features();
  }
  return net;
}

std::vector<std::size_t> Network::output_shape(std::size_t l) const {
  std::size_t h = in_h_, w = in_w_;
  for (std::size_t i = 0; i <= l; ++i) {
    const LayerSpec& ls = spec_.layers[i];
    h = conv_extent(h, ls.kernel.h, ls.stride.h, ls.padding);
    w = conv_extent(w, ls.kernel.w, ls.stride.w, ls.padding);
    if (ls.max_pool) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
  }
  return {h, w, spec_.layers[l].features()};
}

std::size_t Network::representation_length() const {
  const auto s = output_shape(layers_.size() - 1);
  return s[0] * s[1] * s[2];
}

namespace {

std::vector<NeuronMasks> fresh_masks(const CsnnLayer& layer, Rng& rng) {
  std::vector<NeuronMasks> out;
  for (std::size_t head = 0; head < layer.spec.heads; ++head)
    out.push_back(NeuronMasks::init(layer.spec.mask_kind,
                                    layer.spec.neurons_per_head(),
                                    layer.mask_dim(), rng));
  return out;
}

}  // namespace

StepDiagnostics Network::train_step(const Tensor& batch, Ablation ablation,
                                    Rng& ablation_rng) {
  if (batch.rank() != 4)
    throw DimensionError("train_step expects rank-4 batch");
  StepDiagnostics diag;
  diag.step = step_;

  int active = -1;
  for (std::size_t l = 0; l < layers_.size(); ++l)
    if (layers_[l].spec.trains_at(step_)) {
      active = static_cast<int>(l);
      break;
    }
  diag.active_layer = active;
  if (active < 0) {
    ++step_;
    return diag;  // outside every interval: bit-identical state
  }
  const std::size_t active_l = static_cast<std::size_t>(active);

  // Noise masks are resampled per step and shared by forward + updates.
  std::vector<std::vector<NeuronMasks>> noise;
  if (ablation == Ablation::noise_masks) {
    noise.resize(active_l + 1);
    for (std::size_t l = 0; l <= active_l; ++l)
      noise[l] = fresh_masks(layers_[l], ablation_rng);
  }

  auto masks_for = [&](std::size_t l) -> const std::vector<NeuronMasks>* {
    switch (ablation) {
      case Ablation::no_masks: return nullptr;
      case Ablation::noise_masks: return &noise[l];
      default: return &layers_[l].masks;
    }
  };

  Tensor x = batch;
  for (std::size_t l = 0; l < active_l; ++l) {
    LayerForward fwd = csnn_layer_forward(layers_[l], x, masks_for(l), false);
    Tensor y = layers_[l].spec.batch_norm
                   ? batch_norm_notrain(fwd.output, layers_[l].bn,
                                        BnMode::train)
                   : std::move(fwd.output);
    x = layers_[l].spec.max_pool ? max_pool_2x2(y) : std::move(y);
  }

  CsnnLayer& layer = layers_[active_l];
  const LayerSpec& ls = layer.spec;
  LayerForward fwd = csnn_layer_forward(layer, x, masks_for(active_l), true);

  // Stack the batch's patches and gates per head so each head applies one
  // accumulate-then-apply update over the whole batch.
  const std::size_t samples = fwd.patches.size();
  PatchGrid stacked;
  stacked.patch_len = layer.patch_len();
  stacked.cols = 1;
  std::vector<BmuMap> head_bmus(ls.heads);
  std::vector<std::vector<std::uint8_t>> head_gates(ls.heads);
  std::vector<std::vector<std::int32_t>> mask_gates(ls.heads);

  for (std::size_t s = 0; s < samples; ++s) {
    const PatchGrid& grid = fwd.patches[s];
    stacked.rows += grid.count();
    stacked.patches.insert(stacked.patches.end(), grid.patches.begin(),
                           grid.patches.end());
    GlobalGate gate = global_bmu_gate(fwd.bmus[s]);
    for (std::size_t head = 0; head < ls.heads; ++head) {
      const BmuMap& b = fwd.bmus[s][head];
      auto& sb = head_bmus[head];
      sb.indices.insert(sb.indices.end(), b.indices.begin(), b.indices.end());
      sb.scores.insert(sb.scores.end(), b.scores.begin(), b.scores.end());
      auto& sg = head_gates[head];
      sg.insert(sg.end(), gate.head_gates[head].begin(),
                gate.head_gates[head].end());
      auto& mg = mask_gates[head];
      for (std::size_t p = 0; p < grid.count(); ++p)
        mg.push_back(gate.head_gates[head][p]
                         ? static_cast<std::int32_t>(b.indices[p])
                         : -1);
    }
  }

  LearningSchedule sched;
  sched.som_lr = ls.som_lr;
  sched.mask_lr = ls.mask_lr;
  sched.delta = ls.delta;
  sched.step = step_;

  const bool update_som = ablation != Ablation::random_som;
  const bool update_masks =
      ablation == Ablation::none || ablation == Ablation::random_som;

  for (std::size_t head = 0; head < ls.heads; ++head) {
    if (update_som) {
      const std::vector<float> table =
          neighborhood_table(layer.maps[head], ls.delta);
      UpdateStats st =
          competitive_update(layer.maps[head], stacked, head_bmus[head],
                             head_gates[head], sched, table);
      diag.som_delta_norm += st.delta_norm;
    }
    if (update_masks && ls.mask_lr != 0.0f) {
      MaskUpdateStats st = mask_batch_update(
          layer.masks[head], stacked, mask_gates[head], ls.rule, ls.mask_lr);
      diag.mask_delta_norm += st.delta_norm;
    }
  }

  // Keep the active layer's running stats fed so eval-mode encoding works
  // for the top layer too.
  if (ls.batch_norm)
    batch_norm_notrain(fwd.output, layer.bn, BnMode::train);

  ++step_;
  return diag;
}

Tensor Network::encode(const Tensor& batch, Ablation ablation,
                       std::uint64_t seed, std::uint64_t batch_index,
                       UtilizationSink* util) const {
  if (batch.rank() != 4) throw DimensionError("encode expects rank-4 batch");
  const std::size_t samples = batch.extent(0);

  // random_masks/random_som are frozen (same seed every batch); noise masks
  // fold the batch index in so each batch resamples.
  Rng rng = ablation == Ablation::noise_masks
                ? make_rng(seed, SeedStream::ablation, batch_index + 1)
                : make_rng(seed, SeedStream::ablation);
  std::vector<std::vector<NeuronMasks>> override_masks;
  std::vector<std::vector<SomMap>> override_maps;
  bool maskless = false;
  switch (ablation) {
    case Ablation::none:
      break;
    case Ablation::no_masks:
      maskless = true;
      break;
    case Ablation::random_masks:
    case Ablation::noise_masks:
      override_masks.resize(layers_.size());
      for (std::size_t l = 0; l < layers_.size(); ++l)
        override_masks[l] = fresh_masks(layers_[l], rng);
      break;
    case Ablation::random_som:
      override_maps.resize(layers_.size());
      for (std::size_t l = 0; l < layers_.size(); ++l)
        for (std::size_t head = 0; head < layers_[l].spec.heads; ++head)
          override_maps[l].push_back(
              SomMap::init(layers_[l].spec.grid_h, layers_[l].spec.grid_w,
                           layers_[l].patch_len(), rng));
      break;
  }

  if (util && util->per_layer.size() != layers_.size())
    util->per_layer.assign(layers_.size(), {});

  Tensor x = batch;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    CsnnLayer layer = layers_[l];  // cheap relative to the forward work
    if (!override_maps.empty()) layer.maps = override_maps[l];

    const std::vector<NeuronMasks>* masks =
        maskless ? nullptr
                 : (!override_masks.empty() ? &override_masks[l]
                                            : &layer.masks);

    const bool extras = util != nullptr;
    LayerForward fwd = csnn_layer_forward(layer, x, masks, extras);

    if (util) {
      const std::size_t total = layer.spec.features();
      std::vector<std::uint8_t> used(total, 0);
      for (std::size_t s = 0; s < fwd.bmus.size(); ++s) {
        GlobalGate gate = global_bmu_gate(fwd.bmus[s]);
        for (std::size_t p = 0; p < gate.winning_head.size(); ++p) {
          const std::size_t head = gate.winning_head[p];
          const std::size_t neuron = fwd.bmus[s][head].indices[p];
          used[head * layer.spec.neurons_per_head() + neuron] = 1;
        }
      }
      std::size_t used_count = 0;
      for (auto u : used) used_count += u;
      util->per_layer[l].push_back(static_cast<double>(used_count) /
                                   static_cast<double>(total));
    }

    BatchNormState bn_copy = layer.bn;  // eval mode, no mutation escapes
    Tensor y = layer.spec.batch_norm
                   ? batch_norm_notrain(fwd.output, bn_copy, BnMode::eval)
                   : std::move(fwd.output);
    x = layer.spec.max_pool ? max_pool_2x2(y) : std::move(y);
  }

  const std::size_t rep = x.size() / samples;
  return Tensor::from_data(
      {samples, rep}, std::vector<float>(x.values().begin(), x.values().end()));
}

}  // namespace csnn
