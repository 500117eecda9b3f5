#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "csnn/masks.hpp"
#include "csnn/som.hpp"
#include "csnn/tensor.hpp"

namespace csnn {

struct LayerSpec {
  std::size_t heads = 1;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  Kernel2d kernel{3, 3};
  Stride2d stride{1, 1};
  Padding padding = Padding::same;
  MaskKind mask_kind = MaskKind::input;
  MaskRuleConfig rule = MaskRuleConfig::hebb_all();
  float delta = 1.0f;
  float som_lr = 0.1f;
  float mask_lr = 0.005f;
  std::uint64_t train_begin = 0;
  std::uint64_t train_end = 0;  // half-open [begin, end)
  bool batch_norm = true;
  bool max_pool = true;

  std::size_t neurons_per_head() const { return grid_h * grid_w; }
  std::size_t features() const { return heads * neurons_per_head(); }
  bool trains_at(std::uint64_t step) const {
    return step >= train_begin && step < train_end;
  }
};

struct NetworkSpec {
  std::string preset = "custom";
  std::vector<LayerSpec> layers;

  // Section-3.4.3 CIFAR geometries. Training intervals must still be set.
  static NetworkSpec s_csnn();
  static NetworkSpec d_csnn();

  void validate() const;
};

struct BatchNormState {
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.9f;
  float eps = 1e-5f;

  static BatchNormState init(std::size_t features);
};

enum class BnMode { train, eval };

/// Parameter-free batch normalization. Rank-4 input normalizes each channel
/// over (samples x height x width), rank-2 each feature over samples; train
/// mode uses batch statistics and EMA-updates the running stats, eval mode
/// standardizes with the running stats. Train mode requires at least two
/// elements per feature.
Tensor batch_norm_notrain(const Tensor& x, BatchNormState& state, BnMode mode);

/// 2x2 max pooling, stride 2, per channel. Odd extents take the max over
/// the available window (pad with -inf semantics).
Tensor max_pool_2x2(const Tensor& x);

enum class Ablation : std::uint8_t {
  none,
  random_masks,  // fresh U[-1,1] masks, frozen
  noise_masks,   // fresh U[-1,1] masks every batch
  no_masks,      // identity masks
  random_som,    // SOM weights stay at initialization
};

Ablation ablation_from_string(const std::string& s);
const char* to_string(Ablation a);

struct CsnnLayer {
  LayerSpec spec;
  std::size_t in_channels = 0;
  std::vector<SomMap> maps;        // one per head
  std::vector<NeuronMasks> masks;  // one per head
  BatchNormState bn;

  std::size_t patch_len() const {
    return spec.kernel.h * spec.kernel.w * in_channels;
  }
  std::size_t mask_dim() const {
    return spec.mask_kind == MaskKind::input ? patch_len() : in_channels;
  }
};

/// Winning head per patch plus the per-head gates derived from it.
struct GlobalGate {
  std::vector<std::uint32_t> winning_head;
  std::vector<std::vector<std::uint8_t>> head_gates;  // [head][patch]
};

/// Per patch, the head whose BMU score is maximal wins (tie: lowest head
/// index); only that head's BMU is gated for SOM and mask updates.
GlobalGate global_bmu_gate(const std::vector<BmuMap>& head_bmus);

/// Per-step training diagnostics for the run trace.
struct StepDiagnostics {
  std::uint64_t step = 0;
  int active_layer = -1;  // -1: step outside every interval
  double som_delta_norm = 0.0;
  double mask_delta_norm = 0.0;
};

/// Per-batch utilization collector: fraction of a layer's neurons picked as
/// global BMU for at least one patch in the batch.
struct UtilizationSink {
  // [layer] -> utilization values, one per batch observed
  std::vector<std::vector<double>> per_layer;
};

class Network {
 public:
  static Network init(const NetworkSpec& spec, std::size_t in_h,
                      std::size_t in_w, std::size_t in_c,
                      std::uint64_t master_seed);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<CsnnLayer>& layers() const { return layers_; }
  std::vector<CsnnLayer>& layers() { return layers_; }
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }
  std::uint64_t master_seed() const { return master_seed_; }
  std::size_t input_h() const { return in_h_; }
  std::size_t input_w() const { return in_w_; }
  std::size_t input_c() const { return in_c_; }

  // Spatial/feature shape after layer `l` (post pooling), and the encoded
  // representation length.
  std::vector<std::size_t> output_shape(std::size_t l) const;
  std::size_t representation_length() const;

  /// One training step over a batch [B,h,w,c]. Only the layer whose
  /// interval contains the current step updates; every forward uses
  /// train-mode batch norm (running stats EMA-update as a side effect).
  StepDiagnostics train_step(const Tensor& batch, Ablation ablation,
                             Rng& ablation_rng);

  /// Eval-mode forward of a batch through every layer; returns the
  /// flattened final-layer output, one row per sample.
  /// Ablations swap masks/weights per the enum; `seed` drives the random
  /// and noise variants (`batch_index` makes noise masks resample per
  /// batch). Optionally records per-batch neuron utilization.
  Tensor encode(const Tensor& batch, Ablation ablation, std::uint64_t seed,
                std::uint64_t batch_index = 0,
                UtilizationSink* util = nullptr) const;

  /// Forward of one layer given its input, shared by training/encoding.
  struct LayerForward {
    Tensor output;  // [B, oh, ow, features] masked activations, pre-bn
    std::vector<PatchGrid> patches;           // per sample, raw
    std::vector<std::vector<BmuMap>> bmus;    // [sample][head]
  };

  static Network restore(NetworkSpec spec, std::vector<CsnnLayer> layers,
                         std::size_t h, std::size_t w, std::size_t c,
                         std::uint64_t master_seed, std::uint64_t step) {
    Network net;
    net.spec_ = std::move(spec);
    net.layers_ = std::move(layers);
    net.in_h_ = h;
    net.in_w_ = w;
    net.in_c_ = c;
    net.master_seed_ = master_seed;
    net.step_ = step;
    return net;
  }

 private:
  NetworkSpec spec_;
  std::vector<CsnnLayer> layers_;
  std::size_t in_h_ = 0, in_w_ = 0, in_c_ = 0;
  std::uint64_t master_seed_ = 0;
  std::uint64_t step_ = 0;
};

/// Forward of one layer over a batch. `masks` selects the mask set
/// (normally &layer.masks); nullptr runs maskless (raw weights).
Network::LayerForward csnn_layer_forward(const CsnnLayer& layer,
                                         const Tensor& x,
                                         const std::vector<NeuronMasks>* masks,
                                         bool need_training_extras);

/// The per-neuron dot vectors for a head: weights premultiplied with the
/// neuron's mask (input masks elementwise, channel masks tiled over the
/// kernel's spatial positions), or the raw weights when masks is null.
std::vector<float> build_unit_vectors(const SomMap& map,
                                      const NeuronMasks* masks);

}  // namespace csnn
