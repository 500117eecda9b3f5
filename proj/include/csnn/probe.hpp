#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "csnn/common.hpp"
#include "csnn/linalg.hpp"
#include "csnn/rng.hpp"

namespace csnn {

enum class ProbeActivation : std::uint8_t { elu, relu };

struct AdamHyper {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-7f;
};

/// Dense-probe description. `fc` is the linear evaluation head; `fc2`/`fc3`
/// are the nonlinear MLPs (hidden 256 and 512/256, batch norm, elu,
/// dropout between layers for fc3).
struct ProbeSpec {
  std::string name = "fc";
  std::vector<std::size_t> hidden;  // empty for the linear probe
  ProbeActivation activation = ProbeActivation::elu;
  std::vector<float> dropout;       // one rate per hidden layer
  bool batch_norm = true;
  AdamHyper adam;
  std::size_t batch_size = 512;
  std::size_t epochs = 100;

  static ProbeSpec fc() {
    ProbeSpec s;
    s.name = "fc";
    s.batch_norm = false;
    return s;
  }
  static ProbeSpec fc2() {
    ProbeSpec s;
    s.name = "2fc";
    s.hidden = {256};
    s.dropout = {0.3f};
    return s;
  }
  static ProbeSpec fc3() {
    ProbeSpec s;
    s.name = "3fc";
    s.hidden = {512, 256};
    s.dropout = {0.5f, 0.3f};
    return s;
  }
  static ProbeSpec by_name(const std::string& n);

  void validate() const {
    for (float d : dropout)
      if (d < 0.0f || d >= 1.0f)
        throw ConfigError("dropout rate must be in [0,1)");
    for (std::size_t h : hidden)
      if (h == 0) throw ConfigError("hidden width must be >= 1");
  }
};

template <typename S>
struct MatT {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<S> data;

  MatT() = default;
  MatT(std::size_t r, std::size_t c, S fill = S(0))
      : rows(r), cols(c), data(r * c, fill) {}
  S* row(std::size_t r) { return data.data() + r * cols; }
  const S* row(std::size_t r) const { return data.data() + r * cols; }
};

using Mat = MatT<float>;

template <typename S>
struct ProbeParamsT {
  struct Dense {
    std::size_t in = 0, out = 0;
    std::vector<S> w;  // in x out, row-major
    std::vector<S> b;
  };
  struct BnLayer {
    std::vector<S> gamma, beta;
    std::vector<S> running_mean, running_var;
    S momentum = S(0.9);
    S eps = S(1e-5);
  };
  std::vector<Dense> dense;   // hidden layers + output layer
  std::vector<BnLayer> bn;    // one per hidden layer when enabled

  // Flat views over every trainable tensor, used by Adam and the
  // finite-difference check.
  std::vector<std::vector<S>*> trainable() {
    std::vector<std::vector<S>*> out;
    for (auto& d : dense) {
      out.push_back(&d.w);
      out.push_back(&d.b);
    }
    for (auto& l : bn) {
      out.push_back(&l.gamma);
      out.push_back(&l.beta);
    }
    return out;
  }
};

using ProbeParams = ProbeParamsT<float>;

/// Glorot/Xavier-uniform initialization: U[-sqrt(6/(fan_in+fan_out)), +..],
/// zero biases, unit bn gamma.
template <typename S>
ProbeParamsT<S> probe_init(const ProbeSpec& spec, std::size_t input_dim,
                           std::size_t classes, Rng& rng) {
  spec.validate();
  ProbeParamsT<S> p;
  std::vector<std::size_t> widths;
  widths.push_back(input_dim);
  for (std::size_t h : spec.hidden) widths.push_back(h);
  widths.push_back(classes);

  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    typename ProbeParamsT<S>::Dense d;
    d.in = widths[i];
    d.out = widths[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(d.in + d.out));
    d.w.resize(d.in * d.out);
    for (auto& v : d.w) v = static_cast<S>(rng.uniform(-limit, limit));
    d.b.assign(d.out, S(0));
    p.dense.push_back(std::move(d));
  }
  if (spec.batch_norm) {
    for (std::size_t h : spec.hidden) {
      typename ProbeParamsT<S>::BnLayer l;
      l.gamma.assign(h, S(1));
      l.beta.assign(h, S(0));
      l.running_mean.assign(h, S(0));
      l.running_var.assign(h, S(1));
      p.bn.push_back(std::move(l));
    }
  }
  return p;
}

enum class ProbeMode : std::uint8_t { train, eval };

template <typename S>
struct ProbeCacheT {
  // Per hidden layer, everything backward needs.
  struct Layer {
    MatT<S> input;      // x into the dense op
    MatT<S> pre_bn;     // z = xW + b
    std::vector<S> mean, inv_std;  // batch statistics (train mode)
    MatT<S> xhat;       // normalized pre-activation (bn enabled)
    MatT<S> pre_act;    // after bn (or == pre_bn)
    MatT<S> post_act;
    MatT<S> dropout_mask;  // scaled inverted mask; empty when unused
  };
  std::vector<Layer> layers;
  MatT<S> final_input;  // input of the output dense layer
  MatT<S> logits;
  ProbeMode mode = ProbeMode::eval;
};

template <typename S>
void dense_forward(const typename ProbeParamsT<S>::Dense& d,
                   const MatT<S>& x, MatT<S>& out) {
  if (x.cols != d.in) throw DimensionError("probe input width mismatch");
  out = MatT<S>(x.rows, d.out);
  matmul_nn(x.data.data(), d.w.data(), out.data.data(), x.rows, d.out, d.in);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < d.out; ++c) out.row(r)[c] += d.b[c];
}

/// Forward pass: dense -> [bn] -> activation -> [dropout] per hidden layer,
/// then the output dense layer. Softmax lives in the loss. Dropout draws
/// from `rng` (train mode only), so callers control the stochastic path.
template <typename S>
ProbeCacheT<S> probe_forward(const MatT<S>& reps, const ProbeSpec& spec,
                             ProbeParamsT<S>& params, ProbeMode mode,
                             Rng* rng = nullptr) {
  ProbeCacheT<S> cache;
  cache.mode = mode;
  MatT<S> x = reps;
  const std::size_t hidden_count = spec.hidden.size();
  cache.layers.resize(hidden_count);

  for (std::size_t li = 0; li < hidden_count; ++li) {
    auto& L = cache.layers[li];
    L.input = x;
    dense_forward<S>(params.dense[li], x, L.pre_bn);

    MatT<S>* cur = &L.pre_bn;
    if (spec.batch_norm) {
      auto& bn = params.bn[li];
      const std::size_t f = L.pre_bn.cols;
      L.xhat = MatT<S>(L.pre_bn.rows, f);
      L.pre_act = MatT<S>(L.pre_bn.rows, f);
      if (mode == ProbeMode::train) {
        if (L.pre_bn.rows < 2)
          throw DimensionError("probe batch norm needs batch >= 2 in train mode");
        L.mean.assign(f, S(0));
        L.inv_std.assign(f, S(0));
        std::vector<double> mean(f, 0.0), var(f, 0.0);
        for (std::size_t r = 0; r < L.pre_bn.rows; ++r)
          for (std::size_t c = 0; c < f; ++c) mean[c] += L.pre_bn.row(r)[c];
        for (auto& m : mean) m /= L.pre_bn.rows;
        for (std::size_t r = 0; r < L.pre_bn.rows; ++r)
          for (std::size_t c = 0; c < f; ++c) {
            const double d = L.pre_bn.row(r)[c] - mean[c];
            var[c] += d * d;
          }
        for (auto& v : var) v /= L.pre_bn.rows;
        for (std::size_t c = 0; c < f; ++c) {
          L.mean[c] = static_cast<S>(mean[c]);
          L.inv_std[c] = static_cast<S>(
              1.0 / std::sqrt(var[c] + static_cast<double>(bn.eps)));
          bn.running_mean[c] = bn.momentum * bn.running_mean[c] +
                               (S(1) - bn.momentum) * static_cast<S>(mean[c]);
          bn.running_var[c] = bn.momentum * bn.running_var[c] +
                              (S(1) - bn.momentum) * static_cast<S>(var[c]);
        }
      } else {
        L.mean.assign(bn.running_mean.begin(), bn.running_mean.end());
        L.inv_std.resize(f);
        for (std::size_t c = 0; c < f; ++c)
          L.inv_std[c] = S(1) / std::sqrt(bn.running_var[c] + bn.eps);
      }
      for (std::size_t r = 0; r < L.pre_bn.rows; ++r)
        for (std::size_t c = 0; c < f; ++c) {
          const S xh = (L.pre_bn.row(r)[c] - L.mean[c]) * L.inv_std[c];
          L.xhat.row(r)[c] = xh;
          L.pre_act.row(r)[c] = bn.gamma[c] * xh + bn.beta[c];
        }
      cur = &L.pre_act;
    } else {
      L.pre_act = L.pre_bn;
      cur = &L.pre_act;
    }

    L.post_act = MatT<S>(cur->rows, cur->cols);
    if (spec.activation == ProbeActivation::elu) {
      for (std::size_t i = 0; i < cur->data.size(); ++i) {
        const S v = cur->data[i];
        L.post_act.data[i] = v > S(0) ? v : std::expm1(v);
      }
    } else {
      for (std::size_t i = 0; i < cur->data.size(); ++i)
        L.post_act.data[i] = std::max(S(0), cur->data[i]);
    }

    const float rate = li < spec.dropout.size() ? spec.dropout[li] : 0.0f;
    if (mode == ProbeMode::train && rate > 0.0f) {
      if (!rng)
        throw InvariantError("dropout requires an rng in train mode");
      L.dropout_mask = MatT<S>(L.post_act.rows, L.post_act.cols);
      const S keep_inv = S(1) / S(1 - rate);
      for (std::size_t i = 0; i < L.post_act.data.size(); ++i) {
        const bool keep = rng->uniform() >= rate;
        L.dropout_mask.data[i] = keep ? keep_inv : S(0);
        L.post_act.data[i] *= L.dropout_mask.data[i];
      }
    }
    x = L.post_act;
  }

  cache.final_input = x;
  dense_forward<S>(params.dense[hidden_count], x, cache.logits);
  return cache;
}

/// Mean softmax cross-entropy; argmax ties break to the lowest class.
template <typename S>
double probe_loss(const MatT<S>& logits, const std::vector<std::int32_t>& labels,
                  double* accuracy = nullptr, MatT<S>* dlogits = nullptr) {
  const std::size_t batch = logits.rows;
  const std::size_t classes = logits.cols;
  if (labels.size() != batch) throw DimensionError("label count != batch");
  if (dlogits) *dlogits = MatT<S>(batch, classes);

  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<double> prob(classes);
  for (std::size_t r = 0; r < batch; ++r) {
    const S* row = logits.row(r);
    double mx = row[0];
    std::size_t arg = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (row[c] > mx) {
        mx = row[c];
        arg = c;
      }
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      prob[c] = std::exp(static_cast<double>(row[c]) - mx);
      z += prob[c];
    }
    const auto label = static_cast<std::size_t>(labels[r]);
    if (labels[r] < 0 || label >= classes)
      throw DataError("label out of range");
    loss += -std::log(prob[label] / z);
    if (arg == label) ++correct;
    if (dlogits) {
      for (std::size_t c = 0; c < classes; ++c)
        dlogits->row(r)[c] =
            static_cast<S>((prob[c] / z - (c == label ? 1.0 : 0.0)) /
                           static_cast<double>(batch));
    }
  }
  if (accuracy) *accuracy = static_cast<double>(correct) / batch;
  return loss / static_cast<double>(batch);
}

template <typename S>
struct ProbeGradsT {
  ProbeParamsT<S> g;  // same shapes as the params, gradients in place
};

/// Exact analytic gradients of the mean cross-entropy w.r.t. every
/// trainable parameter, given the cache of the matching forward.
template <typename S>
ProbeGradsT<S> probe_backward(const ProbeCacheT<S>& cache,
                              const ProbeSpec& spec,
                              const ProbeParamsT<S>& params,
                              const std::vector<std::int32_t>& labels) {
  ProbeGradsT<S> grads;
  grads.g = params;
  for (auto* t : grads.g.trainable()) std::fill(t->begin(), t->end(), S(0));

  MatT<S> dlogits;
  probe_loss<S>(cache.logits, labels, nullptr, &dlogits);

  const std::size_t hidden_count = spec.hidden.size();

  // Output dense layer.
  {
    auto& d = grads.g.dense[hidden_count];
    const MatT<S>& x = cache.final_input;
    matmul_tn_acc(x.data.data(), dlogits.data.data(), d.w.data(), d.in, d.out,
                  x.rows);
    for (std::size_t r = 0; r < dlogits.rows; ++r)
      for (std::size_t c = 0; c < d.out; ++c) d.b[c] += dlogits.row(r)[c];
  }

  // dX into the chain below the output layer.
  MatT<S> dx(cache.final_input.rows, cache.final_input.cols);
  matmul_nt(dlogits.data.data(), params.dense[hidden_count].w.data(),
            dx.data.data(), dlogits.rows, params.dense[hidden_count].in,
            dlogits.cols);

  for (std::size_t li = hidden_count; li-- > 0;) {
    const auto& L = cache.layers[li];
    // Dropout.
    if (L.dropout_mask.data.size() == dx.data.size())
      for (std::size_t i = 0; i < dx.data.size(); ++i)
        dx.data[i] *= L.dropout_mask.data[i];

    // Activation.
    if (spec.activation == ProbeActivation::elu) {
      for (std::size_t i = 0; i < dx.data.size(); ++i) {
        const S pre = L.pre_act.data[i];
        // d/dx elu = 1 for x > 0 else exp(x) (= elu(x) + 1).
        dx.data[i] *= pre > S(0) ? S(1) : std::exp(pre);
      }
    } else {
      for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (L.pre_act.data[i] <= S(0)) dx.data[i] = S(0);
    }

    // Batch norm (train statistics when the forward ran in train mode).
    if (spec.batch_norm) {
      const auto& bn = params.bn[li];
      auto& gbn = grads.g.bn[li];
      const std::size_t f = L.pre_bn.cols;
      const std::size_t n = L.pre_bn.rows;
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) {
          gbn.gamma[c] += dx.row(r)[c] * L.xhat.row(r)[c];
          gbn.beta[c] += dx.row(r)[c];
        }
      MatT<S> dxhat(n, f);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c)
          dxhat.row(r)[c] = dx.row(r)[c] * bn.gamma[c];

      if (cache.mode == ProbeMode::train) {
        // Full backprop through the batch statistics.
        std::vector<double> sum_dxhat(f, 0.0), sum_dxhat_xhat(f, 0.0);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < f; ++c) {
            sum_dxhat[c] += dxhat.row(r)[c];
            sum_dxhat_xhat[c] += dxhat.row(r)[c] * L.xhat.row(r)[c];
          }
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < f; ++c) {
            const double t = static_cast<double>(dxhat.row(r)[c]) -
                             sum_dxhat[c] / n -
                             static_cast<double>(L.xhat.row(r)[c]) *
                                 sum_dxhat_xhat[c] / n;
            dx.row(r)[c] = static_cast<S>(t * L.inv_std[c]);
          }
      } else {
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < f; ++c)
            dx.row(r)[c] = dxhat.row(r)[c] * L.inv_std[c];
      }
    }

    // Dense layer li.
    auto& d = grads.g.dense[li];
    matmul_tn_acc(L.input.data.data(), dx.data.data(), d.w.data(), d.in,
                  d.out, L.input.rows);
    for (std::size_t r = 0; r < dx.rows; ++r)
      for (std::size_t c = 0; c < d.out; ++c) d.b[c] += dx.row(r)[c];

    if (li > 0) {
      MatT<S> dprev(L.input.rows, L.input.cols);
      matmul_nt(dx.data.data(), params.dense[li].w.data(), dprev.data.data(),
                dx.rows, params.dense[li].in, dx.cols);
      dx = std::move(dprev);
    }
  }
  return grads;
}

template <typename S>
struct AdamStateT {
  std::vector<std::vector<S>> m, v;
  std::uint64_t t = 0;

  static AdamStateT init(ProbeParamsT<S>& params) {
    AdamStateT s;
    for (auto* p : params.trainable()) {
      s.m.emplace_back(p->size(), S(0));
      s.v.emplace_back(p->size(), S(0));
    }
    return s;
  }
};

using AdamState = AdamStateT<float>;

/// Standard Adam with bias correction.
template <typename S>
void adam_step(ProbeParamsT<S>& params, ProbeGradsT<S>& grads,
               AdamStateT<S>& state, const AdamHyper& hyper) {
  ++state.t;
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  auto ps = params.trainable();
  auto gs = grads.g.trainable();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto& p = *ps[k];
    const auto& g = *gs[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = static_cast<S>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<S>(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= static_cast<S>(hyper.lr * mhat /
                             (std::sqrt(vhat) + hyper.eps));
    }
  }
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
};

struct ProbeTrace {
  std::vector<EpochRecord> epochs;
  std::size_t pocket_epoch = 0;
  double pocket_accuracy = 0.0;
  ProbeParams pocket_params;
  std::size_t classes = 0;
};

/// Trains for spec.epochs with per-epoch shuffling from the seed; the
/// reported model is the epoch with the best eval accuracy (pocket).
ProbeTrace train_probe(const Mat& reps_train,
                       const std::vector<std::int32_t>& labels_train,
                       const Mat& reps_eval,
                       const std::vector<std::int32_t>& labels_eval,
                       const ProbeSpec& spec, std::size_t classes,
                       std::uint64_t seed);

/// Eval-mode loss/accuracy of given params over a rep matrix.
EpochRecord evaluate_probe(const Mat& reps,
                           const std::vector<std::int32_t>& labels,
                           const ProbeSpec& spec, ProbeParams& params,
                           std::size_t classes);

/// Samples `shots` representations per class (seeded), trains an FC probe
/// on them and reports test accuracy at the pocket epoch.
double few_shot_eval(const Mat& reps_train,
                     const std::vector<std::int32_t>& labels_train,
                     const Mat& reps_test,
                     const std::vector<std::int32_t>& labels_test,
                     std::size_t shots_per_class, const ProbeSpec& spec,
                     std::size_t classes, std::uint64_t seed);

struct KfoldResult {
  std::vector<ProbeTrace> folds;
  std::vector<EpochRecord> mean_curve;  // pointwise mean over folds
};

/// Deterministic stratified k-fold: per class, seeded shuffle then
/// round-robin assignment. Errors if any class has fewer samples than k.
std::vector<std::size_t> stratified_folds(
    const std::vector<std::int32_t>& labels, std::size_t k,
    std::size_t classes, std::uint64_t seed);

KfoldResult kfold_cv(const Mat& reps, const std::vector<std::int32_t>& labels,
                     std::size_t k, const ProbeSpec& spec, std::size_t classes,
                     std::uint64_t seed);

}  // namespace csnn
