#include "csnn/probe.hpp"

#include <numeric>

namespace csnn {

ProbeSpec ProbeSpec::by_name(const std::string& n) {
  if (n == "fc") return fc();
  if (n == "2fc") return fc2();
  if (n == "3fc") return fc3();
  throw ConfigError("unknown probe spec '" + n + "' (fc|2fc|3fc)");
}

namespace {

Mat gather_rows(const Mat& src, const std::vector<std::size_t>& idx) {
  Mat out(idx.size(), src.cols);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(src.row(idx[r]), src.cols, out.row(r));
  return out;
}

std::vector<std::int32_t> gather_labels(const std::vector<std::int32_t>& src,
                                        const std::vector<std::size_t>& idx) {
  std::vector<std::int32_t> out(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) out[r] = src[idx[r]];
  return out;
}

}  // namespace

EpochRecord evaluate_probe(const Mat& reps,
                           const std::vector<std::int32_t>& labels,
                           const ProbeSpec& spec, ProbeParams& params,
                           std::size_t classes) {
  (void)classes;
  EpochRecord rec;
  // Chunked eval keeps memory flat on large rep matrices.
  const std::size_t chunk = 2048;
  double loss_sum = 0.0;
  double correct = 0.0;
  for (std::size_t start = 0; start < reps.rows; start += chunk) {
    const std::size_t n = std::min(chunk, reps.rows - start);
    Mat part(n, reps.cols);
    std::copy_n(reps.row(start), n * reps.cols, part.data.data());
    std::vector<std::int32_t> part_labels(labels.begin() + start,
                                          labels.begin() + start + n);
    auto cache = probe_forward<float>(part, spec, params, ProbeMode::eval);
    double acc = 0.0;
    const double loss = probe_loss<float>(cache.logits, part_labels, &acc);
    loss_sum += loss * n;
    correct += acc * n;
  }
  rec.eval_loss = loss_sum / reps.rows;
  rec.eval_accuracy = correct / reps.rows;
  return rec;
}

ProbeTrace train_probe(const Mat& reps_train,
                       const std::vector<std::int32_t>& labels_train,
                       const Mat& reps_eval,
                       const std::vector<std::int32_t>& labels_eval,
                       const ProbeSpec& spec, std::size_t classes,
                       std::uint64_t seed) {
  if (reps_train.rows == 0 || reps_eval.rows == 0)
    throw DataError("train_probe: empty split");
  if (labels_train.size() != reps_train.rows ||
      labels_eval.size() != reps_eval.rows)
    throw DimensionError("label count != representation count");

  Rng init_rng = make_rng(seed, SeedStream::probe_init);
  ProbeParams params =
      probe_init<float>(spec, reps_train.cols, classes, init_rng);
  AdamState adam = AdamState::init(params);
  Rng shuffle_rng = make_rng(seed, SeedStream::shuffle);
  Rng dropout_rng = make_rng(seed, SeedStream::dropout);

  ProbeTrace trace;
  trace.classes = classes;
  std::vector<std::size_t> order(reps_train.rows);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    shuffle_rng.shuffle(order.data(), order.size());
    double loss_sum = 0.0, acc_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += spec.batch_size) {
      const std::size_t n = std::min(spec.batch_size, order.size() - start);
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + start + n);
      Mat batch = gather_rows(reps_train, idx);
      std::vector<std::int32_t> batch_labels = gather_labels(labels_train, idx);

      auto cache = probe_forward<float>(batch, spec, params, ProbeMode::train,
                                        &dropout_rng);
      double acc = 0.0;
      const double loss = probe_loss<float>(cache.logits, batch_labels, &acc);
      auto grads = probe_backward<float>(cache, spec, params, batch_labels);
      adam_step<float>(params, grads, adam, spec.adam);

      loss_sum += loss * n;
      acc_sum += acc * n;
      seen += n;
    }

    EpochRecord rec = evaluate_probe(reps_eval, labels_eval, spec, params,
                                     classes);
    rec.epoch = epoch;
    rec.train_loss = loss_sum / seen;
    rec.train_accuracy = acc_sum / seen;
    trace.epochs.push_back(rec);

    if (trace.epochs.size() == 1 ||
        rec.eval_accuracy > trace.pocket_accuracy) {
      trace.pocket_accuracy = rec.eval_accuracy;
      trace.pocket_epoch = epoch;
      trace.pocket_params = params;
    }
  }
  return trace;
}

double few_shot_eval(const Mat& reps_train,
                     const std::vector<std::int32_t>& labels_train,
                     const Mat& reps_test,
                     const std::vector<std::int32_t>& labels_test,
                     std::size_t shots_per_class, const ProbeSpec& spec,
                     std::size_t classes, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels_train.size(); ++i)
    by_class[static_cast<std::size_t>(labels_train[i])].push_back(i);

  Rng rng = make_rng(seed, SeedStream::few_shot);
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < shots_per_class)
      throw DataError("class " + std::to_string(c) + " has only " +
                      std::to_string(pool.size()) + " samples, need " +
                      std::to_string(shots_per_class));
    rng.shuffle(pool.data(), pool.size());
    picked.insert(picked.end(), pool.begin(), pool.begin() + shots_per_class);
  }

  Mat sub = gather_rows(reps_train, picked);
  std::vector<std::int32_t> sub_labels = gather_labels(labels_train, picked);
  ProbeTrace trace = train_probe(sub, sub_labels, reps_test, labels_test,
                                 spec, classes, seed);
  return trace.pocket_accuracy;
}

std::vector<std::size_t> stratified_folds(
    const std::vector<std::int32_t>& labels, std::size_t k,
    std::size_t classes, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold requires k >= 2");
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  std::vector<std::size_t> fold(labels.size(), 0);
  Rng rng = make_rng(seed, SeedStream::fold_assign);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < k)
      throw DataError("stratification: class " + std::to_string(c) +
                      " has fewer samples (" + std::to_string(pool.size()) +
                      ") than folds (" + std::to_string(k) + ")");
    rng.shuffle(pool.data(), pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) fold[pool[i]] = i % k;
  }
  return fold;
}

KfoldResult kfold_cv(const Mat& reps, const std::vector<std::int32_t>& labels,
                     std::size_t k, const ProbeSpec& spec, std::size_t classes,
                     std::uint64_t seed) {
  const std::vector<std::size_t> fold = stratified_folds(labels, k, classes,
                                                         seed);
  KfoldResult result;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx, eval_idx;
    for (std::size_t i = 0; i < fold.size(); ++i)
      (fold[i] == f ? eval_idx : train_idx).push_back(i);
    Mat rt = gather_rows(reps, train_idx);
    Mat re = gather_rows(reps, eval_idx);
    result.folds.push_back(train_probe(rt, gather_labels(labels, train_idx),
                                       re, gather_labels(labels, eval_idx),
                                       spec, classes,
                                       derive_seed(seed, SeedStream::fold_assign,
                                                   f + 1)));
  }

  const std::size_t epochs = result.folds[0].epochs.size();
  result.mean_curve.resize(epochs);
  for (std::size_t e = 0; e < epochs; ++e) {
    EpochRecord& m = result.mean_curve[e];
    m.epoch = e;
    for (const auto& tr : result.folds) {
      m.train_loss += tr.epochs[e].train_loss;
      m.train_accuracy += tr.epochs[e].train_accuracy;
      m.eval_loss += tr.epochs[e].eval_loss;
      m.eval_accuracy += tr.epochs[e].eval_accuracy;
    }
    m.train_loss /= k;
    m.train_accuracy /= k;
    m.eval_loss /= k;
    m.eval_accuracy /= k;
  }
  return result;
}

}  // namespace csnn
