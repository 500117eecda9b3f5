#include "csnn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>
#include <sstream>

#include "csnn/io.hpp"
#include "csnn/parallel.hpp"
#include "csnn/snapshot.hpp"

namespace csnn {

using nlohmann::json;

LoadedData load_for_config(const ExperimentConfig& cfg) {
  LoadedData data;
  if (cfg.dataset_kind == "cifar10" || cfg.dataset_kind == "cifar100") {
    const CifarVariant variant = cfg.dataset_kind == "cifar10"
                                     ? CifarVariant::cifar10
                                     : CifarVariant::cifar100;
    data.train = load_cifar_dir(cfg.dataset_path, variant, true);
    Dataset validation = load_cifar_dir(cfg.dataset_path, variant, false);
    auto [ev, te] = split_eval(validation, cfg.eval_count, cfg.seed);
    data.eval = std::move(ev);
    data.test = std::move(te);
  } else if (cfg.dataset_kind == "mnist") {
    data.train = load_mnist_idx(cfg.dataset_path / "train-images-idx3-ubyte",
                                cfg.dataset_path / "train-labels-idx1-ubyte");
    Dataset validation =
        load_mnist_idx(cfg.dataset_path / "t10k-images-idx3-ubyte",
                       cfg.dataset_path / "t10k-labels-idx1-ubyte");
    data.train.split = DatasetSplit::train;
    auto [ev, te] = split_eval(validation, cfg.eval_count, cfg.seed);
    data.eval = std::move(ev);
    data.test = std::move(te);
  } else {
    throw ConfigError("dataset.kind '" + cfg.dataset_kind + "' not loadable");
  }
  data.stats = normalize_inplace(data.train);
  normalize_inplace(data.eval, data.stats);
  normalize_inplace(data.test, data.stats);
  return data;
}

Mat encode_dataset(const Network& net, const Dataset& data, Ablation ablation,
                   std::uint64_t seed, std::size_t encode_batch,
                   UtilizationSink* util) {
  const std::size_t n = data.size();
  Mat reps(n, net.representation_length());
  const std::size_t ss = data.images.sample_size();
  const auto& shape = data.images.shape();

  auto encode_block = [&](std::size_t start, std::uint64_t batch_index,
                          UtilizationSink* sink) {
    const std::size_t count = std::min(encode_batch, n - start);
    std::vector<float> block(count * ss);
    std::copy_n(data.images.data() + start * ss, count * ss, block.data());
    Tensor batch = Tensor::from_data({count, shape[1], shape[2], shape[3]},
                                     std::move(block));
    Tensor out = net.encode(batch, ablation, seed, batch_index, sink);
    std::copy_n(out.data(), out.size(), reps.row(start));
  };

  if (util) {
    // Utilization collection appends per batch; keep it ordered.
    std::uint64_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += encode_batch)
      encode_block(start, batch_index++, util);
  } else {
    // Batches are independent and write disjoint rows, so results are
    // bit-identical for every CSNN_THREADS value.
    const std::size_t batches = (n + encode_batch - 1) / encode_batch;
    parallel_chunks(batches, 1, [&](std::size_t b, std::size_t e,
                                    std::size_t) {
      for (std::size_t i = b; i < e; ++i)
        encode_block(i * encode_batch, i, nullptr);
    });
  }
  return reps;
}

namespace {

json trace_read(const RunPaths& paths) {
  return json::parse(read_text_file(paths.trace()));
}

void trace_write(const RunPaths& paths, const json& trace) {
  write_file_atomic(paths.trace(), trace.dump(2) + "\n");
}

std::vector<std::int32_t> labels_of(const Dataset& d) { return d.labels; }

void write_probe_trace_files(const RunPaths& paths, const std::string& stem,
                             const ProbeTrace& trace) {
  std::ostringstream csv;
  csv.precision(17);
  csv << "epoch,split,loss,accuracy\n";
  for (const auto& e : trace.epochs) {
    csv << e.epoch << ",train," << e.train_loss << "," << e.train_accuracy
        << "\n";
    csv << e.epoch << ",eval," << e.eval_loss << "," << e.eval_accuracy
        << "\n";
  }
  write_file_atomic(paths.probes() / (stem + ".csv"), csv.str());

  json summary;
  summary["pocket_epoch"] = trace.pocket_epoch;
  summary["pocket_accuracy"] = trace.pocket_accuracy;
  summary["epochs"] = trace.epochs.size();
  summary["classes"] = trace.classes;
  write_file_atomic(paths.probes() / (stem + ".json"),
                    summary.dump(2) + "\n");
}

}  // namespace

json cmd_train(const ExperimentConfig& cfg) {
  RunPaths paths{cfg.output_dir};
  std::filesystem::create_directories(paths.root / "snapshots");
  std::filesystem::create_directories(paths.probes());
  std::filesystem::create_directories(paths.curves());
  std::filesystem::create_directories(paths.metrics());
  std::filesystem::create_directories(paths.exports());

  LoadedData data = load_for_config(cfg);
  Dataset train_stream = cfg.train_limit > 0 && cfg.train_limit < data.train.size()
                             ? data.train.head(cfg.train_limit)
                             : data.train;

  const auto& shape = train_stream.images.shape();
  Network net = Network::init(cfg.network, shape[1], shape[2], shape[3],
                              cfg.seed);

  json trace;
  trace["config_file"] = "config.toml";
  trace["dataset_digest_train"] = train_stream.digest();
  trace["seed"] = cfg.seed;
  trace["total_steps"] = cfg.total_steps();
  trace["representation_length"] = net.representation_length();

  write_file_atomic(paths.config(), cfg.to_toml());

  std::vector<std::uint64_t> pending(cfg.checkpoints.begin(),
                                     cfg.checkpoints.end());
  json checkpoints = json::array();
  auto snapshot_if_due = [&](std::uint64_t step) {
    if (std::find(pending.begin(), pending.end(), step) == pending.end())
      return;
    const auto file = paths.snapshot(step);
    save_snapshot(net, file);
    json rec;
    rec["step"] = step;
    rec["snapshot"] = std::filesystem::relative(file, paths.root).string();
    checkpoints.push_back(rec);
  };

  snapshot_if_due(0);

  const std::uint64_t total = cfg.total_steps();
  const std::size_t n = train_stream.size();
  const std::size_t ss = train_stream.images.sample_size();
  Rng ablation_rng = make_rng(cfg.seed, SeedStream::ablation);

  json som_norms = json::array();
  json mask_norms = json::array();
  json active_layers = json::array();

  std::size_t cursor = 0;
  for (std::uint64_t step = 0; step < total; ++step) {
    std::vector<float> block(cfg.batch * ss);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      std::copy_n(train_stream.images.data() + cursor * ss, ss,
                  block.data() + b * ss);
      cursor = (cursor + 1) % n;
    }
    Tensor batch = Tensor::from_data({cfg.batch, shape[1], shape[2], shape[3]},
                                     std::move(block));
    StepDiagnostics diag = net.train_step(batch, cfg.ablation, ablation_rng);
    som_norms.push_back(diag.som_delta_norm);
    mask_norms.push_back(diag.mask_delta_norm);
    active_layers.push_back(diag.active_layer);
    snapshot_if_due(step + 1);
  }

  // Unit-norm invariant after the full run.
  for (const auto& layer : net.layers())
    for (const auto& map : layer.maps) map.require_unit_norm(1e-5);

  // End-of-run utilization on a small eval sample, per input (batch 1).
  UtilizationSink util;
  const std::size_t util_n = std::min<std::size_t>(64, data.eval.size());
  encode_dataset(net, data.eval.head(util_n), Ablation::none, cfg.seed, 1,
                 &util);
  json util_json = json::array();
  for (const auto& layer_vals : util.per_layer) {
    double mean = 0.0;
    for (double v : layer_vals) mean += v;
    util_json.push_back(layer_vals.empty() ? 0.0 : mean / layer_vals.size());
  }

  trace["checkpoints"] = checkpoints;
  trace["som_delta_norms"] = som_norms;
  trace["mask_delta_norms"] = mask_norms;
  trace["active_layers"] = active_layers;
  trace["utilization_per_layer"] = util_json;
  trace["probes"] = json::object();
  trace_write(paths, trace);
  return trace;
}

json cmd_probe(const std::filesystem::path& run_dir,
               const ProbeRunOptions& options) {
  RunPaths paths{run_dir};
  if (!std::filesystem::exists(paths.trace()))
    throw DataError("no trace.json in " + run_dir.string() +
                    " (run `csnn train` first)");
  ExperimentConfig cfg = ExperimentConfig::from_toml_file(paths.config());
  cfg.output_dir = run_dir;  // run dirs may be relocated
  json trace = trace_read(paths);

  ProbeSpec spec = options.probe_name.empty()
                       ? cfg.probe
                       : ProbeSpec::by_name(options.probe_name);
  if (options.probe_name.size()) {
    spec.epochs = cfg.probe.epochs;
    spec.batch_size = cfg.probe.batch_size;
    spec.adam = cfg.probe.adam;
  }
  if (options.epochs) spec.epochs = *options.epochs;

  LoadedData data = load_for_config(cfg);
  Dataset probe_train =
      options.train_limit > 0 && options.train_limit < data.train.size()
          ? data.train.head(options.train_limit)
          : data.train;

  std::vector<std::uint64_t> steps = options.checkpoints;
  if (steps.empty())
    for (const auto& rec : trace.at("checkpoints"))
      steps.push_back(rec.at("step").get<std::uint64_t>());

  json results = json::array();
  MetricCurve acc_curve, loss_curve;
  acc_curve.orientation = Orientation::higher_better;
  acc_curve.name = spec.name + "_eval_accuracy";
  loss_curve.orientation = Orientation::lower_better;
  loss_curve.name = spec.name + "_eval_loss";

  for (std::uint64_t step : steps) {
    const auto snap_file = paths.snapshot(step);
    if (!std::filesystem::exists(snap_file))
      throw DataError("missing snapshot " + snap_file.string());
    Network net = load_snapshot(snap_file);

    Mat reps_train = encode_dataset(net, probe_train, cfg.ablation, cfg.seed,
                                    cfg.encode_batch);
    Mat reps_eval = encode_dataset(net, data.eval, cfg.ablation, cfg.seed,
                                   cfg.encode_batch);
    Mat reps_test = encode_dataset(net, data.test, cfg.ablation, cfg.seed,
                                   cfg.encode_batch);

    json rec;
    rec["step"] = step;
    rec["probe"] = spec.name;

    const std::uint64_t probe_seed =
        derive_seed(cfg.seed, SeedStream::probe_init, step + 1);

    if (options.few_shot > 0) {
      ProbeSpec fs_spec = ProbeSpec::fc();
      fs_spec.epochs = spec.epochs;
      fs_spec.batch_size = spec.batch_size;
      fs_spec.adam = spec.adam;
      const double acc = few_shot_eval(
          reps_train, labels_of(probe_train), reps_test, labels_of(data.test),
          options.few_shot, fs_spec, probe_train.class_count, probe_seed);
      rec["few_shot"] = options.few_shot;
      rec["accuracy"] = acc;
      acc_curve.steps.push_back(step);
      acc_curve.values.push_back(acc);
    } else if (options.kfold) {
      KfoldResult kf =
          kfold_cv(reps_train, labels_of(probe_train), *options.kfold, spec,
                   probe_train.class_count, probe_seed);
      double mean_pocket = 0.0;
      for (std::size_t f = 0; f < kf.folds.size(); ++f) {
        write_probe_trace_files(paths,
                                spec.name + "_step" + std::to_string(step) +
                                    "_fold" + std::to_string(f),
                                kf.folds[f]);
        mean_pocket += kf.folds[f].pocket_accuracy;
      }
      mean_pocket /= kf.folds.size();
      rec["kfold"] = *options.kfold;
      rec["accuracy"] = mean_pocket;
      json fold_accs = json::array();
      for (const auto& f : kf.folds) fold_accs.push_back(f.pocket_accuracy);
      rec["fold_accuracies"] = fold_accs;
      acc_curve.steps.push_back(step);
      acc_curve.values.push_back(mean_pocket);
      loss_curve.steps.push_back(step);
      loss_curve.values.push_back(
          kf.mean_curve[kf.folds[0].pocket_epoch].eval_loss);
    } else {
      ProbeTrace tr =
          train_probe(reps_train, labels_of(probe_train), reps_eval,
                      labels_of(data.eval), spec, probe_train.class_count,
                      probe_seed);
      write_probe_trace_files(
          paths, spec.name + "_step" + std::to_string(step), tr);
      EpochRecord test_rec = evaluate_probe(reps_test, labels_of(data.test),
                                            spec, tr.pocket_params,
                                            probe_train.class_count);
      rec["pocket_epoch"] = tr.pocket_epoch;
      rec["eval_accuracy"] = tr.pocket_accuracy;
      rec["test_accuracy"] = test_rec.eval_accuracy;
      rec["test_loss"] = test_rec.eval_loss;
      acc_curve.steps.push_back(step);
      acc_curve.values.push_back(tr.pocket_accuracy);
      loss_curve.steps.push_back(step);
      loss_curve.values.push_back(tr.epochs[tr.pocket_epoch].eval_loss);
    }
    results.push_back(rec);
  }

  // Step-vs-metric curve files; these are what cmd_metrics ingests.
  std::string key = spec.name;
  if (options.few_shot > 0)
    key += "_fs" + std::to_string(options.few_shot);
  else if (options.kfold)
    key += "_cv" + std::to_string(*options.kfold);
  if (acc_curve.size() > 0) {
    acc_curve.name = key + "_eval_accuracy";
    save_curve_csv(acc_curve, paths.curves() / (key + "_accuracy.csv"));
  }
  if (loss_curve.size() > 0) {
    loss_curve.name = key + "_eval_loss";
    save_curve_csv(loss_curve, paths.curves() / (key + "_loss.csv"));
  }

  trace["probes"][key] = results;
  trace_write(paths, trace);
  return results;
}

json cmd_metrics(const std::filesystem::path& run_dir,
                 const MetricsRunOptions& options) {
  RunPaths paths{run_dir};
  MetricCurve target;
  std::optional<MetricCurve> pretext;

  if (!options.curves.empty()) {
    target = load_curve(options.curves[0], options.orientation);
    if (options.curves.size() > 1)
      pretext = load_curve(options.curves[1], options.orientation);
    if (options.curves.size() > 2)
      throw ConfigError("at most two curve files (target [pretext])");
  } else {
    ExperimentConfig cfg = ExperimentConfig::from_toml_file(paths.config());
    const std::string probe =
        options.probe_name.empty() ? cfg.probe.name : options.probe_name;
    const auto file =
        paths.curves() / (probe + "_" + options.target_metric + ".csv");
    if (!std::filesystem::exists(file))
      throw DataError("no curve file " + file.string() +
                      " (run `csnn probe` first)");
    target = load_curve(file, options.orientation);
  }

  MismatchReport report = compute_report(target, pretext, options.report);
  std::filesystem::create_directories(paths.metrics());
  const auto json_path = paths.metrics() / (target.name + "_report.json");
  const auto tsv_path = paths.metrics() / (target.name + "_report.tsv");
  write_file_atomic(json_path, report_to_json(report));
  write_file_atomic(tsv_path, report_to_plot_tsv(report));
  json out = json::parse(report_to_json(report));
  out["report_json"] = json_path.string();
  out["report_tsv"] = tsv_path.string();
  return out;
}

std::filesystem::path cmd_export_bmu(const std::filesystem::path& run_dir,
                                     const BmuExportOptions& options) {
  RunPaths paths{run_dir};
  ExperimentConfig cfg = ExperimentConfig::from_toml_file(paths.config());
  cfg.output_dir = run_dir;
  json trace = trace_read(paths);

  std::uint64_t step = options.checkpoint;
  if (options.use_last) {
    step = 0;
    for (const auto& rec : trace.at("checkpoints"))
      step = std::max(step, rec.at("step").get<std::uint64_t>());
  }
  Network net = load_snapshot(paths.snapshot(step));
  if (options.layer >= net.layers().size())
    throw ConfigError("layer index out of range");

  LoadedData data = load_for_config(cfg);
  if (options.sample >= data.test.size())
    throw ConfigError("sample index out of range");
  Dataset one = data.test.subset({options.sample});

  // Forward to the chosen layer's input in eval mode.
  Tensor x = Tensor::from_data({1, data.test.images.extent(1),
                                data.test.images.extent(2),
                                data.test.images.extent(3)},
                               std::vector<float>(one.images.values().begin(),
                                                  one.images.values().end()));
  for (std::size_t l = 0; l < options.layer; ++l) {
    const CsnnLayer& layer = net.layers()[l];
    auto fwd = csnn_layer_forward(layer, x, &layer.masks, false);
    BatchNormState bn = layer.bn;
    Tensor y = layer.spec.batch_norm
                   ? batch_norm_notrain(fwd.output, bn, BnMode::eval)
                   : std::move(fwd.output);
    x = layer.spec.max_pool ? max_pool_2x2(y) : std::move(y);
  }

  const CsnnLayer& layer = net.layers()[options.layer];
  const LayerSpec& ls = layer.spec;
  auto fwd = csnn_layer_forward(layer, x, &layer.masks, true);
  GlobalGate gate = global_bmu_gate(fwd.bmus[0]);
  const PatchGrid& grid = fwd.patches[0];

  // Paint each patch location with the winning BMU's weight vector.
  const std::size_t h = x.extent(1), w = x.extent(2), c = x.extent(3);
  std::vector<double> canvas(h * w * c, 0.0);
  std::vector<double> weight_sum(h * w, 0.0);
  for (std::size_t p = 0; p < grid.count(); ++p) {
    const std::size_t head = gate.winning_head[p];
    const std::size_t neuron = fwd.bmus[0][head].indices[p];
    const float* wvec = layer.maps[head].weight(neuron);
    const auto [r0, c0] = grid.anchors[p];
    for (std::size_t kr = 0; kr < ls.kernel.h; ++kr) {
      const long row = r0 + static_cast<long>(kr);
      if (row < 0 || row >= static_cast<long>(h)) continue;
      for (std::size_t kc = 0; kc < ls.kernel.w; ++kc) {
        const long col = c0 + static_cast<long>(kc);
        if (col < 0 || col >= static_cast<long>(w)) continue;
        const std::size_t px =
            static_cast<std::size_t>(row) * w + static_cast<std::size_t>(col);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double v = wvec[(kr * ls.kernel.w + kc) * c + ch];
          if (options.overwrite_last)
            canvas[px * c + ch] = v;
          else
            canvas[px * c + ch] += v;
        }
        weight_sum[px] += 1.0;
      }
    }
  }
  if (!options.overwrite_last)
    for (std::size_t px = 0; px < h * w; ++px)
      if (weight_sum[px] > 0.0)
        for (std::size_t ch = 0; ch < c; ++ch)
          canvas[px * c + ch] /= weight_sum[px];

  // Depth-3 slice for deep layers, min-max scaled to [0,255].
  const std::size_t out_c = c >= 3 ? 3 : c;
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t px = 0; px < h * w; ++px)
    for (std::size_t ch = 0; ch < out_c; ++ch) {
      const double v = canvas[px * c + ch];
      if (first || v < lo) lo = v;
      if (first || v > hi) hi = v;
      first = false;
    }
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

  std::filesystem::create_directories(paths.exports());
  const std::string stem = "bmu_step" + std::to_string(step) + "_layer" +
                           std::to_string(options.layer) + "_sample" +
                           std::to_string(options.sample);
  if (out_c == 1) {
    std::vector<std::uint8_t> gray(h * w);
    for (std::size_t px = 0; px < h * w; ++px)
      gray[px] = static_cast<std::uint8_t>(
          std::lround((canvas[px * c] - lo) * scale));
    const auto file = paths.exports() / (stem + ".pgm");
    write_pgm(file, h, w, gray);
    return file;
  }
  std::vector<std::uint8_t> rgb(h * w * 3, 0);
  for (std::size_t px = 0; px < h * w; ++px)
    for (std::size_t ch = 0; ch < out_c; ++ch)
      rgb[px * 3 + ch] = static_cast<std::uint8_t>(
          std::lround((canvas[px * c + ch] - lo) * scale));
  const auto file = paths.exports() / (stem + ".ppm");
  write_ppm(file, h, w, rgb);
  return file;
}

json cmd_export_stats(const std::filesystem::path& run_dir,
                      std::size_t max_stat_samples) {
  RunPaths paths{run_dir};
  ExperimentConfig cfg = ExperimentConfig::from_toml_file(paths.config());
  cfg.output_dir = run_dir;
  json trace = trace_read(paths);

  std::uint64_t last = 0;
  for (const auto& rec : trace.at("checkpoints"))
    last = std::max(last, rec.at("step").get<std::uint64_t>());
  Network net = load_snapshot(paths.snapshot(last));

  LoadedData data = load_for_config(cfg);
  Dataset stats_set = data.test.head(std::min(max_stat_samples,
                                              data.test.size()));

  // Per-input utilization (batch 1) over the stats sample.
  UtilizationSink util;
  Mat reps = encode_dataset(net, stats_set, Ablation::none, cfg.seed, 1, &util);

  json util_json = json::array();
  for (const auto& layer_vals : util.per_layer) {
    double mean = 0.0, mn = 1.0, mx = 0.0;
    for (double v : layer_vals) {
      mean += v;
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    mean /= layer_vals.empty() ? 1 : layer_vals.size();
    util_json.push_back({{"mean", mean}, {"min", mn}, {"max", mx}});
  }

  // Weight-change curves from the trace.
  {
    std::ostringstream tsv;
    tsv << "step\tactive_layer\tsom_delta_norm\tmask_delta_norm\n";
    const auto& som = trace.at("som_delta_norms");
    const auto& mask = trace.at("mask_delta_norms");
    const auto& act = trace.at("active_layers");
    for (std::size_t i = 0; i < som.size(); ++i)
      tsv << i << "\t" << act[i].get<int>() << "\t"
          << som[i].get<double>() << "\t" << mask[i].get<double>() << "\n";
    write_file_atomic(paths.exports() / "weight_changes.tsv", tsv.str());
  }

  // Class-average representations: mean over samples and spatial positions,
  // reshaped to the SOM grid per head.
  const auto out_shape = net.output_shape(net.layers().size() - 1);
  const std::size_t spatial = out_shape[0] * out_shape[1];
  const std::size_t features = out_shape[2];
  const std::size_t classes = stats_set.class_count;
  std::vector<std::vector<double>> class_mean(
      classes, std::vector<double>(features, 0.0));
  std::vector<std::size_t> class_n(classes, 0);
  for (std::size_t i = 0; i < stats_set.size(); ++i) {
    const auto cls = static_cast<std::size_t>(stats_set.labels[i]);
    ++class_n[cls];
    const float* row = reps.row(i);
    for (std::size_t s = 0; s < spatial; ++s)
      for (std::size_t f = 0; f < features; ++f)
        class_mean[cls][f] += row[s * features + f];
  }
  for (std::size_t cls = 0; cls < classes; ++cls)
    if (class_n[cls] > 0)
      for (double& v : class_mean[cls])
        v /= static_cast<double>(class_n[cls] * spatial);

  const CsnnLayer& top = net.layers().back();
  const std::size_t per_head = top.spec.neurons_per_head();
  for (std::size_t cls = 0; cls < classes; ++cls) {
    if (class_n[cls] == 0) continue;
    double lo = class_mean[cls][0], hi = class_mean[cls][0];
    for (double v : class_mean[cls]) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    for (std::size_t head = 0; head < top.spec.heads; ++head) {
      std::vector<std::uint8_t> img(per_head);
      for (std::size_t i = 0; i < per_head; ++i)
        img[i] = static_cast<std::uint8_t>(std::lround(
            (class_mean[cls][head * per_head + i] - lo) * scale));
      write_pgm(paths.exports() / ("class_avg_c" + std::to_string(cls) +
                                   "_head" + std::to_string(head) + ".pgm"),
                top.spec.grid_h, top.spec.grid_w, img);
    }
    if (top.spec.heads == 3) {
      std::vector<std::uint8_t> rgb(per_head * 3);
      for (std::size_t i = 0; i < per_head; ++i)
        for (std::size_t head = 0; head < 3; ++head)
          rgb[i * 3 + head] = static_cast<std::uint8_t>(std::lround(
              (class_mean[cls][head * per_head + i] - lo) * scale));
      write_ppm(paths.exports() / ("class_avg_c" + std::to_string(cls) +
                                   "_rgb.ppm"),
                top.spec.grid_h, top.spec.grid_w, rgb);
    }
  }

  // Pairwise L1 distances + element-wise difference maps vs the next class
  // in distance order from class 0.
  std::vector<std::vector<double>> l1(classes,
                                      std::vector<double>(classes, 0.0));
  for (std::size_t a = 0; a < classes; ++a)
    for (std::size_t b = 0; b < classes; ++b)
      for (std::size_t f = 0; f < features; ++f)
        l1[a][b] += std::abs(class_mean[a][f] - class_mean[b][f]);
  {
    std::ostringstream tsv;
    tsv << "class_a\tclass_b\tl1\n";
    tsv.precision(17);
    for (std::size_t a = 0; a < classes; ++a)
      for (std::size_t b = 0; b < classes; ++b)
        tsv << a << "\t" << b << "\t" << l1[a][b] << "\n";
    write_file_atomic(paths.exports() / "class_l1_distances.tsv", tsv.str());
  }
  std::vector<std::size_t> order(classes);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (l1[0][a] != l1[0][b]) return l1[0][a] < l1[0][b];
    return a < b;
  });
  for (std::size_t k = 0; k + 1 < classes; ++k) {
    const std::size_t a = order[k], b = order[k + 1];
    std::vector<double> diff(features);
    double lo = 0.0, hi = 0.0;
    for (std::size_t f = 0; f < features; ++f) {
      diff[f] = class_mean[a][f] - class_mean[b][f];
      lo = std::min(lo, diff[f]);
      hi = std::max(hi, diff[f]);
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    for (std::size_t head = 0; head < top.spec.heads; ++head) {
      std::vector<std::uint8_t> img(per_head);
      for (std::size_t i = 0; i < per_head; ++i)
        img[i] = static_cast<std::uint8_t>(
            std::lround((diff[head * per_head + i] - lo) * scale));
      write_pgm(paths.exports() / ("class_diff_c" + std::to_string(a) +
                                   "_minus_c" + std::to_string(b) + "_head" +
                                   std::to_string(head) + ".pgm"),
                top.spec.grid_h, top.spec.grid_w, img);
    }
  }

  json out;
  out["utilization_per_layer"] = util_json;
  out["stat_samples"] = stats_set.size();
  out["exports_dir"] = paths.exports().string();
  trace["utilization_stats"] = util_json;
  trace_write(paths, trace);
  return out;
}

int cmd_oracle(std::ostream& out, std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  int failures = 0;
  for (std::size_t k = 0; k < cases; ++k) {
    const std::size_t h = 4 + rng.below(14);
    const std::size_t w = 4 + rng.below(14);
    // every fourth case uses a deep-layer channel count
    const std::size_t c = k % 4 == 3 ? 32 + rng.below(97) : 1 + rng.below(3);
    const std::size_t kh = 1 + rng.below(std::min<std::size_t>(4, h));
    const std::size_t kw = 1 + rng.below(std::min<std::size_t>(4, w));
    const std::size_t sh = 1 + rng.below(2);
    const std::size_t sw = 1 + rng.below(2);
    const Padding pad = rng.below(2) ? Padding::same : Padding::valid;
    const std::size_t filters = 1 + rng.below(8);
    const std::size_t dim = kh * kw * c;

    Tensor input({h, w, c});
    for (auto& v : input.values()) v = rng.uniform_f(-1.0f, 1.0f);
    std::vector<std::vector<float>> weights(filters);
    for (auto& f : weights) {
      f.resize(dim);
      for (auto& v : f) v = rng.uniform_f(-1.0f, 1.0f);
    }

    const Tensor expected = naive_sconv_oracle(input, weights, {kh, kw},
                                               {sh, sw}, pad);
    PatchGrid grid = extract_patches(input, {kh, kw}, {sh, sw}, pad);
    std::vector<float> flat;
    for (const auto& f : weights) flat.insert(flat.end(), f.begin(), f.end());
    Activations acts = som_forward(grid, flat, filters, dim);

    double worst = 0.0;
    for (std::size_t p = 0; p < acts.patch_count; ++p)
      for (std::size_t i = 0; i < filters; ++i) {
        const double a = acts.row(p)[i];
        const double b = expected.at(p * filters + i);
        const double rel =
            std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
        worst = std::max(worst, rel);
      }
    const bool ok = worst <= 1e-5;
    if (!ok) ++failures;
    out << "case " << k << ": " << h << "x" << w << "x" << c << " k" << kh
        << "x" << kw << " s" << sh << "x" << sw << " "
        << to_string(pad) << " f" << filters << " rel_err " << worst << " "
        << (ok ? "OK" : "FAIL") << "\n";
  }
  out << (failures == 0 ? "oracle suite: all cases match\n"
                        : "oracle suite: FAILURES\n");
  return failures;
}

}  // namespace csnn
