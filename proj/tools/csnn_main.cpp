#include <iostream>

#include <CLI11.hpp>

#include "csnn/harness.hpp"
#include "csnn/linalg.hpp"

namespace {

int run(int argc, char** argv) {
  csnn::pin_blas_single_thread();

  CLI::App app{"csnn: self-organizing convolutional networks, probes and "
               "mismatch metrics"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a CSNN per config");
  std::string config_path;
  train->add_option("-c,--config", config_path, "TOML config file")
      ->required();

  // probe
  auto* probe = app.add_subcommand("probe", "probe run checkpoints");
  std::string probe_run;
  csnn::ProbeRunOptions probe_opts;
  std::vector<std::uint64_t> probe_steps;
  std::size_t probe_kfold = 0;
  std::size_t probe_epochs = 0;
  probe->add_option("-r,--run", probe_run, "run directory")->required();
  probe->add_option("--probe", probe_opts.probe_name,
                    "probe spec (fc|2fc|3fc), default from config");
  probe->add_option("--kfold", probe_kfold, "k-fold cross-validation");
  probe->add_option("--checkpoint", probe_steps,
                    "checkpoint steps (default: all)");
  probe->add_option("--train-limit", probe_opts.train_limit,
                    "cap probe training samples (0 = all)");
  probe->add_option("--few-shot", probe_opts.few_shot,
                    "few-shot evaluation with this many shots per class");
  probe->add_option("--epochs", probe_epochs, "override probe epochs");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "mismatch metric reports");
  std::string metrics_run;
  csnn::MetricsRunOptions metrics_opts;
  std::vector<std::string> curve_files;
  std::string orientation_str;
  std::string conv_mode = "best";
  metrics->add_option("-r,--run", metrics_run, "run directory");
  metrics->add_option("--curves", curve_files,
                      "external curve files: target [pretext]");
  metrics->add_option("--orientation", orientation_str,
                      "lower|higher (overrides manifest)");
  metrics->add_option("--target-metric", metrics_opts.target_metric,
                      "accuracy|loss when reading run curves");
  metrics->add_option("--probe", metrics_opts.probe_name,
                      "probe whose curve to analyse");
  metrics->add_option("--patience", metrics_opts.report.patience,
                      "convergence patience (default 3)");
  metrics->add_option("--min-delta", metrics_opts.report.min_delta,
                      "convergence min delta (default 0)");
  metrics->add_option("--convergence-mode", conv_mode, "best|trigger");

  // export
  auto* exp = app.add_subcommand("export", "visual/statistics exports");
  exp->require_subcommand(1);
  auto* exp_bmu = exp->add_subcommand("bmu", "BMU-weight images");
  std::string export_run;
  csnn::BmuExportOptions bmu_opts;
  std::uint64_t bmu_checkpoint = 0;
  exp_bmu->add_option("-r,--run", export_run, "run directory")->required();
  exp_bmu->add_option("--layer", bmu_opts.layer, "layer index")->required();
  exp_bmu->add_option("--sample", bmu_opts.sample, "test sample index");
  exp_bmu->add_option("--checkpoint", bmu_checkpoint,
                      "checkpoint step (default: last)");
  exp_bmu->add_flag("--overwrite-last", bmu_opts.overwrite_last,
                    "overwrite overlapping patch writes instead of averaging");
  auto* exp_stats = exp->add_subcommand(
      "stats", "utilization, weight-change and class-average exports");
  std::string stats_run;
  std::size_t stat_samples = 512;
  exp_stats->add_option("-r,--run", stats_run, "run directory")->required();
  exp_stats->add_option("--samples", stat_samples,
                        "test samples for the statistics");

  // oracle
  auto* oracle = app.add_subcommand(
      "oracle", "brute-force conv equivalence suite");
  std::size_t oracle_cases = 50;
  oracle->add_option("--cases", oracle_cases, "number of random cases");

  CLI11_PARSE(app, argc, argv);

  if (*train) {
    const auto cfg = csnn::ExperimentConfig::from_toml_file(config_path);
    const auto trace = csnn::cmd_train(cfg);
    std::cout << "trained " << trace.at("total_steps") << " steps, "
              << trace.at("checkpoints").size() << " snapshots -> "
              << cfg.output_dir.string() << "\n";
  } else if (*probe) {
    if (probe_kfold > 0) probe_opts.kfold = probe_kfold;
    if (probe_epochs > 0) probe_opts.epochs = probe_epochs;
    probe_opts.checkpoints = probe_steps;
    const auto results = csnn::cmd_probe(probe_run, probe_opts);
    std::cout << results.dump(2) << "\n";
  } else if (*metrics) {
    for (const auto& f : curve_files) metrics_opts.curves.emplace_back(f);
    if (!orientation_str.empty())
      metrics_opts.orientation = csnn::orientation_from_string(orientation_str);
    metrics_opts.report.convergence_mode =
        conv_mode == "trigger" ? csnn::ConvergenceMode::trigger
                               : csnn::ConvergenceMode::best;
    if (metrics_run.empty() && curve_files.empty())
      throw csnn::ConfigError("metrics needs --run or --curves");
    const auto report = csnn::cmd_metrics(metrics_run, metrics_opts);
    std::cout << report.dump(2) << "\n";
  } else if (*exp_bmu) {
    bmu_opts.use_last = exp_bmu->count("--checkpoint") == 0;
    bmu_opts.checkpoint = bmu_checkpoint;
    const auto file = csnn::cmd_export_bmu(export_run, bmu_opts);
    std::cout << file.string() << "\n";
  } else if (*exp_stats) {
    const auto out = csnn::cmd_export_stats(stats_run, stat_samples);
    std::cout << out.dump(2) << "\n";
  } else if (*oracle) {
    const int failures = csnn::cmd_oracle(std::cout, oracle_cases);
    if (failures > 0) throw csnn::InvariantError("oracle suite failed");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const csnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const csnn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const csnn::InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
