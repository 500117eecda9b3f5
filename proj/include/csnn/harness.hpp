#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include <json.hpp>

#include "csnn/config.hpp"
#include "csnn/datasets.hpp"
#include "csnn/metrics.hpp"
#include "csnn/network.hpp"
#include "csnn/probe.hpp"

namespace csnn {

/// Train/eval/test splits resolved per config, normalized with train-split
/// statistics.
struct LoadedData {
  Dataset train;
  Dataset eval;
  Dataset test;
  ChannelStats stats;
};

LoadedData load_for_config(const ExperimentConfig& cfg);

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.toml"; }
  std::filesystem::path trace() const { return root / "trace.json"; }
  std::filesystem::path snapshot(std::uint64_t step) const {
    return root / "snapshots" / ("step_" + std::to_string(step) + ".csnn");
  }
  std::filesystem::path probes() const { return root / "probes"; }
  std::filesystem::path curves() const { return root / "curves"; }
  std::filesystem::path metrics() const { return root / "metrics"; }
  std::filesystem::path exports() const { return root / "exports"; }
};

/// Deterministic CSNN training per config: layer-wise steps, snapshots at
/// every checkpoint, per-step weight-change diagnostics and end-of-run
/// utilization persisted to trace.json.
nlohmann::json cmd_train(const ExperimentConfig& cfg);

struct ProbeRunOptions {
  std::string probe_name;                  // empty: config default
  std::optional<std::size_t> kfold;
  std::vector<std::uint64_t> checkpoints;  // empty: every trace checkpoint
  std::size_t train_limit = 0;             // 0: full train split
  std::size_t few_shot = 0;                // >0: shots per class, FC probe
  std::optional<std::size_t> epochs;
};

/// Encode + probe selected checkpoints; persists per-checkpoint ProbeTrace
/// CSV/JSON files, appends summaries to trace.json and emits the
/// step-vs-accuracy / step-vs-loss curve files for cmd_metrics.
nlohmann::json cmd_probe(const std::filesystem::path& run_dir,
                         const ProbeRunOptions& options);

struct MetricsRunOptions {
  std::vector<std::filesystem::path> curves;  // external files (target [pretext])
  std::optional<Orientation> orientation;
  std::string target_metric = "accuracy";    // accuracy | loss (run curves)
  std::string probe_name;                    // empty: config default
  ReportOptions report;
};

nlohmann::json cmd_metrics(const std::filesystem::path& run_dir,
                           const MetricsRunOptions& options);

struct BmuExportOptions {
  std::uint64_t checkpoint = 0;  // 0 with use_last: latest snapshot
  bool use_last = true;
  std::size_t layer = 0;
  std::size_t sample = 0;     // test-split sample index
  bool overwrite_last = false;  // overlapping patch writes: average or last
};

std::filesystem::path cmd_export_bmu(const std::filesystem::path& run_dir,
                                     const BmuExportOptions& options);

/// Utilization summary, weight-change curves and class-average
/// representation images + pairwise L1 distances.
nlohmann::json cmd_export_stats(const std::filesystem::path& run_dir,
                                std::size_t max_stat_samples = 512);

/// Randomized equivalence suite: optimized forward vs naive_sconv_oracle.
/// Prints one line per case; returns the number of failures.
int cmd_oracle(std::ostream& out, std::size_t cases = 50,
               std::uint64_t seed = 7);

/// Shared helper: encode a dataset in batches through a network.
Mat encode_dataset(const Network& net, const Dataset& data, Ablation ablation,
                   std::uint64_t seed, std::size_t encode_batch,
                   UtilizationSink* util = nullptr);

}  // namespace csnn
