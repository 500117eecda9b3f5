#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "csnn/metrics.hpp"
#include "csnn/network.hpp"
#include "csnn/probe.hpp"

namespace csnn {

/// Minimal TOML reader covering the config schema: [table] and [[array]]
/// headers (dotted), bare/dotted keys, strings, integers, floats, booleans,
/// (nested, possibly multiline) arrays, and # comments. Everything lands in
/// a json tree. Unsupported TOML constructs raise ConfigError with the line.
nlohmann::json parse_toml(const std::string& text);

struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  std::string dataset_kind;  // cifar10 | cifar100 | mnist
  std::filesystem::path dataset_path;
  std::size_t eval_count = 5000;
  std::size_t train_limit = 0;  // 0 = whole train split

  NetworkSpec network;
  std::size_t batch = 1;
  Ablation ablation = Ablation::none;
  std::vector<std::uint64_t> checkpoints;
  std::size_t encode_batch = 64;

  ProbeSpec probe = ProbeSpec::fc();

  std::uint64_t total_steps() const;

  static ExperimentConfig from_toml_file(const std::filesystem::path& path);
  static ExperimentConfig from_toml(const std::string& text,
                                    const std::filesystem::path& base_dir);
  std::string to_toml() const;  // canonical echo persisted into the run dir
};

}  // namespace csnn
