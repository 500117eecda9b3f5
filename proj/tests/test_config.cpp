#include <doctest.h>

#include "csnn/config.hpp"

using namespace csnn;

namespace {

const char* kDeskConfig = R"(
# desk-scale experiment
[experiment]
name = "desk"
seed = 42
output_dir = "runs/desk"

[dataset]
kind = "cifar10"
path = "data/cifar10"
eval_count = 500
train_limit = 2_000

[network]
preset = "custom"
batch = 1
ablation = "none"
encode_batch = 32
intervals = [[0, 1000], [1000, 2000]]
checkpoints = [0, 2000]

[[network.layer]]
heads = 2
grid = [8, 8]
mask = "input"
rule = "hebb_all"
delta = 1.0

[[network.layer]]
heads = 2
grid = [8, 8]
mask = "channel"
rule = "hebb_all"
delta = 1.5
mask_lr = 0.005

[probe]
spec = "fc"
epochs = 60
batch = 256
lr = 0.001
)";

}  // namespace

TEST_CASE("toml subset parser") {
  const auto j = parse_toml(R"(
top = 1
[a]
x = "hi \"there\""
y = -2.5e3
flag = true
list = [1, 2, [3, 4]]
multi = [
  5,
  6,
]
[a.b]
z = 3
[[arr]]
v = 1
[[arr]]
v = 2
)");
  CHECK(j.at("top") == 1);
  CHECK(j.at("a").at("x") == "hi \"there\"");
  CHECK(j.at("a").at("y") == -2500.0);
  CHECK(j.at("a").at("flag") == true);
  CHECK(j.at("a").at("list")[2][1] == 4);
  CHECK(j.at("a").at("multi")[1] == 6);
  CHECK(j.at("a").at("b").at("z") == 3);
  CHECK(j.at("arr").size() == 2);
  CHECK(j.at("arr")[1].at("v") == 2);

  CHECK_THROWS_AS(parse_toml("x = \n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("x = 1\nx = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("x = [1, 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("[unclosed\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("x = 12g4\n"), ConfigError);
}

TEST_CASE("experiment config parses the desk schema") {
  const ExperimentConfig cfg =
      ExperimentConfig::from_toml(kDeskConfig, "/tmp/base");
  CHECK(cfg.name == "desk");
  CHECK(cfg.seed == 42);
  CHECK(cfg.output_dir == std::filesystem::path("/tmp/base/runs/desk"));
  CHECK(cfg.dataset_kind == "cifar10");
  CHECK(cfg.eval_count == 500);
  CHECK(cfg.train_limit == 2000);
  REQUIRE(cfg.network.layers.size() == 2);
  CHECK(cfg.network.layers[0].heads == 2);
  CHECK(cfg.network.layers[0].grid_h == 8);
  CHECK(cfg.network.layers[0].mask_kind == MaskKind::input);
  CHECK(cfg.network.layers[1].mask_kind == MaskKind::channel);
  CHECK(cfg.network.layers[0].train_end == 1000);
  CHECK(cfg.network.layers[1].train_begin == 1000);
  CHECK(cfg.network.layers[1].delta == 1.5f);
  CHECK(cfg.batch == 1);
  CHECK(cfg.encode_batch == 32);
  CHECK(cfg.checkpoints == std::vector<std::uint64_t>{0, 2000});
  CHECK(cfg.probe.name == "fc");
  CHECK(cfg.probe.epochs == 60);
  CHECK(cfg.probe.batch_size == 256);
  CHECK(cfg.total_steps() == 2000);

  // canonical echo re-parses to the same experiment
  const ExperimentConfig echo =
      ExperimentConfig::from_toml(cfg.to_toml(), "/tmp/base");
  CHECK(echo.seed == cfg.seed);
  CHECK(echo.network.layers.size() == cfg.network.layers.size());
  CHECK(echo.network.layers[1].train_end == 2000);
  CHECK(echo.probe.epochs == cfg.probe.epochs);
}

TEST_CASE("config validation errors carry precise paths") {
  // missing seed
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_toml("[experiment]\noutput_dir = \"o\"\n"
                                  "[dataset]\nkind = \"mnist\"\npath = \"d\"\n"
                                  "[network]\npreset = \"s-csnn\"\n"
                                  "intervals = [[0,1],[1,2]]\n",
                                  "/tmp"),
      "experiment.seed is mandatory", ConfigError);

  const std::string base =
      "[experiment]\nseed = 1\noutput_dir = \"o\"\n"
      "[dataset]\nkind = \"cifar10\"\npath = \"d\"\n";

  // unknown preset
  CHECK_THROWS_AS(ExperimentConfig::from_toml(
                      base + "[network]\npreset = \"q-csnn\"\n"
                             "intervals = [[0,1]]\n",
                      "/tmp"),
                  ConfigError);

  // interval count mismatch
  CHECK_THROWS_AS(ExperimentConfig::from_toml(
                      base + "[network]\npreset = \"s-csnn\"\n"
                             "intervals = [[0,1]]\n",
                      "/tmp"),
                  ConfigError);

  // overlapping intervals rejected at load
  CHECK_THROWS_AS(ExperimentConfig::from_toml(
                      base + "[network]\npreset = \"s-csnn\"\n"
                             "intervals = [[0,10],[5,20]]\n",
                      "/tmp"),
                  ConfigError);

  // checkpoint beyond training
  CHECK_THROWS_AS(ExperimentConfig::from_toml(
                      base + "[network]\npreset = \"s-csnn\"\n"
                             "intervals = [[0,10],[10,20]]\n"
                             "checkpoints = [0, 50]\n",
                      "/tmp"),
                  ConfigError);
}

TEST_CASE("presets resolve through config") {
  const std::string text =
      "[experiment]\nseed = 9\noutput_dir = \"o\"\n"
      "[dataset]\nkind = \"cifar10\"\npath = \"d\"\n"
      "[network]\npreset = \"d-csnn\"\n"
      "intervals = [[0,10],[10,20],[20,30]]\n";
  const ExperimentConfig cfg = ExperimentConfig::from_toml(text, "/tmp");
  CHECK(cfg.network.preset == "d-csnn");
  REQUIRE(cfg.network.layers.size() == 3);
  CHECK(cfg.network.layers[2].grid_h == 16);
  CHECK(cfg.network.layers[2].train_end == 30);
  // default checkpoint schedule: dense early, includes 0 and the last step
  CHECK(cfg.checkpoints.front() == 0);
  CHECK(cfg.checkpoints.back() == 30);
}
