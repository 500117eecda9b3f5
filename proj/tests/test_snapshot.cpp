#include <doctest.h>

#include <filesystem>

#include "csnn/io.hpp"
#include "csnn/network.hpp"
#include "csnn/snapshot.hpp"

using namespace csnn;

namespace {

Network trained_tiny(std::uint64_t seed) {
  NetworkSpec spec;
  LayerSpec l1;
  l1.heads = 2;
  l1.grid_h = l1.grid_w = 3;
  l1.mask_kind = MaskKind::input;
  l1.train_begin = 0;
  l1.train_end = 3;
  LayerSpec l2 = l1;
  l2.mask_kind = MaskKind::channel;
  l2.rule = MaskRuleConfig::oja_prefix();
  l2.train_begin = 3;
  l2.train_end = 6;
  spec.layers = {l1, l2};
  Network net = Network::init(spec, 8, 8, 3, seed);
  Rng rng(seed), arng(seed + 1);
  for (int i = 0; i < 6; ++i) {
    Tensor batch({1, 8, 8, 3});
    for (auto& v : batch.values()) v = rng.uniform_f(-1, 1);
    net.train_step(batch, Ablation::none, arng);
  }
  return net;
}

}  // namespace

TEST_CASE("snapshot round-trips bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "csnn_snap_test";
  std::filesystem::create_directories(dir);
  const auto file = dir / "model.csnn";

  Network net = trained_tiny(101);
  save_snapshot(net, file);
  Network back = load_snapshot(file);

  CHECK(back.step() == net.step());
  CHECK(back.master_seed() == net.master_seed());
  CHECK(back.input_h() == net.input_h());
  REQUIRE(back.layers().size() == net.layers().size());
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& a = net.layers()[l];
    const auto& b = back.layers()[l];
    CHECK(a.spec.grid_h == b.spec.grid_h);
    CHECK(a.spec.rule.gamma == b.spec.rule.gamma);
    CHECK(a.spec.train_end == b.spec.train_end);
    CHECK(a.in_channels == b.in_channels);
    for (std::size_t head = 0; head < a.maps.size(); ++head) {
      CHECK(a.maps[head].weights == b.maps[head].weights);
      CHECK(a.masks[head].values == b.masks[head].values);
    }
    CHECK(a.bn.running_mean == b.bn.running_mean);
    CHECK(a.bn.running_var == b.bn.running_var);
  }

  // saving the loaded model reproduces the same bytes
  const auto file2 = dir / "model2.csnn";
  save_snapshot(back, file2);
  CHECK(read_file(file) == read_file(file2));
}

TEST_CASE("snapshot corruption is detected") {
  const auto dir = std::filesystem::temp_directory_path() / "csnn_snap_test";
  std::filesystem::create_directories(dir);
  const auto file = dir / "corrupt.csnn";
  Network net = trained_tiny(5);
  save_snapshot(net, file);

  auto bytes = read_file(file);
  bytes[bytes.size() / 2] ^= 0x5a;
  write_file_atomic(file, bytes.data(), bytes.size());
  CHECK_THROWS_AS(load_snapshot(file), DataError);

  // bad magic
  bytes[0] = 'X';
  write_file_atomic(file, bytes.data(), bytes.size());
  CHECK_THROWS_AS(load_snapshot(file), DataError);
}

TEST_CASE("restored model encodes identically") {
  const auto dir = std::filesystem::temp_directory_path() / "csnn_snap_test";
  std::filesystem::create_directories(dir);
  const auto file = dir / "enc.csnn";
  Network net = trained_tiny(303);
  save_snapshot(net, file);
  Network back = load_snapshot(file);

  Rng rng(9);
  Tensor batch({3, 8, 8, 3});
  for (auto& v : batch.values()) v = rng.uniform_f(-1, 1);
  Tensor a = net.encode(batch, Ablation::none, 1);
  Tensor b = back.encode(batch, Ablation::none, 1);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
}
