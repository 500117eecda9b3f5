#include <doctest.h>

#include <cmath>

#include "csnn/som.hpp"

using namespace csnn;

namespace {

PatchGrid grid_from(const std::vector<std::vector<float>>& patches) {
  PatchGrid g;
  g.rows = patches.size();
  g.cols = 1;
  g.patch_len = patches.empty() ? 0 : patches[0].size();
  for (const auto& p : patches)
    g.patches.insert(g.patches.end(), p.begin(), p.end());
  g.anchors.resize(g.count());
  return g;
}

}  // namespace

TEST_CASE("bmu selection and tie break") {
  CHECK(bmu(std::vector<float>{-1.0f, 0.0f, 2.0f}) == 2);
  CHECK(bmu(std::vector<float>{0.9f, 0.9f, 0.1f}) == 0);  // tie -> lowest

  // 100 random values vs linear scan
  Rng rng(11);
  std::vector<float> v(100);
  for (auto& x : v) x = rng.uniform_f(-5, 5);
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  CHECK(bmu(v) == best);

  // argmax invariance under positive rescaling
  std::vector<float> scaled = v;
  for (auto& x : scaled) x *= 3.25f;
  CHECK(bmu(scaled) == bmu(v));
}

TEST_CASE("gaussian neighborhood") {
  Rng rng(2);
  SomMap map = SomMap::init(3, 3, 4, rng);
  CHECK(neighborhood(map, 4, 4, 1.0f) == doctest::Approx(1.0));
  // adjacent neuron at distance 1, delta 1 -> exp(-0.5)
  CHECK(neighborhood(map, 4, 5, 1.0f) ==
        doctest::Approx(0.6065306597126334).epsilon(1e-6));
  // symmetric
  for (std::size_t a = 0; a < 9; ++a)
    for (std::size_t b = 0; b < 9; ++b)
      CHECK(neighborhood(map, a, b, 1.3f) ==
            doctest::Approx(neighborhood(map, b, a, 1.3f)));

  // delta -> 0+: only the BMU coefficient survives
  for (std::size_t i = 0; i < 9; ++i) {
    const float h = neighborhood(map, 4, i, 1e-6f);
    if (i == 4)
      CHECK(h == doctest::Approx(1.0));
    else
      CHECK(h < 1e-9f);
  }
}

TEST_CASE("unit-norm init and invariant checking") {
  Rng rng(7);
  SomMap map = SomMap::init(4, 4, 27, rng);
  map.require_unit_norm(1e-5);
  map.weights[0] += 1.0f;
  CHECK_THROWS_AS(map.require_unit_norm(1e-5), InvariantError);
}

TEST_CASE("competitive update: single neuron hand value") {
  // w=[1,0], one patch p=[0,1], a=1, h=1 -> w' = [0.7071, 0.7071]
  SomMap map;
  map.grid_h = map.grid_w = 1;
  map.dim = 2;
  map.weights = {1.0f, 0.0f};

  PatchGrid patches = grid_from({{0.0f, 1.0f}});
  BmuMap bmus;
  bmus.indices = {0};
  bmus.scores = {0.0f};
  std::vector<std::uint8_t> gate{1};
  LearningSchedule sched;
  sched.som_lr = 1.0f;
  sched.delta = 1.0f;
  const auto table = neighborhood_table(map, sched.delta);

  competitive_update(map, patches, bmus, gate, sched, table);
  CHECK(map.weights[0] == doctest::Approx(0.70710678).epsilon(1e-6));
  CHECK(map.weights[1] == doctest::Approx(0.70710678).epsilon(1e-6));
}

TEST_CASE("competitive update: zero learning rate leaves map unchanged") {
  Rng rng(5);
  SomMap map = SomMap::init(2, 2, 3, rng);
  const auto before = map.weights;
  PatchGrid patches = grid_from({{1, 2, 3}, {0, 1, 0}});
  BmuMap bmus;
  bmus.indices = {0, 2};
  bmus.scores = {1.0f, 1.0f};
  std::vector<std::uint8_t> gate{1, 1};
  LearningSchedule sched;
  sched.som_lr = 0.0f;
  const auto table = neighborhood_table(map, 1.0f);
  competitive_update(map, patches, bmus, gate, sched, table);
  CHECK(map.weights == before);
}

TEST_CASE("competitive update keeps unit norms and matches direct eval") {
  Rng rng(13);
  SomMap map = SomMap::init(3, 3, 5, rng);
  SomMap reference = map;

  std::vector<std::vector<float>> pv;
  for (int i = 0; i < 7; ++i) {
    std::vector<float> p(5);
    for (auto& v : p) v = rng.uniform_f(-1, 1);
    pv.push_back(p);
  }
  PatchGrid patches = grid_from(pv);
  // score with raw weights
  Activations acts = som_forward(patches, map.weights, 9, 5);
  BmuMap bmus = bmu_map(acts);
  std::vector<std::uint8_t> gate(7, 1);
  gate[3] = 0;  // one ungated patch
  LearningSchedule sched;
  sched.som_lr = 0.2f;
  sched.delta = 1.5f;
  const auto table = neighborhood_table(map, sched.delta);
  competitive_update(map, patches, bmus, gate, sched, table);
  map.require_unit_norm(1e-5);

  // direct evaluation of the averaged rule
  const std::size_t gated = 6;
  for (std::size_t i = 0; i < 9; ++i) {
    std::vector<double> delta(5, 0.0);
    for (std::size_t p = 0; p < 7; ++p) {
      if (!gate[p]) continue;
      const float h = table[bmus.indices[p] * 9 + i];
      for (std::size_t j = 0; j < 5; ++j)
        delta[j] += static_cast<double>(h) * pv[p][j];
    }
    std::vector<double> expect(5);
    double norm = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      expect[j] = reference.weights[i * 5 + j] +
                  0.2 / gated * delta[j];
      norm += expect[j] * expect[j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(map.weight(i)[j] ==
            doctest::Approx(expect[j] / norm).epsilon(2e-4));
  }
}

TEST_CASE("stationary single-patch stream: BMU angle non-increasing") {
  Rng rng(29);
  SomMap map = SomMap::init(2, 2, 8, rng);
  std::vector<float> p(8);
  for (auto& v : p) v = rng.uniform_f(-1, 1);
  const auto target = l2_normalized(p);
  PatchGrid patches = grid_from({p});
  LearningSchedule sched;
  sched.som_lr = 0.1f;
  sched.delta = 0.5f;

  double prev_angle = 10.0;
  std::size_t bmu_index = 0;
  for (int step = 0; step < 50; ++step) {
    Activations acts = som_forward(patches, map.weights, 4, 8);
    BmuMap bmus = bmu_map(acts);
    bmu_index = bmus.indices[0];
    const double cosang = std::clamp(
        dot_f64({map.weight(bmu_index), 8}, target), -1.0, 1.0);
    const double angle = std::acos(cosang);
    CHECK(angle <= prev_angle + 1e-7);
    prev_angle = angle;
    std::vector<std::uint8_t> gate{1};
    const auto table = neighborhood_table(map, sched.delta);
    competitive_update(map, patches, bmus, gate, sched, table);
  }
  CHECK(prev_angle < 0.1);  // converged toward normalize(p)
}

TEST_CASE("degenerate renormalization keeps the previous weight") {
  SomMap map;
  map.grid_h = map.grid_w = 1;
  map.dim = 2;
  map.weights = {1.0f, 0.0f};
  PatchGrid patches = grid_from({{-1.0f, 0.0f}});
  BmuMap bmus;
  bmus.indices = {0};
  bmus.scores = {-1.0f};
  std::vector<std::uint8_t> gate{1};
  LearningSchedule sched;
  sched.som_lr = 1.0f;  // w + dw = [1,0] + [-1,0] = 0
  const auto table = neighborhood_table(map, 1.0f);
  UpdateStats st = competitive_update(map, patches, bmus, gate, sched, table);
  CHECK(st.degenerate_renorms == 1);
  CHECK(map.weights[0] == 1.0f);
  CHECK(map.weights[1] == 0.0f);
}
