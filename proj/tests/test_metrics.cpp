#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "csnn/io.hpp"
#include "csnn/metrics.hpp"
#include "csnn/rng.hpp"

using namespace csnn;

namespace {

MetricCurve curve(std::vector<double> values,
                  Orientation o = Orientation::lower_better) {
  MetricCurve c;
  c.values = std::move(values);
  c.steps.resize(c.values.size());
  for (std::size_t i = 0; i < c.steps.size(); ++i) c.steps[i] = i;
  c.orientation = o;
  return c;
}

}  // namespace

TEST_CASE("m3 sign conventions") {
  CHECK(m3(30, 20, Orientation::lower_better) == 10);
  CHECK(m3(5, 5, Orientation::lower_better) == 0);
  // higher-better accuracy: target 80 vs pretext 50 -> -30 (target better)
  CHECK(m3(80, 50, Orientation::higher_better) == -30);
}

TEST_CASE("mm3") {
  CHECK(mm3(curve({3, 2}), curve({1, 1})) == doctest::Approx(1.5));
  CHECK(mm3(curve({4, 7, 1}), curve({4, 7, 1})) == 0.0);
  // sign cancellation: M3 = [+2, -2] -> 0
  CHECK(mm3(curve({3, 1}), curve({1, 3})) == doctest::Approx(0.0));

  MetricCurve misaligned = curve({1, 2});
  misaligned.steps = {0, 5};
  CHECK_THROWS_AS(mm3(curve({1, 2}), misaligned), DataError);
}

TEST_CASE("sm3 family hand values") {
  // monotone improving: everything zero
  const MetricCurve mono = curve({5, 4, 3, 2});
  for (double v : sm3_series(mono)) CHECK(v == 0.0);
  CHECK(msm3(mono) == 0.0);
  CHECK(csm3(mono) == 0.0);
  CHECK(msm3_max(mono) == 0.0);

  // [5,3,4]: series [0,0,1]; mean 1/3; last 1; max 1
  const MetricCurve c = curve({5, 3, 4});
  CHECK(sm3_series(c) == std::vector<double>{0, 0, 1});
  CHECK(sm3(c, 2) == 1.0);
  CHECK(msm3(c) == doctest::Approx(1.0 / 3.0));
  CHECK(csm3(c) == 1.0);
  CHECK(msm3_max(c) == 1.0);

  // single-point curve: all zero
  const MetricCurve single = curve({7});
  CHECK(msm3(single) == 0.0);
  CHECK(csm3(single) == 0.0);

  // higher-better orientation uses the running max
  const MetricCurve acc = curve({10, 30, 20}, Orientation::higher_better);
  CHECK(sm3_series(acc) == std::vector<double>{0, 0, 10});
}

TEST_CASE("sm3-based metrics are order-sensitive") {
  const MetricCurve a = curve({5, 3, 4, 2});
  const MetricCurve b = curve({2, 3, 4, 5});  // same multiset, shuffled
  CHECK(msm3(a) != msm3(b));
}

TEST_CASE("normalization hand values") {
  // [10,6,5,7]: scale 20/unit -> [200,120,100,140]
  const MetricCurve c = curve({10, 6, 5, 7});
  const auto ctx = normalize_context(c);
  CHECK(ctx.m1 == 10.0);
  CHECK(ctx.m_b == 5.0);
  CHECK(ctx.b_index == 2);
  CHECK(ctx.scale == doctest::Approx(20.0));
  CHECK(normalized_values(c, ctx) ==
        std::vector<double>{200, 120, 100, 140});

  // constant curve: all_equal
  const auto flat = normalize_context(curve({4, 4, 4}));
  CHECK(flat.all_equal);
  CHECK_FALSE(flat.infinite);

  // [5,5,6]: infinite flag
  const auto inf = normalize_context(curve({5, 5, 6}));
  CHECK(inf.infinite);

  MetricCurve no_zero = curve({3, 2});
  no_zero.steps = {5, 6};
  CHECK_THROWS_AS(normalize_context(no_zero), DataError);
}

TEST_CASE("ofm hand values") {
  // [10,6,5,7]: OFM [0,0,0,40]; cOFM 40; mOFM 40; MOFM 10
  const OfmResult r = ofm_series(curve({10, 6, 5, 7}));
  CHECK(r.series == std::vector<double>{0, 0, 0, 40});
  REQUIRE(r.c_ofm.finite);
  CHECK(r.c_ofm.value == doctest::Approx(40.0));
  REQUIRE(r.m_ofm.finite);
  CHECK(r.m_ofm.value == doctest::Approx(40.0));
  REQUIRE(r.mofm.finite);
  CHECK(r.mofm.value == doctest::Approx(10.0));

  // monotone improving: all zero
  const OfmResult mono = ofm_series(curve({9, 7, 5, 3}));
  for (double v : mono.series) CHECK(v == 0.0);
  CHECK(mono.mofm.value == 0.0);

  // [5,5,6]: MOFM infinite
  const OfmResult inf = ofm_series(curve({5, 5, 6}));
  CHECK_FALSE(inf.mofm.finite);
  CHECK_FALSE(inf.c_ofm.finite);
  CHECK(inf.is_inf == std::vector<std::uint8_t>{0, 0, 1});

  // constant curve: identically zero
  const OfmResult flat = ofm_series(curve({4, 4, 4}));
  CHECK(flat.mofm.finite);
  CHECK(flat.mofm.value == 0.0);

  // OFM > 100 iff the value is worse than the untrained m1
  const OfmResult worse = ofm_series(curve({10, 5, 12}));
  CHECK(worse.series[2] > 100.0);
  const MetricCurve src = curve({10, 5, 12});
  for (std::size_t i = 0; i < 3; ++i)
    CHECK((worse.series[i] > 100.0) == (src.values[i] > 10.0));
}

TEST_CASE("ofm affine identity on random curves") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vals(2 + rng.below(20));
    for (auto& v : vals) v = rng.uniform(0.0, 10.0);
    vals[0] = 11.0;  // ensure m1 > m_b
    const MetricCurve c = curve(vals);
    const auto r = ofm_series(c);
    const auto s = sm3_series(c);
    const auto ctx = normalize_context(c);
    for (std::size_t i = 0; i < vals.size(); ++i)
      CHECK(r.series[i] == doctest::Approx(ctx.scale * s[i]).epsilon(1e-9));
  }
}

TEST_CASE("interpolation") {
  MetricCurve c;
  c.steps = {0, 10};
  c.values = {0, 100};
  const std::vector<std::uint64_t> q{5};
  const MetricCurve r = interpolate(c, q);
  CHECK(r.values[0] == doctest::Approx(50.0));

  // measured step returns exactly
  const std::vector<std::uint64_t> at{10};
  CHECK(interpolate(c, at).values[0] == 100.0);

  // dense then subsample round-trip
  MetricCurve wav;
  wav.steps = {0, 3, 7, 20};
  wav.values = {1.0, -2.0, 5.5, 0.25};
  std::vector<std::uint64_t> dense;
  for (std::uint64_t s = 0; s <= 20; ++s) dense.push_back(s);
  const MetricCurve d = interpolate(wav, dense);
  const MetricCurve back = interpolate(d, wav.steps);
  for (std::size_t i = 0; i < wav.size(); ++i)
    CHECK(std::abs(back.values[i] - wav.values[i]) < 1e-12);

  const std::vector<std::uint64_t> outside{21};
  CHECK_THROWS_AS(interpolate(wav, outside), DataError);
}

TEST_CASE("convergence step") {
  // [5,4,4,4,4] patience 3 -> the best value's step (first 4, index 1)
  const MetricCurve c = curve({5, 4, 4, 4, 4});
  const auto r = convergence_step(c, 3, 0.0);
  CHECK(r.converged);
  CHECK(r.index == 1);
  CHECK(r.step == 1);

  // trigger mode returns the step where patience ran out
  const auto t = convergence_step(c, 3, 0.0, ConvergenceMode::trigger);
  CHECK(t.index == 4);

  // strictly improving: never converges, returns last step
  const auto s = convergence_step(curve({5, 4, 3, 2, 1}), 3, 0.0);
  CHECK_FALSE(s.converged);
  CHECK(s.index == 4);

  // patience 0: first measurement
  const auto z = convergence_step(c, 0, 0.0);
  CHECK(z.converged);
  CHECK(z.index == 0);

  // higher-better orientation
  const auto hb = convergence_step(
      curve({1, 5, 5, 5, 5}, Orientation::higher_better), 3, 0.0);
  CHECK(hb.converged);
  CHECK(hb.index == 1);
}

TEST_CASE("fold aggregation and the B.1 propositions") {
  // identical folds: same curve back
  const MetricCurve c = curve({3, 1, 2});
  const MetricCurve mean = fold_aggregate({c, c, c});
  CHECK(mean.values == c.values);

  // misaligned grids rejected
  MetricCurve other = curve({1, 2, 3});
  other.steps = {0, 2, 4};
  CHECK_THROWS_AS(fold_aggregate({c, other}), DataError);

  // Prop B.1.1: MM3(mean curves) == mean of per-fold MM3 (<= 1e-9), and
  // Prop B.1.3: MSM3(mean curve) <= mean of per-fold MSM3; both over 200
  // randomized fold sets with at least one strict-inequality witness.
  Rng rng(7);
  bool strict_witness = false;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    const std::size_t h = 2 + rng.below(9);
    std::vector<MetricCurve> targets, pretexts;
    for (std::size_t f = 0; f < h; ++f) {
      std::vector<double> tv(n), pv(n);
      for (auto& v : tv) v = rng.uniform(0.0, 10.0);
      for (auto& v : pv) v = rng.uniform(0.0, 10.0);
      targets.push_back(curve(std::move(tv)));
      pretexts.push_back(curve(std::move(pv)));
    }
    const MetricCurve mt = fold_aggregate(targets);
    const MetricCurve mp = fold_aggregate(pretexts);

    double mm3_mean = 0.0, msm3_mean = 0.0;
    for (std::size_t f = 0; f < h; ++f) {
      mm3_mean += mm3(targets[f], pretexts[f]);
      msm3_mean += msm3(targets[f]);
    }
    mm3_mean /= static_cast<double>(h);
    msm3_mean /= static_cast<double>(h);

    CHECK(std::abs(mm3(mt, mp) - mm3_mean) <= 1e-9);
    CHECK(msm3(mt) <= msm3_mean + 1e-12);
    if (msm3(mt) < msm3_mean - 1e-9) strict_witness = true;
  }
  CHECK(strict_witness);

  // equality when every fold shares the same running-min index sequence
  std::vector<MetricCurve> shifted;
  for (int f = 0; f < 4; ++f)
    shifted.push_back(curve({9.0 + f, 4.0 + f, 6.0 + f, 2.0 + f}));
  double mean_msm3 = 0.0;
  for (const auto& s : shifted) mean_msm3 += msm3(s);
  mean_msm3 /= 4.0;
  CHECK(msm3(fold_aggregate(shifted)) == doctest::Approx(mean_msm3));
}

TEST_CASE("curve file round trip and report pipeline") {
  const auto dir = std::filesystem::temp_directory_path() / "csnn_metrics";
  std::filesystem::create_directories(dir);

  MetricCurve c = curve({10, 6, 5, 7});
  c.name = "toy_loss";
  save_curve_csv(c, dir / "toy.csv");
  const MetricCurve back = load_curve(dir / "toy.csv");
  CHECK(back.steps == c.steps);
  CHECK(back.values == c.values);
  CHECK(back.orientation == Orientation::lower_better);  // via manifest

  // JSONL ingestion
  write_file_atomic(dir / "toy.jsonl",
                    std::string("{\"step\":0,\"value\":10}\n"
                                "{\"step\":1,\"value\":6}\n"
                                "{\"step\":2,\"value\":5}\n"
                                "{\"step\":3,\"value\":7}\n"));
  const MetricCurve jl =
      load_curve(dir / "toy.jsonl", Orientation::lower_better);
  CHECK(jl.values == c.values);

  // malformed file
  write_file_atomic(dir / "bad.csv", std::string("step,value\nx,y\n"));
  CHECK_THROWS_AS(load_curve(dir / "bad.csv"), DataError);

  // full report with a pretext curve: convergence truncation applies
  MetricCurve pretext = curve({8, 6, 5, 5, 5, 5});
  MetricCurve target = curve({10, 6, 5, 7, 8, 9});
  ReportOptions opts;
  const MismatchReport rep = compute_report(target, pretext, opts);
  CHECK(rep.convergence_applied);
  // pretext best at index 2, patience 3 triggers at index 5 -> step 2
  CHECK(rep.convergence.step == 2);
  CHECK(rep.target.steps.back() == 2);
  CHECK(rep.mm3_value.has_value());
  rep.check_invariants();

  const std::string js = report_to_json(rep);
  CHECK(js.find("\"MM3\"") != std::string::npos);
  const std::string tsv = report_to_plot_tsv(rep);
  CHECK(tsv.find("step\ttarget") == 0);
}

TEST_CASE("report invariants on 1000 random curves") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> vals(1 + rng.below(30));
    for (auto& v : vals) v = rng.uniform(-5.0, 5.0);
    const MetricCurve c = curve(std::move(vals));
    const double cs = csm3(c);
    const double mx = msm3_max(c);
    const double mn = msm3(c);
    CHECK(cs >= 0.0);
    CHECK(mx >= cs);
    CHECK(mn >= 0.0);
    CHECK(mx >= mn);
  }
}
