#include "csnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "csnn/io.hpp"

namespace csnn {

using nlohmann::json;

Orientation orientation_from_string(const std::string& s) {
  if (s == "lower" || s == "lower_better") return Orientation::lower_better;
  if (s == "higher" || s == "higher_better") return Orientation::higher_better;
  throw ConfigError("unknown orientation '" + s + "' (lower|higher)");
}

const char* to_string(Orientation o) {
  return o == Orientation::lower_better ? "lower_better" : "higher_better";
}

void MetricCurve::validate(bool require_step0) const {
  if (steps.size() != values.size())
    throw DataError("curve step/value count mismatch");
  if (steps.empty()) throw DataError("empty metric curve");
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (steps[i] <= steps[i - 1])
      throw DataError("curve steps must be strictly increasing");
  for (double v : values)
    if (!std::isfinite(v)) throw DataError("non-finite curve value");
  if (require_step0 && steps.front() != 0)
    throw DataError("curve requires a step-0 (untrained) measurement");
}

double m3(double m_t, double m_p, Orientation o) {
  return o == Orientation::lower_better ? m_t - m_p : m_p - m_t;
}

std::vector<double> m3_series(const MetricCurve& target,
                              const MetricCurve& pretext) {
  if (target.steps != pretext.steps)
    throw DataError("m3 requires curves aligned on identical steps");
  if (target.orientation != pretext.orientation)
    throw DataError("m3 requires matching orientations");
  std::vector<double> out(target.size());
  for (std::size_t i = 0; i < target.size(); ++i)
    out[i] = m3(target.values[i], pretext.values[i], target.orientation);
  return out;
}

double mm3(const MetricCurve& target, const MetricCurve& pretext) {
  const auto series = m3_series(target, pretext);
  double sum = 0.0;
  for (double v : series) sum += v;
  return sum / static_cast<double>(series.size());
}

std::vector<double> sm3_series(const MetricCurve& target) {
  target.validate();
  std::vector<double> out(target.size());
  double best = target.canonical(0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    best = std::min(best, target.canonical(i));
    out[i] = target.canonical(i) - best;
  }
  return out;
}

double sm3(const MetricCurve& target, std::size_t i) {
  if (i >= target.size()) throw DataError("sm3 index out of range");
  double best = target.canonical(0);
  for (std::size_t j = 0; j <= i; ++j)
    best = std::min(best, target.canonical(j));
  return target.canonical(i) - best;
}

double msm3(const MetricCurve& target) {
  const auto s = sm3_series(target);
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum / static_cast<double>(s.size());
}

double csm3(const MetricCurve& target) {
  return sm3_series(target).back();
}

double msm3_max(const MetricCurve& target) {
  const auto s = sm3_series(target);
  return *std::max_element(s.begin(), s.end());
}

NormalizationContext normalize_context(const MetricCurve& target) {
  target.validate(/*require_step0=*/true);
  NormalizationContext ctx;
  ctx.m1 = target.canonical(0);
  ctx.m_b = ctx.m1;
  ctx.b_index = 0;
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target.canonical(i) < ctx.m_b) {
      ctx.m_b = target.canonical(i);
      ctx.b_index = i;
    }

  if (ctx.m1 > ctx.m_b) {
    ctx.scale = 100.0 / (ctx.m1 - ctx.m_b);
    return ctx;
  }
  // m1 == m_b: either the whole curve is flat (zero mismatch) or some value
  // is worse than the untrained model (infinite mismatch, no interval to
  // normalize with).
  bool any_worse = false;
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target.canonical(i) > ctx.m1) {
      any_worse = true;
      break;
    }
  if (any_worse)
    ctx.infinite = true;
  else
    ctx.all_equal = true;
  return ctx;
}

std::vector<double> normalized_values(const MetricCurve& target,
                                      const NormalizationContext& ctx) {
  std::vector<double> out(target.size(), 0.0);
  if (ctx.scale == 0.0) return out;  // degenerate: all zeros
  for (std::size_t i = 0; i < target.size(); ++i)
    out[i] = ctx.scale * target.canonical(i);
  return out;
}

OfmResult ofm_series(const MetricCurve& target) {
  OfmResult r;
  r.ctx = normalize_context(target);
  const auto raw_sm3 = sm3_series(target);
  r.series.assign(target.size(), 0.0);
  r.is_inf.assign(target.size(), 0);

  if (r.ctx.all_equal) {
    r.c_ofm = MetricValue::of(0.0);
    r.m_ofm = MetricValue::of(0.0);
    r.mofm = MetricValue::of(0.0);
    return r;
  }
  if (r.ctx.infinite) {
    // Infinite mismatch as soon as any value falls behind the running best.
    bool any = false;
    for (std::size_t i = 0; i < target.size(); ++i)
      if (raw_sm3[i] > 0.0) {
        r.is_inf[i] = 1;
        any = true;
      }
    r.c_ofm = raw_sm3.back() > 0.0 ? MetricValue::inf() : MetricValue::of(0.0);
    r.m_ofm = any ? MetricValue::inf() : MetricValue::of(0.0);
    r.mofm = any ? MetricValue::inf() : MetricValue::of(0.0);
    return r;
  }

  // SM3 commutes with the positive affine normalization up to the scale:
  // OFM(i) = 100 * sm3(m_i) / (m1 - m_b).
  for (std::size_t i = 0; i < target.size(); ++i)
    r.series[i] = r.ctx.scale * raw_sm3[i];
  r.c_ofm = MetricValue::of(r.series.back());
  r.m_ofm = MetricValue::of(*std::max_element(r.series.begin(), r.series.end()));
  double sum = 0.0;
  for (double v : r.series) sum += v;
  r.mofm = MetricValue::of(sum / static_cast<double>(r.series.size()));
  return r;
}

MetricCurve interpolate(const MetricCurve& curve,
                        std::span<const std::uint64_t> query_steps) {
  curve.validate();
  MetricCurve out;
  out.orientation = curve.orientation;
  out.name = curve.name;
  for (std::uint64_t q : query_steps) {
    if (q < curve.steps.front() || q > curve.steps.back())
      throw DataError("interpolation query " + std::to_string(q) +
                      " outside measured range [" +
                      std::to_string(curve.steps.front()) + ", " +
                      std::to_string(curve.steps.back()) + "]");
    const auto it =
        std::lower_bound(curve.steps.begin(), curve.steps.end(), q);
    const std::size_t hi = static_cast<std::size_t>(it - curve.steps.begin());
    double v;
    if (curve.steps[hi] == q) {
      v = curve.values[hi];  // measured steps return exactly
    } else {
      const std::size_t lo = hi - 1;
      const double t = static_cast<double>(q - curve.steps[lo]) /
                       static_cast<double>(curve.steps[hi] - curve.steps[lo]);
      v = curve.values[lo] + t * (curve.values[hi] - curve.values[lo]);
    }
    out.steps.push_back(q);
    out.values.push_back(v);
  }
  return out;
}

ConvergenceResult convergence_step(const MetricCurve& curve,
                                   std::size_t patience, double min_delta,
                                   ConvergenceMode mode) {
  curve.validate();
  ConvergenceResult res;
  double best = curve.canonical(0);
  std::size_t best_index = 0;
  std::size_t wait = 0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (i > 0) {
      if (curve.canonical(i) < best - min_delta) {
        best = curve.canonical(i);
        best_index = i;
        wait = 0;
      } else {
        ++wait;
      }
    }
    if (wait >= patience) {
      res.converged = true;
      res.index = mode == ConvergenceMode::best ? best_index : i;
      res.step = curve.steps[res.index];
      return res;
    }
  }
  res.converged = false;
  res.index = curve.size() - 1;
  res.step = curve.steps.back();
  return res;
}

MetricCurve fold_aggregate(const std::vector<MetricCurve>& curves) {
  if (curves.empty()) throw DataError("fold_aggregate: no curves");
  const MetricCurve& first = curves[0];
  first.validate();
  for (const auto& c : curves) {
    if (c.steps != first.steps)
      throw DataError("fold_aggregate requires identical step grids "
                      "(interpolate first)");
    if (c.orientation != first.orientation)
      throw DataError("fold_aggregate requires matching orientations");
  }
  MetricCurve mean;
  mean.steps = first.steps;
  mean.orientation = first.orientation;
  mean.name = first.name;
  mean.values.assign(first.size(), 0.0);
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.size(); ++i) mean.values[i] += c.values[i];
  for (double& v : mean.values) v /= static_cast<double>(curves.size());
  return mean;
}

MetricCurve load_curve(const std::filesystem::path& file,
                       std::optional<Orientation> orientation) {
  MetricCurve curve;
  curve.name = file.stem().string();

  std::filesystem::path manifest = file;
  manifest += ".manifest.json";
  if (std::filesystem::exists(manifest)) {
    const json m = json::parse(read_text_file(manifest));
    if (m.contains("orientation") && !orientation)
      orientation = orientation_from_string(m["orientation"].get<std::string>());
    if (m.contains("metric")) curve.name = m["metric"].get<std::string>();
  }
  if (orientation) curve.orientation = *orientation;

  const std::string text = read_text_file(file);
  std::istringstream in(text);
  std::string line;
  const bool jsonl = file.extension() == ".jsonl";
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Trim.
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (line.empty()) continue;
    try {
      if (jsonl) {
        const json row = json::parse(line);
        curve.steps.push_back(row.at("step").get<std::uint64_t>());
        curve.values.push_back(row.at("value").get<double>());
      } else {
        const auto comma = line.find(',');
        if (comma == std::string::npos)
          throw DataError("expected 'step,value'");
        const std::string a = line.substr(0, comma);
        const std::string b = line.substr(comma + 1);
        if (lineno == 1 && (a == "step" || a == "epoch")) continue;  // header
        curve.steps.push_back(std::stoull(a));
        curve.values.push_back(std::stod(b));
      }
    } catch (const std::exception& e) {
      throw DataError("malformed curve file " + file.string() + " line " +
                      std::to_string(lineno) + ": " + e.what());
    }
  }
  curve.validate();
  return curve;
}

void save_curve_csv(const MetricCurve& curve,
                    const std::filesystem::path& file) {
  std::ostringstream out;
  out << "step,value\n";
  out.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i)
    out << curve.steps[i] << "," << curve.values[i] << "\n";
  write_file_atomic(file, out.str());

  json manifest;
  manifest["orientation"] = to_string(curve.orientation);
  manifest["metric"] = curve.name;
  std::filesystem::path mpath = file;
  mpath += ".manifest.json";
  write_file_atomic(mpath, manifest.dump(2) + "\n");
}

void MismatchReport::check_invariants() const {
  if (!(msm3_max_value + 1e-12 >= csm3_value) || csm3_value < -1e-12)
    throw InvariantError("report invariant mSM3 >= cSM3 >= 0 violated");
  if (ofm.m_ofm.finite && ofm.c_ofm.finite &&
      !(ofm.m_ofm.value + 1e-12 >= ofm.c_ofm.value))
    throw InvariantError("report invariant mOFM >= cOFM violated");
  if (!ofm.m_ofm.finite && ofm.c_ofm.finite && ofm.c_ofm.value > 0.0)
    throw InvariantError("finite cOFM > 0 with infinite mOFM");
}

MismatchReport compute_report(const MetricCurve& target,
                              const std::optional<MetricCurve>& pretext,
                              const ReportOptions& options) {
  target.validate();
  MismatchReport report;
  report.options = options;

  MetricCurve t = target;
  std::optional<MetricCurve> p;

  if (pretext) {
    pretext->validate();
    // Union grid over the overlap, interpolating the sparser measurements.
    const std::uint64_t lo = std::max(target.steps.front(),
                                      pretext->steps.front());
    const std::uint64_t hi = std::min(target.steps.back(),
                                      pretext->steps.back());
    if (lo > hi) throw DataError("target and pretext curves do not overlap");
    std::vector<std::uint64_t> grid;
    for (std::uint64_t s : target.steps)
      if (s >= lo && s <= hi) grid.push_back(s);
    for (std::uint64_t s : pretext->steps)
      if (s >= lo && s <= hi) grid.push_back(s);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    t = interpolate(target, grid);
    p = interpolate(*pretext, grid);

    // Convergence criterion runs on the pretext curve's own measurements.
    report.convergence = convergence_step(*pretext, options.patience,
                                          options.min_delta,
                                          options.convergence_mode);
    report.convergence_applied = true;
    const std::uint64_t n_step = report.convergence.step;
    if (n_step >= lo && n_step <= hi) {
      std::size_t keep = 0;
      while (keep < grid.size() && grid[keep] <= n_step) ++keep;
      t.steps.resize(keep);
      t.values.resize(keep);
      p->steps.resize(keep);
      p->values.resize(keep);
    }
  }

  report.target = t;
  report.pretext = p;

  if (p) {
    report.m3_values = m3_series(t, *p);
    report.mm3_value = mm3(t, *p);
  }
  report.sm3_values = sm3_series(t);
  report.msm3_value = msm3(t);
  report.csm3_value = csm3(t);
  report.msm3_max_value = msm3_max(t);
  if (t.steps.front() == 0) report.ofm = ofm_series(t);

  report.check_invariants();
  return report;
}

namespace {

json metric_value_json(const MetricValue& v) {
  json out;
  out["finite"] = v.finite;
  if (v.finite) out["value"] = v.value;
  return out;
}

}  // namespace

std::string report_to_json(const MismatchReport& report) {
  json j;
  j["target"] = {{"name", report.target.name},
                 {"orientation", to_string(report.target.orientation)},
                 {"steps", report.target.steps},
                 {"values", report.target.values}};
  if (report.pretext)
    j["pretext"] = {{"name", report.pretext->name},
                    {"orientation", to_string(report.pretext->orientation)},
                    {"steps", report.pretext->steps},
                    {"values", report.pretext->values}};
  if (report.convergence_applied) {
    j["convergence"] = {{"step", report.convergence.step},
                        {"index", report.convergence.index},
                        {"converged", report.convergence.converged},
                        {"patience", report.options.patience},
                        {"min_delta", report.options.min_delta},
                        {"mode", report.options.convergence_mode ==
                                         ConvergenceMode::best
                                     ? "best"
                                     : "trigger"}};
  }
  if (report.mm3_value) {
    j["M3"] = report.m3_values;
    j["MM3"] = *report.mm3_value;
  }
  j["SM3"] = report.sm3_values;
  j["MSM3"] = report.msm3_value;
  j["cSM3"] = report.csm3_value;
  j["mSM3"] = report.msm3_max_value;
  if (report.target.steps.front() == 0) {
    j["OFM"] = report.ofm.series;
    j["OFM_infinite_steps"] = report.ofm.is_inf;
    j["cOFM"] = metric_value_json(report.ofm.c_ofm);
    j["mOFM"] = metric_value_json(report.ofm.m_ofm);
    j["MOFM"] = metric_value_json(report.ofm.mofm);
    j["normalization"] = {{"m1", report.ofm.ctx.m1},
                          {"m_b", report.ofm.ctx.m_b},
                          {"b_index", report.ofm.ctx.b_index},
                          {"all_equal", report.ofm.ctx.all_equal},
                          {"infinite", report.ofm.ctx.infinite}};
  }
  j["fold_count"] = report.options.fold_count;
  return j.dump(2) + "\n";
}

std::string report_to_plot_tsv(const MismatchReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "step\ttarget";
  if (report.pretext) out << "\tpretext\tm3";
  out << "\tsm3";
  const bool have_ofm = report.target.steps.front() == 0;
  if (have_ofm) out << "\tofm";
  out << "\n";
  for (std::size_t i = 0; i < report.target.size(); ++i) {
    out << report.target.steps[i] << "\t" << report.target.values[i];
    if (report.pretext)
      out << "\t" << report.pretext->values[i] << "\t" << report.m3_values[i];
    out << "\t" << report.sm3_values[i];
    if (have_ofm) {
      if (report.ofm.is_inf[i])
        out << "\tinf";
      else
        out << "\t" << report.ofm.series[i];
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace csnn
