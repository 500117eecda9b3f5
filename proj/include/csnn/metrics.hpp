#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csnn/common.hpp"

namespace csnn {

enum class Orientation : std::uint8_t { lower_better, higher_better };

Orientation orientation_from_string(const std::string& s);
const char* to_string(Orientation o);

/// A measured metric over training: strictly increasing steps with paired
/// values. Step 0 (the untrained model) is required for OFM normalization.
struct MetricCurve {
  std::vector<std::uint64_t> steps;
  std::vector<double> values;
  Orientation orientation = Orientation::lower_better;
  std::string name;

  std::size_t size() const { return steps.size(); }
  void validate(bool require_step0 = false) const;

  // Canonical lower-better value at index i (higher-better negated).
  double canonical(std::size_t i) const {
    return orientation == Orientation::lower_better ? values[i] : -values[i];
  }
};

/// Hard mismatch at one step: positive means the target is worse than the
/// pretext. Subtraction order flips with the orientation.
double m3(double m_t, double m_p, Orientation o);

/// Mean hard mismatch over aligned curves (mean bias error).
double mm3(const MetricCurve& target, const MetricCurve& pretext);

std::vector<double> m3_series(const MetricCurve& target,
                              const MetricCurve& pretext);

/// Soft mismatch against the running best target value. All values are
/// >= 0; the orientation is handled via the canonical transform.
std::vector<double> sm3_series(const MetricCurve& target);
double sm3(const MetricCurve& target, std::size_t i);  // 0-based index
double msm3(const MetricCurve& target);      // mean over steps
double csm3(const MetricCurve& target);      // value at the last step
double msm3_max(const MetricCurve& target);  // maximum over steps

/// Percentage normalization anchors: m1 the step-0 value, m_b the best
/// (canonical minimum) value, scale 100/(m1-m_b) when well defined.
struct NormalizationContext {
  double m1 = 0.0;
  double m_b = 0.0;
  std::size_t b_index = 0;
  double scale = 0.0;       // canonical space
  bool all_equal = false;   // constant curve: OFM identically zero
  bool infinite = false;    // m1 == m_b but some value is worse than m1
};

NormalizationContext normalize_context(const MetricCurve& target);

/// Values mapped through N(x) in canonical space (finite case only).
std::vector<double> normalized_values(const MetricCurve& target,
                                      const NormalizationContext& ctx);

/// An aggregate that may be infinite; never a float sentinel.
struct MetricValue {
  bool finite = true;
  double value = 0.0;

  static MetricValue inf() { return {false, 0.0}; }
  static MetricValue of(double v) { return {true, v}; }
};

struct OfmResult {
  NormalizationContext ctx;
  std::vector<double> series;          // per-step OFM when finite, else 0
  std::vector<std::uint8_t> is_inf;    // per-step infinite markers
  MetricValue c_ofm;   // at the last step
  MetricValue m_ofm;   // maximum
  MetricValue mofm;    // mean
};

OfmResult ofm_series(const MetricCurve& target);

/// Piecewise-linear interpolation onto the query grid; measured steps are
/// returned exactly; queries outside [s1, sn] are an error.
MetricCurve interpolate(const MetricCurve& curve,
                        std::span<const std::uint64_t> query_steps);

enum class ConvergenceMode : std::uint8_t { best, trigger };

struct ConvergenceResult {
  std::uint64_t step = 0;    // selected per mode
  std::size_t index = 0;     // 0-based position in the curve
  bool converged = false;    // patience ever triggered
};

/// Early-stopping scan: when `patience` consecutive measurements fail to
/// improve on the running best by more than `min_delta`, the criterion
/// triggers; `best` mode returns the best value's step (the restored
/// model), `trigger` the step where patience ran out. Never triggered:
/// the last step with converged = false.
ConvergenceResult convergence_step(const MetricCurve& curve,
                                   std::size_t patience, double min_delta,
                                   ConvergenceMode mode = ConvergenceMode::best);

/// Pointwise mean of h curves on identical step grids.
MetricCurve fold_aggregate(const std::vector<MetricCurve>& curves);

// ---- ingestion & reporting ----

/// CSV rows `step,value` (optional header) or JSONL lines
/// {"step":...,"value":...}. A sidecar `<file>.manifest.json` may carry
/// {"orientation":..., "metric":..., "fold":...}; an explicit orientation
/// argument overrides it.
MetricCurve load_curve(const std::filesystem::path& file,
                       std::optional<Orientation> orientation = {});

void save_curve_csv(const MetricCurve& curve,
                    const std::filesystem::path& file);

struct ReportOptions {
  std::size_t patience = 3;
  double min_delta = 0.0;
  ConvergenceMode convergence_mode = ConvergenceMode::best;
  std::size_t fold_count = 1;
};

struct MismatchReport {
  MetricCurve target;                 // on the final aligned/truncated grid
  std::optional<MetricCurve> pretext;
  ConvergenceResult convergence;
  bool convergence_applied = false;
  std::vector<double> m3_values;      // empty without a pretext curve
  std::optional<double> mm3_value;
  std::vector<double> sm3_values;
  double msm3_value = 0.0;
  double csm3_value = 0.0;
  double msm3_max_value = 0.0;
  OfmResult ofm;
  ReportOptions options;

  void check_invariants() const;  // mSM3 >= cSM3 >= 0, mOFM >= cOFM >= 0
};

/// Full pipeline: align target and pretext on the union step grid (linear
/// interpolation of the sparser curve), find the pretext convergence step,
/// truncate both curves there, then compute every hard and soft mismatch.
MismatchReport compute_report(const MetricCurve& target,
                              const std::optional<MetricCurve>& pretext,
                              const ReportOptions& options);

std::string report_to_json(const MismatchReport& report);
std::string report_to_plot_tsv(const MismatchReport& report);

}  // namespace csnn
