#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulse/hr.hpp"

namespace pulse::eval {

/// Jointly valid windows of an estimate and its reference, in window order.
struct PairedHr {
  std::vector<double> y;      // reference
  std::vector<double> y_hat;  // estimate

  std::size_t n() const noexcept { return y.size(); }
  void append(const PairedHr& other);
};

struct OutlierStats {
  std::size_t total = 0;
  std::size_t removed = 0;
  double outlier_pct = 0.0;
};

struct OutlierResult {
  std::vector<double> kept;
  OutlierStats stats;
};

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // fraction, not percent
  double mad = 0.0;
  std::size_t n = 0;
};

struct BlandAltmanResult {
  double bias = 0.0;
  double sd_diff = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
};

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;
};

inline constexpr double kOutlierLo = 40.0;
inline constexpr double kOutlierHi = 200.0;

// ECG and PPG clocks can disagree by up to half an ECG sample.
inline constexpr double kGridTolerance_s = 0.01;

/// Throws GridMismatch unless the window timestamps agree within tolerance.
PairedHr pair(const HrSeries& est, const HrSeries& ref);

/// Keeps lo <= v <= hi.
OutlierResult remove_outliers(std::span<const double> values, double lo = kOutlierLo,
                              double hi = kOutlierHi);

/// Same rule applied in place to a series: out-of-range estimates become NaN
/// so the window grid survives. NaN windows are not counted in the total.
OutlierStats gate_outliers(HrSeries& est, double lo = kOutlierLo, double hi = kOutlierHi);

MetricsReport compute_metrics(const PairedHr& p);
BlandAltmanResult bland_altman(const PairedHr& p);
/// OLS fit of y_hat on y.
RegressionFit linear_regression(const PairedHr& p);

struct RecordingPair {
  std::string recording_id;
  HrSeries est;
  HrSeries ref;
};

struct ReportConfig {
  double outlier_lo = kOutlierLo;
  double outlier_hi = kOutlierHi;
  nlohmann::json echo = nlohmann::json::object();  // pipeline settings copied into the report
};

struct RecordingSummary {
  std::string recording_id;
  std::size_t windows = 0;
  std::size_t nan_windows = 0;
  OutlierStats outliers;
  std::size_t n = 0;
  // Absent when the recording has no paired windows (or only one, for the
  // spread-based statistics).
  std::optional<MetricsReport> metrics;
  std::optional<BlandAltmanResult> bland_altman;
};

struct EvaluationReport {
  ReportConfig config;
  OutlierStats outliers;
  PairedHr pooled;
  MetricsReport metrics;
  std::optional<BlandAltmanResult> agreement;
  std::optional<RegressionFit> regression;
  std::vector<RecordingSummary> recordings;
  // Unweighted mean of per-recording metrics, over recordings that have any.
  std::optional<MetricsReport> per_recording_mean;

  nlohmann::json to_json() const;
  std::string scatter_csv() const;
  std::string bland_altman_csv() const;
  /// Writes report.json, scatter.csv and bland_altman.csv into `dir`.
  void write(const std::string& dir) const;
};

/// Throws EmptyCorpus for no recordings, InsufficientData when no window
/// survives pairing.
EvaluationReport evaluation_report(std::vector<RecordingPair> corpus, const ReportConfig& config = {});

/// Rounds to 6 significant digits, the precision every report field uses.
double round_sig6(double v);

}  // namespace pulse::eval
