#include <algorithm>
#include <cmath>
#include <limits>

#include "pulse/error.hpp"
#include "pulse/kernels.hpp"
#include "pulse/metrics.hpp"

namespace pulse::eval {

void PairedHr::append(const PairedHr& other) {
  y.insert(y.end(), other.y.begin(), other.y.end());
  y_hat.insert(y_hat.end(), other.y_hat.begin(), other.y_hat.end());
}

PairedHr pair(const HrSeries& est, const HrSeries& ref) {
  bool same = est.size() == ref.size() && est.window_start_s.size() == ref.window_start_s.size();
  for (std::size_t i = 0; same && i < est.window_start_s.size(); ++i) {
    same = std::fabs(est.window_start_s[i] - ref.window_start_s[i]) <= kGridTolerance_s;
  }
  if (!same) {
    throw Error(ErrorCode::GridMismatch, "estimate and reference use different window grids",
                {{"est_windows", est.size()}, {"ref_windows", ref.size()}});
  }
  PairedHr p;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (std::isnan(est.bpm[i]) || std::isnan(ref.bpm[i])) continue;
    p.y.push_back(ref.bpm[i]);
    p.y_hat.push_back(est.bpm[i]);
  }
  return p;
}

namespace {

double percent(std::size_t removed, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(removed) / static_cast<double>(total);
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

void require_pairs(const PairedHr& p, std::size_t min_n, const char* what) {
  if (p.y.size() != p.y_hat.size()) {
    throw Error(ErrorCode::InvalidArgument, "paired arrays differ in length");
  }
  if (p.n() < min_n) {
    throw Error(ErrorCode::InsufficientData, std::string(what) + " needs at least " +
                                                 std::to_string(min_n) + " pairs",
                {{"n", p.n()}});
  }
}

double mean(std::span<const double> x) { return kernels::sum(x) / static_cast<double>(x.size()); }

}  // namespace

OutlierResult remove_outliers(std::span<const double> values, double lo, double hi) {
  OutlierResult out;
  out.kept.reserve(values.size());
  for (double v : values) {
    if (v >= lo && v <= hi) out.kept.push_back(v);
  }
  out.stats.total = values.size();
  out.stats.removed = values.size() - out.kept.size();
  out.stats.outlier_pct = percent(out.stats.removed, out.stats.total);
  return out;
}

OutlierStats gate_outliers(HrSeries& est, double lo, double hi) {
  OutlierStats s;
  for (double& v : est.bpm) {
    if (std::isnan(v)) continue;
    ++s.total;
    if (v < lo || v > hi) {
      v = std::numeric_limits<double>::quiet_NaN();
      ++s.removed;
    }
  }
  s.outlier_pct = percent(s.removed, s.total);
  return s;
}

MetricsReport compute_metrics(const PairedHr& p) {
  require_pairs(p, 1, "error metrics");
  const std::size_t n = p.n();
  double ape = 0.0;
  std::vector<double> abs_err(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (p.y[i] == 0.0) {
      throw Error(ErrorCode::ZeroReference, "reference HR of zero makes MAPE undefined", {{"index", i}});
    }
    abs_err[i] = std::fabs(p.y[i] - p.y_hat[i]);
    ape += abs_err[i] / std::fabs(p.y[i]);
  }
  const double dn = static_cast<double>(n);
  MetricsReport m;
  m.n = n;
  m.mae = kernels::sum_abs_diff(p.y, p.y_hat) / dn;
  m.rmse = std::sqrt(kernels::sum_sq_diff(p.y, p.y_hat) / dn);
  m.mape = ape / dn;
  m.mad = median(std::move(abs_err));
  return m;
}

BlandAltmanResult bland_altman(const PairedHr& p) {
  require_pairs(p, 2, "Bland-Altman analysis");
  const std::size_t n = p.n();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = p.y_hat[i] - p.y[i];
  BlandAltmanResult r;
  r.bias = mean(d);
  const std::vector<double> bias(n, r.bias);
  r.sd_diff = std::sqrt(kernels::sum_sq_diff(d, bias) / static_cast<double>(n - 1));
  r.loa_low = r.bias - 1.96 * r.sd_diff;
  r.loa_high = r.bias + 1.96 * r.sd_diff;
  return r;
}

RegressionFit linear_regression(const PairedHr& p) {
  require_pairs(p, 2, "linear regression");
  const std::size_t n = p.n();
  const double mx = mean(p.y);
  const double my = mean(p.y_hat);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = p.y[i] - mx;
    const double dy = p.y_hat[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0)) {
    throw Error(ErrorCode::DegenerateFit, "reference HR has zero variance", {{"n", n}});
  }
  RegressionFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  // A constant estimate has no linear association with the reference.
  f.r = syy > 0.0 ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;
  return f;
}

}  // namespace pulse::eval
