#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "pulse/error.hpp"
#include "pulse/metrics.hpp"

namespace pulse::eval {

double round_sig6(double v) {
  if (!std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  const double r = std::strtod(buf, nullptr);
  return r == 0.0 ? 0.0 : r;  // no "-0" in reports
}

namespace {

using nlohmann::json;

json number(double v) { return std::isfinite(v) ? json(round_sig6(v)) : json(nullptr); }

json to_json(const OutlierStats& s) {
  return {{"total", s.total}, {"removed", s.removed}, {"outlier_pct", number(s.outlier_pct)}};
}

json to_json(const MetricsReport& m) {
  return {{"n", m.n},
          {"mae", number(m.mae)},
          {"rmse", number(m.rmse)},
          {"mape", number(m.mape)},
          {"mape_pct", number(100.0 * m.mape)},
          {"mad", number(m.mad)}};
}

json to_json(const BlandAltmanResult& b) {
  return {{"bias", number(b.bias)},
          {"sd_diff", number(b.sd_diff)},
          {"loa_low", number(b.loa_low)},
          {"loa_high", number(b.loa_high)}};
}

json to_json(const RegressionFit& f) {
  return {{"slope", number(f.slope)}, {"intercept", number(f.intercept)}, {"r", number(f.r)}};
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? to_json(*v) : json(nullptr);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

}  // namespace

EvaluationReport evaluation_report(std::vector<RecordingPair> corpus, const ReportConfig& config) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "evaluation corpus has no recordings");
  EvaluationReport rep;
  rep.config = config;
  MetricsReport sum;
  std::size_t with_metrics = 0;
  for (RecordingPair& rec : corpus) {
    RecordingSummary s;
    s.recording_id = rec.recording_id;
    s.windows = rec.est.size();
    s.nan_windows = s.windows - rec.est.valid_count();
    s.outliers = gate_outliers(rec.est, config.outlier_lo, config.outlier_hi);
    const PairedHr p = pair(rec.est, rec.ref);
    s.n = p.n();
    if (p.n() >= 1) {
      s.metrics = compute_metrics(p);
      sum.mae += s.metrics->mae;
      sum.rmse += s.metrics->rmse;
      sum.mape += s.metrics->mape;
      sum.mad += s.metrics->mad;
      sum.n += s.metrics->n;
      ++with_metrics;
    }
    if (p.n() >= 2) s.bland_altman = bland_altman(p);
    rep.outliers.total += s.outliers.total;
    rep.outliers.removed += s.outliers.removed;
    rep.pooled.append(p);
    rep.recordings.push_back(std::move(s));
  }
  rep.outliers.outlier_pct = rep.outliers.total == 0 ? 0.0
                                                      : 100.0 * static_cast<double>(rep.outliers.removed) /
                                                            static_cast<double>(rep.outliers.total);
  if (rep.pooled.n() == 0) {
    throw Error(ErrorCode::InsufficientData, "no window has both an estimate and a reference");
  }
  rep.metrics = compute_metrics(rep.pooled);
  if (rep.pooled.n() >= 2) {
    rep.agreement = bland_altman(rep.pooled);
    try {
      rep.regression = linear_regression(rep.pooled);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateFit) throw;
    }
  }
  if (with_metrics > 0) {
    const double k = static_cast<double>(with_metrics);
    sum.mae /= k;
    sum.rmse /= k;
    sum.mape /= k;
    sum.mad /= k;
    rep.per_recording_mean = sum;
  }
  return rep;
}

nlohmann::json EvaluationReport::to_json() const {
  json cfg = config.echo.is_object() ? config.echo : json::object();
  if (!cfg.contains("outlier")) cfg["outlier"] = {{"lo", number(config.outlier_lo)}, {"hi", number(config.outlier_hi)}};

  json pooled_json = eval::to_json(metrics);
  pooled_json["bland_altman"] = optional_json(agreement);
  pooled_json["regression"] = optional_json(regression);

  json per = json::array();
  for (const RecordingSummary& s : recordings) {
    per.push_back({{"recording_id", s.recording_id},
                   {"windows", s.windows},
                   {"nan_windows", s.nan_windows},
                   {"n", s.n},
                   {"outliers", eval::to_json(s.outliers)},
                   {"metrics", optional_json(s.metrics)},
                   {"bland_altman", optional_json(s.bland_altman)}});
  }
  json mean_json = optional_json(per_recording_mean);
  if (mean_json.is_object()) mean_json.erase("n");
  return {{"schema_version", 1},
          {"config", std::move(cfg)},
          {"recording_count", recordings.size()},
          {"outliers", eval::to_json(outliers)},
          {"pooled", std::move(pooled_json)},
          {"per_recording_mean", std::move(mean_json)},
          {"recordings", std::move(per)}};
}

std::string EvaluationReport::scatter_csv() const {
  std::string out = "y,y_hat\n";
  for (std::size_t i = 0; i < pooled.n(); ++i) {
    out += fmt::format("{:.6g},{:.6g}\n", pooled.y[i], pooled.y_hat[i]);
  }
  return out;
}

std::string EvaluationReport::bland_altman_csv() const {
  std::string out = "mean,diff\n";
  for (std::size_t i = 0; i < pooled.n(); ++i) {
    const double m = 0.5 * (pooled.y[i] + pooled.y_hat[i]);
    out += fmt::format("{:.6g},{:.6g}\n", round_sig6(m), round_sig6(pooled.y_hat[i] - pooled.y[i]));
  }
  return out;
}

void EvaluationReport::write(const std::string& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir + ": " + ec.message());
  const std::filesystem::path root(dir);
  write_file(root / "report.json", to_json().dump(2) + "\n");
  write_file(root / "scatter.csv", scatter_csv());
  write_file(root / "bland_altman.csv", bland_altman_csv());
}

}  // namespace pulse::eval
