#include "pulse/agent/tasks.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "pulse/error.hpp"

namespace pulse::agent {

using nlohmann::json;

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::TIMESERIES_REF: return "TIMESERIES_REF";
    case ValueKind::HR_SERIES: return "HR_SERIES";
    case ValueKind::SCALAR: return "SCALAR";
    case ValueKind::TEXT: return "TEXT";
    case ValueKind::ERROR: return "ERROR";
  }
  return "TEXT";
}

const DataPipeEntry& DataPipe::put(DataPipeEntry entry) {
  entry.key = fmt::format("dp{}", entries_.size() + 1);
  auto owned = std::make_unique<DataPipeEntry>(std::move(entry));
  const DataPipeEntry* raw = owned.get();
  index_.emplace(raw->key, raw);
  entries_.push_back(std::move(owned));
  return *raw;
}

const DataPipeEntry& DataPipe::get(std::string_view key) const {
  const auto it = index_.find(key);
  if (it == index_.end()) {
    throw Error(ErrorCode::UnboundReference, fmt::format("datapipe has no entry '{}'", key));
  }
  return *it->second;
}

bool DataPipe::contains(std::string_view key) const { return index_.find(key) != index_.end(); }

std::string TaskArgs::string(const std::string& name) const {
  const auto it = literals.find(name);
  if (it == literals.end() || !it->is_string()) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("argument '{}' must be a string", name));
  }
  return it->get<std::string>();
}

const DataPipeEntry& TaskArgs::ref(const std::string& name) const {
  const auto it = refs.find(name);
  if (it == refs.end() || it->second == nullptr) {
    throw Error(ErrorCode::UnboundReference, fmt::format("argument '{}' is not bound", name));
  }
  return *it->second;
}

void TaskRegistry::add(TaskSpec spec, TaskFn fn) {
  if (find(spec.name) != nullptr) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("task '{}' is already registered", spec.name));
  }
  fns_.emplace(spec.name, std::move(fn));
  specs_.push_back(std::move(spec));
}

const TaskSpec* TaskRegistry::find(std::string_view name) const {
  for (const TaskSpec& s : specs_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const TaskFn& TaskRegistry::function(std::string_view name) const {
  const auto it = fns_.find(name);
  if (it == fns_.end()) throw Error(ErrorCode::UnknownTask, fmt::format("unknown task '{}'", name));
  return it->second;
}

json summarize(const HrSeries& hr) {
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t valid = 0;
  for (double v : hr.bpm) {
    if (std::isnan(v)) continue;
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    ++valid;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {{"windows", hr.size()},
          {"valid_windows", valid},
          {"nan_windows", hr.size() - valid},
          {"mean_bpm", valid > 0 ? sum / static_cast<double>(valid) : nan},
          {"min_bpm", valid > 0 ? lo : nan},
          {"max_bpm", valid > 0 ? hi : nan}};
}

namespace {

json recording_meta(const DataPipeEntry& e) {
  json m = json::object();
  for (const char* k : {"recording_id", "user_id", "modality", "start_local", "start_epoch_s", "end_epoch_s"}) {
    if (e.meta.contains(k)) m[k] = e.meta[k];
  }
  return m;
}

DataPipeEntry hr_entry(const DataPipeEntry& rec, HrSeries hr) {
  DataPipeEntry out;
  out.kind = ValueKind::HR_SERIES;
  out.meta = recording_meta(rec);
  out.meta["inputs"] = json::array({rec.key});
  out.payload = summarize(hr);
  out.payload["recording_id"] = rec.meta.value("recording_id", "");
  out.hr = std::make_shared<const HrSeries>(std::move(hr));
  return out;
}

const TimeSeries& series_of(const DataPipeEntry& e, Channel want, const char* task) {
  if (e.kind != ValueKind::TIMESERIES_REF || !e.series) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("{} needs a recording reference", task));
  }
  if (e.series->channel() != want) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("{} needs a {} recording, got {}", task, to_string(want),
                            to_string(e.series->channel())));
  }
  return *e.series;
}

}  // namespace

TaskRegistry default_registry() {
  TaskRegistry reg;
  reg.add({"lookup_recording",
           "Retrieve the recording of one user and modality that covers the given local date and time.",
           {{"user_id", ParamType::String, {}, "user identifier, e.g. p01"},
            {"modality", ParamType::Modality, {}, "PPG or ECG_LEAD_II"},
            {"at", ParamType::DateTime, {}, "local time YYYY-MM-DDTHH:MM"}},
           ValueKind::TIMESERIES_REF},
          [](const TaskArgs& args, const TaskContext& ctx) {
            if (!ctx.store) throw Error(ErrorCode::IoError, "no datastore configured");
            const Channel modality = channel_from_string(args.string("modality"));
            store::Loaded loaded = ctx.store->lookup(args.string("user_id"), modality, args.string("at"));
            const int tz = ctx.store->config().utc_offset_minutes;
            DataPipeEntry out;
            out.kind = ValueKind::TIMESERIES_REF;
            out.meta = {{"recording_id", loaded.meta.recording_id},
                        {"user_id", loaded.meta.user_id},
                        {"modality", std::string(to_string(modality))},
                        {"start_epoch_s", loaded.series.start_epoch_s()},
                        {"end_epoch_s", loaded.series.start_epoch_s() + loaded.series.duration_s()},
                        {"start_local", store::format_local_time(loaded.series.start_epoch_s(), tz)},
                        {"inputs", json::array()}};
            out.payload = {{"recording_id", loaded.meta.recording_id},
                           {"modality", std::string(to_string(modality))},
                           {"duration_s", loaded.series.duration_s()},
                           {"sample_rate_hz", loaded.series.sample_rate_hz()},
                           {"samples", loaded.series.size()}};
            out.series = std::make_shared<const TimeSeries>(std::move(loaded.series));
            return out;
          });
  reg.add({"estimate_hr_ppg",
           "Windowed heart rate from a PPG recording: filter, quality check, reconstruction, peak detection.",
           {{"recording", ParamType::Ref, ValueKind::TIMESERIES_REF, "output of lookup_recording (PPG)"}},
           ValueKind::HR_SERIES},
          [](const TaskArgs& args, const TaskContext& ctx) {
            const DataPipeEntry& rec = args.ref("recording");
            return hr_entry(rec, ppg::estimate_hr(series_of(rec, Channel::PPG, "estimate_hr_ppg"), ctx.ppg));
          });
  reg.add({"reference_hr_ecg",
           "Windowed reference heart rate from a Lead II ECG recording via QRS detection.",
           {{"recording", ParamType::Ref, ValueKind::TIMESERIES_REF, "output of lookup_recording (ECG_LEAD_II)"}},
           ValueKind::HR_SERIES},
          [](const TaskArgs& args, const TaskContext& ctx) {
            const DataPipeEntry& rec = args.ref("recording");
            return hr_entry(rec, ecg::reference_hr(series_of(rec, Channel::ECG_LEAD_II, "reference_hr_ecg"),
                                                   ctx.ppg.hr, ctx.qrs));
          });
  reg.add({"summarize_hr",
           "Mean, minimum and maximum heart rate over the valid windows of a heart-rate series.",
           {{"hr", ParamType::Ref, ValueKind::HR_SERIES, "output of estimate_hr_ppg or reference_hr_ecg"}},
           ValueKind::SCALAR},
          [](const TaskArgs& args, const TaskContext&) {
            const DataPipeEntry& in = args.ref("hr");
            if (in.kind != ValueKind::HR_SERIES || !in.hr) {
              throw Error(ErrorCode::InvalidArgument, "summarize_hr needs a heart-rate series");
            }
            DataPipeEntry out;
            out.kind = ValueKind::SCALAR;
            out.meta = recording_meta(in);
            out.meta["inputs"] = json::array({in.key});
            out.payload = summarize(*in.hr);
            out.payload["recording_id"] = in.meta.value("recording_id", "");
            out.hr = in.hr;
            return out;
          });
  return reg;
}

}  // namespace pulse::agent
