#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pulse/ecg.hpp"
#include "pulse/hr.hpp"
#include "pulse/ppg.hpp"
#include "pulse/store.hpp"

namespace pulse::agent {

enum class ValueKind { TIMESERIES_REF, HR_SERIES, SCALAR, TEXT, ERROR };

std::string_view to_string(ValueKind kind);

enum class ParamType { String, Modality, DateTime, Number, Ref };

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::String;
  ValueKind ref_kind = ValueKind::TIMESERIES_REF;  // for ParamType::Ref
  std::string description;
};

struct TaskSpec {
  std::string name;
  std::string description;
  std::vector<ParamSpec> params;
  ValueKind produces = ValueKind::SCALAR;
};

/// Large payloads (samples, per-window HR) sit behind shared pointers and
/// never reach a prompt; `payload` holds the compact summary that may.
struct DataPipeEntry {
  std::string key;
  ValueKind kind = ValueKind::TEXT;
  nlohmann::json payload;
  nlohmann::json meta;  // producing step, task, input keys, recording span
  std::shared_ptr<const TimeSeries> series;
  std::shared_ptr<const HrSeries> hr;
};

/// Session-scoped, write-once store of intermediate results.
class DataPipe {
 public:
  /// Assigns the next key and stores the entry.
  const DataPipeEntry& put(DataPipeEntry entry);
  /// Throws UnboundReference for an unknown key.
  const DataPipeEntry& get(std::string_view key) const;
  bool contains(std::string_view key) const;
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::unique_ptr<DataPipeEntry>>& entries() const noexcept { return entries_; }

 private:
  std::vector<std::unique_ptr<DataPipeEntry>> entries_;
  std::map<std::string, const DataPipeEntry*, std::less<>> index_;
};

struct TaskContext {
  std::shared_ptr<const store::DataStore> store;
  ppg::PipelineConfig ppg;
  ecg::QrsParams qrs;
};

/// Arguments after reference resolution.
struct TaskArgs {
  nlohmann::json literals = nlohmann::json::object();
  std::map<std::string, const DataPipeEntry*> refs;

  std::string string(const std::string& name) const;
  const DataPipeEntry& ref(const std::string& name) const;
};

/// Returns the output entry without a key; the executor stores it.
using TaskFn = std::function<DataPipeEntry(const TaskArgs&, const TaskContext&)>;

class TaskRegistry {
 public:
  /// Throws InvalidArgument on a duplicate name.
  void add(TaskSpec spec, TaskFn fn);
  const TaskSpec* find(std::string_view name) const;
  const TaskFn& function(std::string_view name) const;
  const std::vector<TaskSpec>& specs() const noexcept { return specs_; }
  bool empty() const noexcept { return specs_.empty(); }

 private:
  std::vector<TaskSpec> specs_;
  std::map<std::string, TaskFn, std::less<>> fns_;
};

/// lookup_recording, estimate_hr_ppg, reference_hr_ecg, summarize_hr.
TaskRegistry default_registry();

/// Mean / min / max over valid windows; NaN mean when none is valid.
nlohmann::json summarize(const HrSeries& hr);

}  // namespace pulse::agent
