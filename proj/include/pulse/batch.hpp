#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pulse/config.hpp"
#include "pulse/metrics.hpp"
#include "pulse/synth.hpp"

namespace pulse::batch {

/// Pairs every PPG recording with the ECG of the same user covering it,
/// runs both pipelines on the calibration-trimmed span and builds the
/// evaluation report. Recordings are processed on up to `threads` workers
/// (0 = hardware concurrency); report order is manifest order.
eval::EvaluationReport evaluate_store(const store::DataStore& store, const AppConfig& config,
                                      unsigned threads = 0);

/// Generates a synthetic corpus and ingests both modalities of every
/// recording. Returns the number of recordings written.
std::size_t seed_store(store::DataStore& store, const synth::CorpusSpec& spec);

}  // namespace pulse::batch
