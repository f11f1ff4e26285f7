#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "necplus/csv_io.hpp"

namespace necplus {

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t length = 20000;
  double spike_rate = 0.005;  // expected events per hour
  double spike_shape = 0.3;   // GEV shape of the event increments
  std::int64_t start = 946684800;  // 2000-01-01T00:00:00Z
  double level = 1000.0;
  double amplitude = 50.0;
  double period_hours = 24.0 * 90.0;
  double depletion = 0.005;  // per hour
  double noise_sd = 0.002;
  double ar_coefficient = 0.995;
  double spike_scale = 6.0;
  bool with_rain = true;
};

struct SpikeEvent {
  std::size_t index = 0;  // first hour of the ramp
  std::size_t duration = 0;
  double increment = 0.0;
};

struct SynthResult {
  SeriesTable table;  // columns: value[, rain]
  std::vector<SpikeEvent> spikes;
};

/// Seasonal level with AR(1) noise and a slow decline, plus Poisson-timed
/// multi-hour rises whose sizes follow a GEV law. The optional rain channel
/// starts a few hours ahead of every rise.
SynthResult generate_synthetic(const SynthOptions& options);

/// `index,timestamp,duration,increment`
void write_spikes_csv(const std::filesystem::path& path, const SynthResult& result);

}  // namespace necplus
