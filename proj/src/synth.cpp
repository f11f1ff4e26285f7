#include "necplus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "necplus/distributions.hpp"
#include "necplus/error.hpp"
#include "necplus/kv.hpp"

namespace necplus {

SynthResult generate_synthetic(const SynthOptions& o) {
  if (o.length < 2) throw Error(ErrorKind::InvalidInput, "synthetic length must be at least 2");
  if (!(o.spike_rate >= 0.0) || !std::isfinite(o.spike_rate)) {
    throw Error(ErrorKind::InvalidInput, "spike rate must be a finite non-negative number");
  }
  if (!std::isfinite(o.spike_shape)) throw Error(ErrorKind::InvalidInput, "spike shape must be finite");
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = o.length;

  std::vector<double> rise(n, 0.0);
  std::vector<double> rain(n, 0.0);
  SynthResult out;
  if (o.spike_rate > 0.0) {
    std::exponential_distribution<double> gap(o.spike_rate);
    std::uniform_int_distribution<std::size_t> duration(3, 6);
    std::uniform_int_distribution<std::size_t> lead(2, 6);
    const GevParams size{1.0, 0.5, o.spike_shape};
    double t = gap(rng);
    while (t < static_cast<double>(n)) {
      SpikeEvent ev;
      ev.index = static_cast<std::size_t>(t);
      ev.duration = duration(rng);
      // u stays strictly inside (0, 1) so the quantile is finite
      const double u = std::clamp(unit(rng), 1e-12, 1.0 - 1e-12);
      ev.increment = o.spike_scale * std::max(0.2, gev_quantile(u, size));
      const std::size_t pre = lead(rng);
      for (std::size_t j = 0; j < ev.duration && ev.index + j < n; ++j) {
        rise[ev.index + j] += ev.increment / static_cast<double>(ev.duration);
      }
      const std::size_t rain_from = ev.index >= pre ? ev.index - pre : 0;
      for (std::size_t j = rain_from; j < std::min(n, ev.index + ev.duration); ++j) {
        rain[j] += 2.0 * ev.increment / static_cast<double>(ev.duration);
      }
      out.spikes.push_back(ev);
      t += gap(rng);
    }
  }

  auto& table = out.table;
  table.columns = {"value"};
  if (o.with_rain) table.columns.push_back("rain");
  table.data.assign(table.columns.size(), std::vector<double>(n));
  table.timestamps.resize(n);
  double noise = 0.0;
  double lifted = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    noise = o.ar_coefficient * noise + o.noise_sd * normal(rng);
    lifted += rise[i];
    table.timestamps[i] = o.start + static_cast<std::int64_t>(i) * kSecondsPerHour;
    table.data[0][i] = o.level + o.amplitude * std::sin(2.0 * std::numbers::pi * t / o.period_hours) -
                       o.depletion * t + lifted + noise;
    if (o.with_rain) table.data[1][i] = std::max(0.0, 0.05 * normal(rng)) + rain[i];
  }
  return out;
}

void write_spikes_csv(const std::filesystem::path& path, const SynthResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "index,timestamp,duration,increment\n";
  for (const auto& ev : result.spikes) {
    out << ev.index << ',' << format_timestamp(result.table.timestamps[ev.index]) << ',' << ev.duration
        << ',' << format_double(ev.increment) << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace necplus
