#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cotdr/errors.hpp"

namespace cotdr {

inline constexpr double kPicosecondsPerSecond = 1e12;

// Uniformly sampled real-valued waveform. start_time_ps is the time of
// sample 0 relative to the burst trigger.
struct SampledWaveform {
  double sample_rate_hz = 0.0;
  double start_time_ps = 0.0;
  std::vector<double> samples;

  std::size_t size() const { return samples.size(); }
  double sample_interval_ps() const { return kPicosecondsPerSecond / sample_rate_hz; }
  double time_at_ps(std::size_t i) const {
    return start_time_ps + static_cast<double>(i) * sample_interval_ps();
  }
  double duration_ps() const {
    return static_cast<double>(samples.size()) * sample_interval_ps();
  }
};

inline void require_valid(const SampledWaveform& w, const std::string& who) {
  if (!(w.sample_rate_hz > 0.0))
    throw invalid_input(who + ": sample_rate_hz must be positive");
  if (w.samples.empty()) throw invalid_input(who + ": waveform is empty");
}

// Half-open index range [first, last) covering every nonzero sample.
// Returns {0, 0} for an all-zero vector.
inline std::pair<std::size_t, std::size_t> nonzero_support(
    const std::vector<double>& samples) {
  std::size_t first = samples.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i] != 0.0) {
      first = i;
      break;
    }
  }
  if (first == samples.size()) return {0, 0};
  std::size_t last = samples.size();
  while (last > first && samples[last - 1] == 0.0) --last;
  return {first, last};
}

}  // namespace cotdr
