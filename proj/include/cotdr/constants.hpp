#pragma once

#include "cotdr/errors.hpp"
#include "cotdr/waveform.hpp"

namespace cotdr {

inline constexpr double kSpeedOfLightMps = 299792458.0;

// Group index of standard single-mode fiber near 1550 nm.
inline constexpr double kDefaultGroupIndex = 1.4682;

inline double one_way_latency_ps(double length_m,
                                 double group_index = kDefaultGroupIndex) {
  if (!(length_m >= 0.0)) throw invalid_input("one_way_latency_ps: negative length");
  if (!(group_index >= 1.0))
    throw invalid_input("one_way_latency_ps: group index below vacuum");
  return length_m * group_index / kSpeedOfLightMps * kPicosecondsPerSecond;
}

inline double round_trip_latency_ps(double length_m,
                                    double group_index = kDefaultGroupIndex) {
  return 2.0 * one_way_latency_ps(length_m, group_index);
}

}  // namespace cotdr
