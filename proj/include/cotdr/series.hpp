#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cotdr/errors.hpp"

namespace cotdr {

// One latency measurement of one fiber at one instant.
struct LatencyRecord {
  double timestamp_s = 0.0;  // UTC seconds
  std::string fiber;
  double rtt_ps = 0.0;
};

inline void require_valid(const LatencyRecord& r) {
  if (r.fiber.empty()) throw invalid_input("latency record: empty fiber label");
  if (!(r.rtt_ps > 0.0))
    throw invalid_input("latency record: rtt must be positive");
  if (!std::isfinite(r.timestamp_s))
    throw invalid_input("latency record: non-finite timestamp");
}

// Time-ordered latency samples of one fiber. Values may be negative once a
// series has been referenced to its start; the positivity invariant applies
// to raw measurement records, not to derived series.
struct LatencySeries {
  std::string fiber;
  std::vector<std::pair<double, double>> records;  // (timestamp_s, value_ps)
};

inline void require_valid(const LatencySeries& s, const char* where) {
  for (std::size_t i = 0; i + 1 < s.records.size(); ++i) {
    if (!(s.records[i].first < s.records[i + 1].first))
      throw invalid_input(std::string(where) +
                          ": timestamps must be strictly increasing");
  }
}

// Subtracts the first value so the series starts at exactly zero. Gaps are
// preserved. Idempotent.
inline LatencySeries relative_series(const LatencySeries& series) {
  require_valid(series, "relative_series");
  if (series.records.empty())
    throw invalid_input("relative_series: series is empty");
  LatencySeries out;
  out.fiber = series.fiber;
  out.records.reserve(series.records.size());
  const double first = series.records.front().second;
  for (const auto& [t, v] : series.records) out.records.emplace_back(t, v - first);
  return out;
}

namespace detail {

// Mutual-nearest-neighbor pairing of two time-ordered series: (i, j) pair up
// when each is the other's closest timestamp and they differ by at most the
// tolerance. Symmetric in the argument order, each record used at most once.
inline std::vector<std::pair<std::size_t, std::size_t>> align_records(
    const std::vector<std::pair<double, double>>& a,
    const std::vector<std::pair<double, double>>& b, double tolerance_s) {
  auto nearest = [](const std::vector<std::pair<double, double>>& in, double t) {
    const auto it = std::lower_bound(
        in.begin(), in.end(), t,
        [](const std::pair<double, double>& r, double v) { return r.first < v; });
    std::size_t best = in.size();
    double best_d = std::numeric_limits<double>::infinity();
    if (it != in.end()) {
      best = static_cast<std::size_t>(it - in.begin());
      best_d = std::abs(it->first - t);
    }
    if (it != in.begin()) {
      const auto prev = it - 1;
      const double d = std::abs(prev->first - t);
      // Ties resolve to the earlier record.
      if (d <= best_d) {
        best = static_cast<std::size_t>(prev - in.begin());
        best_d = d;
      }
    }
    return best;
  };
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t j = nearest(b, a[i].first);
    if (j >= b.size()) continue;
    if (std::abs(b[j].first - a[i].first) > tolerance_s) continue;
    if (nearest(a, b[j].first) != i) continue;
    pairs.emplace_back(i, j);
  }
  return pairs;
}

}  // namespace detail

// Pointwise difference rtt_a - rtt_b over records aligned within the
// tolerance; timestamps of the output are pair midpoints so the result is
// exactly antisymmetric in the argument order.
inline LatencySeries difference_series(const LatencySeries& a,
                                       const LatencySeries& b,
                                       double align_tolerance_s = 60.0) {
  require_valid(a, "difference_series");
  require_valid(b, "difference_series");
  if (!(align_tolerance_s >= 0.0))
    throw invalid_input("difference_series: tolerance must be non-negative");
  LatencySeries out;
  out.fiber = a.fiber + "-" + b.fiber;
  for (const auto& [i, j] : detail::align_records(a.records, b.records,
                                                  align_tolerance_s)) {
    const double t = 0.5 * (a.records[i].first + b.records[j].first);
    out.records.emplace_back(t, a.records[i].second - b.records[j].second);
  }
  if (out.records.empty())
    throw invalid_input("difference_series: no records align within tolerance");
  return out;
}

// Inter-fiber skew offset so its minimum is exactly zero.
inline LatencySeries skew_series(const LatencySeries& a, const LatencySeries& b,
                                 double align_tolerance_s = 60.0) {
  LatencySeries out = difference_series(a, b, align_tolerance_s);
  double lo = out.records.front().second;
  for (const auto& [t, v] : out.records) lo = std::min(lo, v);
  for (auto& [t, v] : out.records) v -= lo;
  return out;
}

// Latency change per kelvin for a link of the given round-trip time and
// temperature delay coefficient.
inline double latency_sensitivity_ps_per_k(double rtt_ps,
                                           double tdc_ppm_per_k) {
  return rtt_ps * tdc_ppm_per_k * 1e-6;
}

}  // namespace cotdr
