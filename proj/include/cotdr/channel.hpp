#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "cotdr/constants.hpp"
#include "cotdr/errors.hpp"
#include "cotdr/fft.hpp"
#include "cotdr/rng.hpp"
#include "cotdr/waveform.hpp"

namespace cotdr {

// One discrete reflection: the probe burst comes back attenuated after a
// round-trip latency that need not be a multiple of the sample interval.
struct Reflector {
  std::string label;
  double round_trip_latency_ps = 0.0;
  double amplitude = 1.0;
};

struct FiberPlant {
  std::vector<Reflector> reflectors;
  double receiver_bandwidth_hz = 7.5e9;
  // Per-trace additive white Gaussian noise at the sampler, before averaging.
  double noise_sigma = 0.35;
  std::uint64_t rng_seed = 1;
};

struct TraceAcquisition {
  int n_traces = 2000;
  double observation_window_ps = 1e8;
  // Pre-trigger capture margin. The record starts this far before the burst
  // trigger so the near-end reference return at 0 ps lag sits fully inside
  // the trace and its peak can be fit like any other.
  double pre_trigger_ps = 1280.0;
  // Draw and average n_traces independent noise realizations instead of a
  // single draw at sigma/sqrt(n_traces). Slower; statistically equivalent.
  bool simulate_each_trace = false;
};

// Near-end reference at the air gap plus four far-end reflectors behind a
// 1x4 splitter on nominally matched 8.5 km spools; fiber 4 carries an extra
// 25 m patch. Trims keep the far-end returns a few samples apart at most.
inline FiberPlant default_four_fiber_plant() {
  const double base = round_trip_latency_ps(8500.0);
  const double jumper = round_trip_latency_ps(25.0);
  FiberPlant plant;
  plant.reflectors = {
      {"reference", 0.0, 0.2},
      {"fiber1", base, 1.0},
      {"fiber2", base + 60.0, 1.0},
      {"fiber3", base + 2500.0, 1.0},
      {"fiber4", base + 2500.0 + jumper, 1.0},
  };
  return plant;
}

namespace detail {

// Reflected copy of the burst's active span, delayed by a fractional number
// of samples and shaped by the single-pole receiver response
// H(f) = 1 / (1 + i f / f_c). Computed on a short padded segment so traces
// with microsecond latencies never pay a full-length transform.
inline void add_reflection(const SampledWaveform& burst, double latency_ps,
                           double amplitude, double receiver_bandwidth_hz,
                           std::int64_t pre_trigger_samples,
                           std::vector<double>& out) {
  const auto [s0, s1] = nonzero_support(burst.samples);
  if (s0 == s1) return;
  const double interval_ps = burst.sample_interval_ps();
  const double delay_samples = latency_ps / interval_ps;
  const double k_floor = std::floor(delay_samples);
  const auto k_int = static_cast<std::int64_t>(k_floor);
  const double frac = delay_samples - k_floor;

  const double fs = burst.sample_rate_hz;
  const double fc = receiver_bandwidth_hz;
  const std::size_t guard = std::max<std::size_t>(
      4096, static_cast<std::size_t>(std::ceil(8.0 * fs / fc)));
  const std::size_t len = fftops::next_fast_len(s1 - s0 + 2 * guard);

  std::vector<double> seg(len, 0.0);
  for (std::size_t i = s0; i < s1; ++i) seg[guard + (i - s0)] = burst.samples[i];

  std::vector<std::complex<double>> spec;
  fftops::rfft(seg, len, spec);
  const double phase_step = -2.0 * std::numbers::pi * frac / static_cast<double>(len);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(len);
    const std::complex<double> lowpass = 1.0 / std::complex<double>(1.0, f / fc);
    const std::complex<double> shift =
        std::polar(1.0, phase_step * static_cast<double>(k));
    spec[k] *= lowpass * shift;
  }
  if (len % 2 == 0) spec.back() = spec.back().real();
  fftops::irfft(spec, len, seg);

  const std::int64_t start = k_int + static_cast<std::int64_t>(s0) -
                             static_cast<std::int64_t>(guard) + pre_trigger_samples;
  const auto n_out = static_cast<std::int64_t>(out.size());
  for (std::size_t b = 0; b < len; ++b) {
    const std::int64_t idx = start + static_cast<std::int64_t>(b);
    if (idx < 0 || idx >= n_out) continue;
    out[static_cast<std::size_t>(idx)] += amplitude * seg[b];
  }
}

}  // namespace detail

// Simulates the averaged receiver trace: every reflector contributes an
// attenuated, delayed, low-pass filtered copy of the burst; white Gaussian
// sampler noise is averaged over n_traces acquisitions.
inline SampledWaveform simulate_averaged_trace(const SampledWaveform& burst,
                                               const FiberPlant& plant,
                                               const TraceAcquisition& acq) {
  require_valid(burst, "simulate_averaged_trace");
  if (!(plant.receiver_bandwidth_hz > 0.0))
    throw invalid_input("simulate_averaged_trace: receiver bandwidth must be positive");
  if (!(plant.noise_sigma >= 0.0))
    throw invalid_input("simulate_averaged_trace: noise_sigma must be non-negative");
  if (acq.n_traces < 1)
    throw invalid_input("simulate_averaged_trace: n_traces must be at least 1");
  if (!(acq.observation_window_ps > 0.0))
    throw invalid_input("simulate_averaged_trace: observation window must be positive");
  if (!(acq.pre_trigger_ps >= 0.0))
    throw invalid_input("simulate_averaged_trace: pre_trigger_ps must be non-negative");
  if (plant.reflectors.empty())
    throw invalid_input("simulate_averaged_trace: plant has no reflectors");

  std::set<std::string> labels;
  for (const Reflector& r : plant.reflectors) {
    if (r.label.empty())
      throw invalid_input("simulate_averaged_trace: reflector with empty label");
    if (!labels.insert(r.label).second)
      throw invalid_input("simulate_averaged_trace: duplicate reflector label '" +
                          r.label + "'");
    if (!(r.round_trip_latency_ps >= 0.0))
      throw invalid_input("simulate_averaged_trace: reflector '" + r.label +
                          "' has negative latency");
  }

  const double interval_ps = burst.sample_interval_ps();
  const auto [s0, s1] = nonzero_support(burst.samples);
  const double active_end_ps = static_cast<double>(s1) * interval_ps;
  for (const Reflector& r : plant.reflectors) {
    if (r.round_trip_latency_ps + active_end_ps >
        acq.observation_window_ps * (1.0 + 1e-12))
      throw invalid_input("simulate_averaged_trace: reflection from '" + r.label +
                          "' does not fit the observation window");
  }

  const std::int64_t n_pre = std::llround(acq.pre_trigger_ps / interval_ps);
  SampledWaveform trace;
  trace.sample_rate_hz = burst.sample_rate_hz;
  trace.start_time_ps =
      burst.start_time_ps - static_cast<double>(n_pre) * interval_ps;
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(acq.observation_window_ps / interval_ps)) +
      static_cast<std::size_t>(n_pre);
  trace.samples.assign(n_out, 0.0);

  for (const Reflector& r : plant.reflectors)
    detail::add_reflection(burst, r.round_trip_latency_ps, r.amplitude,
                           plant.receiver_bandwidth_hz, n_pre, trace.samples);

  if (plant.noise_sigma > 0.0) {
    Xoshiro256pp rng(plant.rng_seed);
    if (acq.simulate_each_trace) {
      std::vector<double> acc(n_out, 0.0);
      for (int t = 0; t < acq.n_traces; ++t)
        for (std::size_t i = 0; i < n_out; ++i) acc[i] += rng.gaussian();
      const double scale = plant.noise_sigma / static_cast<double>(acq.n_traces);
      for (std::size_t i = 0; i < n_out; ++i) trace.samples[i] += scale * acc[i];
    } else {
      const double sigma =
          plant.noise_sigma / std::sqrt(static_cast<double>(acq.n_traces));
      for (std::size_t i = 0; i < n_out; ++i)
        trace.samples[i] += sigma * rng.gaussian();
    }
  }
  return trace;
}

}  // namespace cotdr
