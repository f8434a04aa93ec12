#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cotdr/errors.hpp"
#include "cotdr/prbs.hpp"
#include "cotdr/waveform.hpp"

namespace cotdr {

enum class LineCode { kNrz };

// Probe burst: one PRBS period, NRZ coded at bit_rate_bps, zero padded to
// packet_duration_ps. The packet duration sets the repetition period and
// bounds the unambiguous round-trip range.
struct BurstSpec {
  PrbsSpec prbs;
  double bit_rate_bps = 10e9;
  double packet_duration_ps = 1e8;
  LineCode line_code = LineCode::kNrz;
};

// NRZ waveform of `bits` (0 -> 0.0, 1 -> 1.0), each bit held for
// samples_per_bit samples, zero padded to total_samples.
inline SampledWaveform nrz_waveform(std::span<const std::uint8_t> bits,
                                    double sample_rate_hz,
                                    std::size_t samples_per_bit,
                                    std::size_t total_samples) {
  if (!(sample_rate_hz > 0.0))
    throw invalid_input("nrz_waveform: sample_rate_hz must be positive");
  if (samples_per_bit == 0)
    throw invalid_input("nrz_waveform: samples_per_bit must be positive");
  const std::size_t active = bits.size() * samples_per_bit;
  if (total_samples < active)
    throw invalid_input("nrz_waveform: total_samples shorter than the bits");
  SampledWaveform w;
  w.sample_rate_hz = sample_rate_hz;
  w.samples.assign(total_samples, 0.0);
  for (std::size_t b = 0; b < bits.size(); ++b) {
    if (!bits[b]) continue;
    const std::size_t base = b * samples_per_bit;
    for (std::size_t s = 0; s < samples_per_bit; ++s) w.samples[base + s] = 1.0;
  }
  return w;
}

// Builds the probe burst at the acquisition sample rate. The sample rate
// must be an integer multiple of the bit rate so NRZ edges land on samples.
inline SampledWaveform build_burst(const BurstSpec& spec, double sample_rate_hz) {
  if (!(spec.bit_rate_bps > 0.0))
    throw invalid_input("build_burst: bit_rate_bps must be positive");
  if (!(sample_rate_hz > 0.0))
    throw invalid_input("build_burst: sample_rate_hz must be positive");
  if (!(spec.packet_duration_ps > 0.0))
    throw invalid_input("build_burst: packet_duration_ps must be positive");
  if (spec.line_code != LineCode::kNrz)
    throw invalid_input("build_burst: unsupported line code");

  const double ratio = sample_rate_hz / spec.bit_rate_bps;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio)
    throw invalid_input(
        "build_burst: sample rate must be an integer multiple of bit rate");
  const auto samples_per_bit = static_cast<std::size_t>(rounded);

  const std::vector<std::uint8_t> bits = generate_prbs(spec.prbs);
  const double interval_ps = kPicosecondsPerSecond / sample_rate_hz;
  const auto total =
      static_cast<std::size_t>(std::llround(spec.packet_duration_ps / interval_ps));
  const std::size_t active = bits.size() * samples_per_bit;
  if (total < active)
    throw invalid_input("build_burst: packet shorter than the PRBS burst");
  return nrz_waveform(bits, sample_rate_hz, samples_per_bit, total);
}

}  // namespace cotdr
