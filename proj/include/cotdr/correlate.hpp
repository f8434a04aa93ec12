#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "cotdr/errors.hpp"
#include "cotdr/fft.hpp"
#include "cotdr/waveform.hpp"

namespace cotdr {

// Cross-correlation of a received trace against the transmitted reference,
// on the same sample grid, restricted to non-negative lags.
struct CorrelationTrace {
  double sample_rate_hz = 0.0;
  double start_lag_ps = 0.0;
  std::vector<double> samples;

  std::size_t size() const { return samples.size(); }
  double sample_interval_ps() const { return kPicosecondsPerSecond / sample_rate_hz; }
  double lag_at_ps(std::size_t i) const {
    return start_lag_ps + static_cast<double>(i) * sample_interval_ps();
  }
};

// c[k] = sum_n received[k + n] * reference[n], k = 0 .. received.size()-1.
// Computed via padded FFTs; trailing zeros of the reference are skipped.
inline CorrelationTrace cross_correlate(const SampledWaveform& received,
                                        const SampledWaveform& reference) {
  require_valid(received, "cross_correlate(received)");
  require_valid(reference, "cross_correlate(reference)");
  if (received.sample_rate_hz != reference.sample_rate_hz)
    throw invalid_input("cross_correlate: sample rates differ");

  const std::size_t n = received.samples.size();
  const auto [r0, r1] = nonzero_support(reference.samples);
  const std::size_t m = (r0 == r1) ? 1 : r1;
  const std::size_t len = fftops::next_fast_len(n + m - 1);

  std::vector<std::complex<double>> rec_spec, ref_spec;
  fftops::rfft(received.samples, len, rec_spec);
  fftops::rfft(std::span(reference.samples.data(), m), len, ref_spec);
  for (std::size_t k = 0; k < rec_spec.size(); ++k)
    rec_spec[k] *= std::conj(ref_spec[k]);

  std::vector<double> full;
  fftops::irfft(rec_spec, len, full);
  full.resize(n);

  CorrelationTrace out;
  out.sample_rate_hz = received.sample_rate_hz;
  out.start_lag_ps = received.start_time_ps - reference.start_time_ps;
  out.samples = std::move(full);
  return out;
}

// Shaping of the whitening filter. The frequency taper is unity up to
// pass_hz, then a raised-cosine rolloff to zero at stop_hz; envelope_floor
// bounds the per-bin inverse (see kWhitenEnvelopeFloor). Unset fields
// (negative, or zero for stop_hz) resolve to per-operation defaults:
// the latency measurement uses the widest usable band for peak sharpness,
// while suppress_cursors defaults to a narrower band that yields a clean
// inspection pulse (see the constants below).
struct WhitenTaper {
  double pass_hz = -1.0;
  double stop_hz = 0.0;
  double envelope_floor = -1.0;
};

inline constexpr double kDefaultPassFractionOfNyquist = 0.2;
// Stopping short of Nyquist trades a slightly wider equalized pulse for far
// lower sensitivity of the refined peak position to where the apex falls
// between samples (grid-locking bias).
inline constexpr double kDefaultStopFractionOfNyquist = 0.85;

// Floor on the per-bin power used by the whitener, as a fraction of the
// smoothed envelope. Bounds the gain at ragged spectral nulls so the inverse
// filter does not amplify noise or leakage by 1/regularization.
inline constexpr double kWhitenEnvelopeFloor = 0.25;

// suppress_cursors defaults. Its output is a pulse train meant for direct
// inspection, so the shaping favors clean lobes over the narrowest pulse:
// the band stays inside the first spectral lobe of the NRZ modulation (for
// 5 samples per bit the bit-rate nulls sit at 0.4 and 0.8 of Nyquist, and a
// target that demands energy across a null carves a hole in the output
// spectrum that rings at the bit period, ~13% of the peak), and the deeper
// envelope floor lets the inverse flatten residual ripple that would
// otherwise re-emerge as few-percent skirts. Averaged records have the SNR
// to support the deeper inversion.
inline constexpr double kSuppressStopFractionOfNyquist = 0.45;
inline constexpr double kSuppressEnvelopeFloor = 0.05;

namespace detail {

inline double taper_gain(double f, double pass_hz, double stop_hz) {
  if (f <= pass_hz) return 1.0;
  if (f >= stop_hz) return 0.0;
  const double c =
      std::cos(0.5 * std::numbers::pi * (f - pass_hz) / (stop_hz - pass_hz));
  return c * c;
}

// Spectral weights W(f) that equalize the reference power spectrum:
//   W = D * (1 + eps) * S_ref / (S + eps * S_ref)
// with S the reference power spectrum, S_ref the peak of its smoothed
// envelope, and D a shaping term (envelope-or-taper) that keeps the result
// band-limited. For a spectrally flat reference W is identically 1.
inline std::vector<double> whitening_weights(const SampledWaveform& reference,
                                             double regularization,
                                             const WhitenTaper& taper,
                                             std::size_t len) {
  const auto [r0, r1] = nonzero_support(reference.samples);
  if (r0 == r1)
    throw invalid_input("suppress_cursors: reference is identically zero");
  const std::size_t support = r1 - r0;

  std::vector<std::complex<double>> ref_spec;
  fftops::rfft(std::span(reference.samples.data() + r0, support), len, ref_spec);
  const std::size_t bins = ref_spec.size();
  std::vector<double> power(bins);
  for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(ref_spec[k]);

  // Boxcar-smoothed envelope; the window spans several ripple periods of the
  // aperiodic spectrum (ripple scale ~ len / support bins).
  const std::size_t half = std::clamp<std::size_t>(
      static_cast<std::size_t>(4.0 * static_cast<double>(len) /
                               static_cast<double>(support)),
      1, bins / 2 + 1);
  std::vector<double> prefix(bins + 1, 0.0);
  for (std::size_t k = 0; k < bins; ++k) prefix[k + 1] = prefix[k] + power[k];
  std::vector<double> envelope(bins);
  double env_max = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    const std::size_t lo = k > half ? k - half : 0;
    const std::size_t hi = std::min(bins, k + half + 1);
    envelope[k] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    env_max = std::max(env_max, envelope[k]);
  }
  if (env_max <= 0.0)
    throw invalid_input("suppress_cursors: reference has no spectral power");

  const double nyquist = 0.5 * reference.sample_rate_hz;
  double pass = taper.pass_hz >= 0.0 ? taper.pass_hz
                                     : kDefaultPassFractionOfNyquist * nyquist;
  double stop = taper.stop_hz > 0.0 ? taper.stop_hz
                                    : kDefaultStopFractionOfNyquist * nyquist;
  const double floor = taper.envelope_floor >= 0.0 ? taper.envelope_floor
                                                   : kWhitenEnvelopeFloor;
  pass = std::min(pass, nyquist);
  stop = std::min(stop, nyquist);
  if (!(stop > pass))
    throw invalid_input("suppress_cursors: taper stop must exceed pass");

  const double eps = regularization;
  std::vector<double> weights(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f =
        static_cast<double>(k) * reference.sample_rate_hz / static_cast<double>(len);
    const double shape =
        std::max(envelope[k] / env_max, taper_gain(f, pass, stop));
    const double denom = std::max(power[k], floor * envelope[k]);
    weights[k] = shape * (1.0 + eps) * env_max / (denom + eps * env_max);
  }
  return weights;
}

}  // namespace detail

// Equalizes the reference autocorrelation out of `corr`: collapses the
// sidelobe pattern every reflection drags along ("cursors") into a narrow
// band-limited pulse, so close returns stop shadowing each other. The
// regularization bounds the gain at spectral nulls of the reference.
//
// The correlation is stored for non-negative lags only; spectral division on
// a record cropped like that leaks the missing half into broadband
// artifacts. The input is therefore extended symmetrically about lag zero
// before filtering — for an autocorrelation-like record the extension
// reconstructs the true two-sided function, and for general records it is
// the usual reflective boundary treatment.
inline CorrelationTrace suppress_cursors(const CorrelationTrace& corr,
                                         const SampledWaveform& reference,
                                         double regularization,
                                         const WhitenTaper& taper = {}) {
  if (!(corr.sample_rate_hz > 0.0))
    throw invalid_input("suppress_cursors: correlation sample rate must be positive");
  if (corr.samples.empty())
    throw invalid_input("suppress_cursors: correlation trace is empty");
  require_valid(reference, "suppress_cursors(reference)");
  if (corr.sample_rate_hz != reference.sample_rate_hz)
    throw invalid_input("suppress_cursors: sample rates differ");
  if (!(regularization > 0.0))
    throw invalid_input("suppress_cursors: regularization must be positive");

  WhitenTaper shaped = taper;
  if (shaped.pass_hz < 0.0) shaped.pass_hz = 0.0;
  if (shaped.stop_hz <= 0.0)
    shaped.stop_hz = kSuppressStopFractionOfNyquist * 0.5 * corr.sample_rate_hz;
  if (shaped.envelope_floor < 0.0) shaped.envelope_floor = kSuppressEnvelopeFloor;

  // Even extension about lag zero (the apex sample is not duplicated).
  const std::size_t n = corr.samples.size();
  std::vector<double> extended(2 * n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) extended[i] = corr.samples[n - 1 - i];
  for (std::size_t i = 0; i < n; ++i) extended[n - 1 + i] = corr.samples[i];

  const auto [r0, r1] = nonzero_support(reference.samples);
  const std::size_t pad = std::max<std::size_t>(4096, 4 * (r1 - r0));
  const std::size_t len = fftops::next_fast_len(extended.size() + pad);

  const std::vector<double> weights =
      detail::whitening_weights(reference, regularization, shaped, len);

  std::vector<std::complex<double>> spec;
  fftops::rfft(extended, len, spec);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= weights[k];

  std::vector<double> filtered;
  fftops::irfft(spec, len, filtered);

  CorrelationTrace out;
  out.sample_rate_hz = corr.sample_rate_hz;
  out.start_lag_ps = corr.start_lag_ps;
  out.samples.assign(filtered.begin() + static_cast<std::ptrdiff_t>(n - 1),
                     filtered.begin() + static_cast<std::ptrdiff_t>(2 * n - 1));
  return out;
}

// Band-limited interpolation of corr.samples[first .. first+count) onto a
// grid `factor` times denser, via zero-padding the segment's spectrum. The
// original samples are reproduced exactly; values near the segment ends wrap
// circularly, so callers should include guard margin on both sides.
inline CorrelationTrace upsample_segment(const CorrelationTrace& corr,
                                         std::size_t first, std::size_t count,
                                         unsigned factor) {
  if (!(corr.sample_rate_hz > 0.0))
    throw invalid_input("upsample_segment: sample rate must be positive");
  if (factor == 0) throw invalid_input("upsample_segment: factor must be >= 1");
  if (count < 2 || first + count > corr.samples.size())
    throw invalid_input("upsample_segment: segment out of range");

  CorrelationTrace out;
  out.sample_rate_hz = corr.sample_rate_hz * factor;
  out.start_lag_ps = corr.lag_at_ps(first);
  if (factor == 1) {
    out.samples.assign(corr.samples.begin() + static_cast<std::ptrdiff_t>(first),
                       corr.samples.begin() + static_cast<std::ptrdiff_t>(first + count));
    return out;
  }

  const std::size_t m = count;
  const std::size_t up = m * factor;
  std::vector<std::complex<double>> spec;
  fftops::rfft(std::span(corr.samples.data() + first, m), m, spec);
  std::vector<std::complex<double>> padded(up / 2 + 1);
  for (std::size_t k = 0; k < spec.size(); ++k) padded[k] = spec[k];
  if (m % 2 == 0) padded[m / 2] *= 0.5;  // split the old Nyquist bin

  fftops::irfft(padded, up, out.samples);
  const auto gain = static_cast<double>(factor);
  for (double& v : out.samples) v *= gain;
  return out;
}

}  // namespace cotdr
