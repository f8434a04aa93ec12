#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cotdr/correlate.hpp"
#include "cotdr/errors.hpp"
#include "cotdr/fft.hpp"
#include "cotdr/parallel.hpp"
#include "cotdr/peaks.hpp"
#include "cotdr/waveform.hpp"

namespace cotdr {

// Expected lag range for one labeled return, in picoseconds.
struct LagWindow {
  double lo_ps = 0.0;
  double hi_ps = 0.0;
};

using FiberWindows = std::map<std::string, LagWindow>;

inline constexpr char kReferenceLabel[] = "reference";

struct MeasureOptions {
  PeakDetectConfig detect;
  double regularization = 1e-3;
  WhitenTaper taper;
  // Threads for segment interpolation and per-cluster refinement. Results
  // are identical at any setting; clusters are independent of each other.
  int parallelism = 1;
};

struct MeasureResult {
  // Reference-subtracted round-trip latency per fiber label.
  std::map<std::string, double> latency_ps;
  // Refined peaks for every window that produced one, reference included.
  std::map<std::string, CorrelationPeak> peaks;
  // Windows that failed, with the reason.
  std::map<std::string, std::string> failures;
  double reference_lag_ps = 0.0;
};

inline void require_valid(const FiberWindows& windows) {
  if (windows.find(kReferenceLabel) == windows.end())
    throw invalid_input("fiber windows: missing 'reference' window");
  for (const auto& [label, w] : windows) {
    if (label.empty()) throw invalid_input("fiber windows: empty label");
    if (!(w.lo_ps < w.hi_ps))
      throw invalid_input("fiber windows: window '" + label + "' is empty");
  }
  for (auto a = windows.begin(); a != windows.end(); ++a) {
    auto b = a;
    for (++b; b != windows.end(); ++b) {
      if (a->second.lo_ps < b->second.hi_ps && b->second.lo_ps < a->second.hi_ps)
        throw invalid_input("fiber windows: '" + a->first + "' overlaps '" +
                            b->first + "'");
    }
  }
}

// Correlates traces against the transmitted burst, whitens away the burst's
// autocorrelation sidelobes, refines every windowed peak with a
// raised-cosine fit, and reports fiber latencies relative to the near-end
// reference return. The combined spectral filter is cached per trace length
// so repeated measurements cost two long transforms each.
//
// Detection and refinement run on band-limited upsampled segments around the
// configured windows: on the 20 ps acquisition grid two returns three
// samples apart can merge into one local maximum, while the interpolated
// trace still shows both, at no extra information cost.
class LatencyMeasurer {
 public:
  LatencyMeasurer(SampledWaveform burst, MeasureOptions options,
                  FiberWindows windows)
      : burst_(std::move(burst)),
        options_(std::move(options)),
        windows_(std::move(windows)) {
    require_valid(burst_, "LatencyMeasurer(burst)");
    require_valid(options_.detect);
    require_valid(windows_);
    if (!(options_.regularization > 0.0))
      throw invalid_input("LatencyMeasurer: regularization must be positive");
    const auto [b0, b1] = nonzero_support(burst_.samples);
    if (b0 == b1) throw invalid_input("LatencyMeasurer: burst is identically zero");
    support_end_ = b1;
  }

  const SampledWaveform& burst() const { return burst_; }
  const FiberWindows& windows() const { return windows_; }

  // Refinement grid: 4x the acquisition rate (5 ps at 50 GS/s).
  static constexpr unsigned kRefineUpsampleFactor = 4;
  // The equalized pulse keeps low-level skirts out to roughly the burst
  // support; a neighbor this close still shifts a raised-cosine fit by a
  // few tenths of a picosecond, so peaks within this reach are refined
  // jointly with template subtraction.
  static constexpr double kJointReachPs = 6000.0;
  // Guard margin per segment, in acquisition samples; absorbs the circular
  // wrap of the segment interpolation and leaves room for the pulse
  // template span and fit windows next to a window edge.
  static constexpr std::size_t kSegmentMarginSamples = 384;

  MeasureResult measure(const SampledWaveform& trace) const {
    require_valid(trace, "LatencyMeasurer::measure");
    if (trace.sample_rate_hz != burst_.sample_rate_hz)
      throw invalid_input("LatencyMeasurer: trace and burst sample rates differ");

    const CorrelationTrace filtered = filtered_correlation(trace);
    const double global_max =
        *std::max_element(filtered.samples.begin(), filtered.samples.end());

    // One interpolated segment per group of nearby windows.
    const auto ranges = segment_ranges(filtered);
    std::vector<CorrelationTrace> segments(ranges.size());
    detail::parallel_for(ranges.size(), options_.parallelism,
                         [&](std::size_t i) {
                           segments[i] =
                               upsample_segment(filtered, ranges[i].first,
                                                ranges[i].second,
                                                kRefineUpsampleFactor);
                         });

    PeakDetectConfig fine = options_.detect;
    fine.fit_window_samples =
        options_.detect.fit_window_samples * static_cast<int>(kRefineUpsampleFactor) + 1;
    const double threshold = options_.detect.relative_threshold * global_max;

    struct Hit {
      std::size_t seg = 0;
      std::size_t idx = 0;
    };
    std::map<std::string, std::vector<Hit>> assigned;
    std::vector<std::vector<std::vector<std::size_t>>> clusters(segments.size());
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const CorrelationTrace& seg = segments[s];
      // The threshold is re-applied against the global maximum: a segment
      // holding only noise still reports local maxima relative to its own
      // peak, and those must not count as returns.
      std::vector<std::size_t> in_windows;
      for (std::size_t idx : detect_peaks(seg, fine)) {
        if (seg.samples[idx] < threshold) continue;
        const double lag = seg.lag_at_ps(idx);
        for (const auto& [label, w] : windows_) {
          if (lag >= w.lo_ps && lag <= w.hi_ps) {
            assigned[label].push_back({s, idx});
            in_windows.push_back(idx);
            break;
          }
        }
      }
      std::sort(in_windows.begin(), in_windows.end());
      const auto gap = std::max(
          static_cast<std::size_t>(fine.fit_window_samples + 2),
          static_cast<std::size_t>(std::ceil(kJointReachPs / seg.sample_interval_ps())));
      for (std::size_t idx : in_windows) {
        auto& segment_clusters = clusters[s];
        if (segment_clusters.empty() || idx - segment_clusters.back().back() > gap)
          segment_clusters.emplace_back();
        segment_clusters.back().push_back(idx);
      }
    }

    // Isolated peaks first: the strongest return among them yields the
    // empirical pulse template used to separate overlapping returns.
    std::map<std::pair<std::size_t, std::size_t>, CorrelationPeak> refined;
    {
      std::vector<std::pair<std::size_t, std::size_t>> jobs;
      for (std::size_t s = 0; s < segments.size(); ++s)
        for (const auto& cluster : clusters[s])
          if (cluster.size() == 1) jobs.emplace_back(s, cluster[0]);
      std::vector<std::optional<CorrelationPeak>> out(jobs.size());
      detail::parallel_for(jobs.size(), options_.parallelism,
                           [&](std::size_t i) {
                             try {
                               out[i] = refine_peak(segments[jobs[i].first],
                                                    jobs[i].second, fine);
                             } catch (const analysis_error&) {
                               // Reported per window below.
                             }
                           });
      for (std::size_t i = 0; i < jobs.size(); ++i)
        if (out[i]) refined[jobs[i]] = *out[i];
    }

    // Template source: the strongest isolated return (ties break toward the
    // smaller lag), which gives the best-SNR sampling of the pulse shape.
    // The span covers the joint reach so skirt subtraction stays exact.
    std::optional<PulseTemplate> pulse;
    {
      std::vector<std::pair<std::size_t, std::size_t>> singles;
      for (const auto& [key, peak] : refined) singles.push_back(key);
      std::sort(singles.begin(), singles.end(),
                [&](const auto& a, const auto& b) {
                  const double aa = refined.at(a).amplitude;
                  const double ab = refined.at(b).amplitude;
                  if (aa != ab) return aa > ab;
                  const double la = segments[a.first].lag_at_ps(a.second);
                  const double lb = segments[b.first].lag_at_ps(b.second);
                  return la < lb;
                });
      const double fine_interval =
          segments.empty() ? 0.0 : segments.front().sample_interval_ps();
      const double half_window_ps =
          0.5 * (fine.fit_window_samples - 1) * fine_interval;
      const auto want_span = static_cast<std::size_t>(
          std::ceil((kJointReachPs + half_window_ps +
                     PulseTemplate::kSincHalfTaps * fine_interval + 10.0) /
                    fine_interval));
      const auto min_span = static_cast<std::size_t>(
          std::ceil(2.0 * half_window_ps / fine_interval) +
          2 * PulseTemplate::kSincHalfTaps);
      for (const auto& [s, idx] : singles) {
        // A candidate near a segment edge hosts a shorter template; that
        // still subtracts near skirts exactly, only the far reach shrinks.
        const std::size_t room =
            std::min(idx, segments[s].samples.size() - 1 - idx);
        const std::size_t span = std::min(want_span, room);
        if (span < min_span) continue;
        pulse.emplace(segments[s], refined.at({s, idx}), span);
        break;
      }
    }

    {
      std::vector<std::pair<std::size_t, const std::vector<std::size_t>*>> jobs;
      for (std::size_t s = 0; s < segments.size(); ++s)
        for (const auto& cluster : clusters[s])
          if (cluster.size() >= 2) jobs.emplace_back(s, &cluster);
      std::vector<std::vector<CorrelationPeak>> out(jobs.size());
      detail::parallel_for(jobs.size(), options_.parallelism,
                           [&](std::size_t i) {
                             try {
                               out[i] = refine_peaks_joint(
                                   segments[jobs[i].first], *jobs[i].second,
                                   fine, pulse ? &*pulse : nullptr);
                             } catch (const analysis_error&) {
                               // Reported per window below.
                             }
                           });
      for (std::size_t i = 0; i < jobs.size(); ++i)
        for (const CorrelationPeak& p : out[i])
          refined[{jobs[i].first, p.coarse_index}] = p;
    }

    MeasureResult result;
    for (const auto& [label, w] : windows_) {
      auto it = assigned.find(label);
      if (it == assigned.end() || it->second.empty()) {
        result.failures[label] = "no peak in window";
        continue;
      }
      if (it->second.size() > 1) {
        result.failures[label] = "multiple peaks in window";
        continue;
      }
      const Hit hit = it->second.front();
      auto peak_it = refined.find({hit.seg, hit.idx});
      if (peak_it == refined.end()) {
        result.failures[label] = "peak refinement failed";
        continue;
      }
      CorrelationPeak peak = peak_it->second;
      // Report the coarse index on the acquisition grid, not the segment's.
      peak.coarse_index = static_cast<std::size_t>(std::llround(
          (peak.refined_lag_ps - filtered.start_lag_ps) / filtered.sample_interval_ps()));
      result.peaks[label] = peak;
    }

    auto ref_it = result.peaks.find(kReferenceLabel);
    if (ref_it == result.peaks.end())
      throw analysis_error("measure: reference peak " +
                           result.failures[kReferenceLabel]);
    result.reference_lag_ps = ref_it->second.refined_lag_ps;
    for (const auto& [label, peak] : result.peaks) {
      if (label == kReferenceLabel) continue;
      result.latency_ps[label] = peak.refined_lag_ps - result.reference_lag_ps;
    }
    return result;
  }

  // Disjoint coarse index ranges covering every window plus guard margin;
  // windows whose expanded ranges touch share one segment so their returns
  // can be refined jointly.
  std::vector<std::pair<std::size_t, std::size_t>> segment_ranges(
      const CorrelationTrace& corr) const {
    const double interval = corr.sample_interval_ps();
    const auto n = static_cast<std::int64_t>(corr.samples.size());
    std::vector<std::pair<std::int64_t, std::int64_t>> spans;
    for (const auto& [label, w] : windows_) {
      auto lo = static_cast<std::int64_t>(
          std::floor((w.lo_ps - corr.start_lag_ps) / interval));
      auto hi = static_cast<std::int64_t>(
          std::ceil((w.hi_ps - corr.start_lag_ps) / interval));
      lo -= static_cast<std::int64_t>(kSegmentMarginSamples);
      hi += static_cast<std::int64_t>(kSegmentMarginSamples);
      lo = std::max<std::int64_t>(lo, 0);
      hi = std::min<std::int64_t>(hi, n - 1);
      if (lo < hi) spans.emplace_back(lo, hi);
    }
    std::sort(spans.begin(), spans.end());
    std::vector<std::pair<std::size_t, std::size_t>> merged;
    for (const auto& [lo, hi] : spans) {
      if (!merged.empty() &&
          lo <= static_cast<std::int64_t>(merged.back().first + merged.back().second))
        merged.back().second =
            std::max(merged.back().second,
                     static_cast<std::size_t>(hi) + 1 - merged.back().first);
      else
        merged.emplace_back(static_cast<std::size_t>(lo),
                            static_cast<std::size_t>(hi - lo + 1));
    }
    return merged;
  }

  CorrelationTrace filtered_correlation(const SampledWaveform& trace) const {
    const std::size_t n = trace.samples.size();
    const std::size_t pad = std::max<std::size_t>(4096, 4 * support_end_);
    const std::size_t len = fftops::next_fast_len(n + support_end_ - 1 + pad);

    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (cache_len_ != len) {
      std::vector<std::complex<double>> ref_spec;
      fftops::rfft(std::span(burst_.samples.data(), support_end_), len, ref_spec);
      const std::vector<double> weights = detail::whitening_weights(
          burst_, options_.regularization, options_.taper, len);
      cache_filter_.resize(ref_spec.size());
      for (std::size_t k = 0; k < ref_spec.size(); ++k)
        cache_filter_[k] = std::conj(ref_spec[k]) * weights[k];
      cache_len_ = len;
    }

    std::vector<std::complex<double>> spec;
    fftops::rfft(trace.samples, len, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= cache_filter_[k];
    std::vector<double> corr;
    fftops::irfft(spec, len, corr);
    corr.resize(n);

    CorrelationTrace out;
    out.sample_rate_hz = trace.sample_rate_hz;
    out.start_lag_ps = trace.start_time_ps - burst_.start_time_ps;
    out.samples = std::move(corr);
    return out;
  }

 private:
  SampledWaveform burst_;
  MeasureOptions options_;
  FiberWindows windows_;
  std::size_t support_end_ = 0;
  mutable std::mutex cache_mutex_;
  mutable std::size_t cache_len_ = 0;
  mutable std::vector<std::complex<double>> cache_filter_;
};

// One-shot convenience wrapper around LatencyMeasurer.
inline MeasureResult measure_latencies(const SampledWaveform& trace,
                                       const SampledWaveform& burst,
                                       const PeakDetectConfig& detect,
                                       const FiberWindows& windows) {
  MeasureOptions options;
  options.detect = detect;
  return LatencyMeasurer(burst, options, windows).measure(trace);
}

}  // namespace cotdr
