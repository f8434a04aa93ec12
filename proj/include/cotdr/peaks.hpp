#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cotdr/correlate.hpp"
#include "cotdr/errors.hpp"

namespace cotdr {

struct PeakDetectConfig {
  // Detection threshold as a fraction of the global maximum.
  double relative_threshold = 0.1;
  // Minimum lag spacing between reported peaks; the stronger one wins. Two
  // acquisition samples by default: tight enough to keep a 60 ps pair,
  // whose detected maxima pull toward each other, as two peaks.
  double min_separation_ps = 40.0;
  // Samples in the raised-cosine fit window (odd, >= 5).
  int fit_window_samples = 7;
};

struct CorrelationPeak {
  std::size_t coarse_index = 0;
  double refined_lag_ps = 0.0;
  double amplitude = 0.0;
  double half_width_ps = 0.0;
  double fit_rms_residual = 0.0;
};

inline void require_valid(const PeakDetectConfig& cfg) {
  if (!(cfg.relative_threshold > 0.0 && cfg.relative_threshold <= 1.0))
    throw invalid_input("peak config: relative_threshold must be in (0, 1]");
  if (!(cfg.min_separation_ps >= 0.0))
    throw invalid_input("peak config: min_separation_ps must be non-negative");
  if (cfg.fit_window_samples < 5 || cfg.fit_window_samples % 2 == 0)
    throw invalid_input("peak config: fit_window_samples must be odd and >= 5");
}

// Local maxima above relative_threshold * global max, pruned so surviving
// peaks are at least min_separation_ps apart (larger amplitude wins).
// Indices are returned in ascending order.
inline std::vector<std::size_t> detect_peaks(const CorrelationTrace& corr,
                                             const PeakDetectConfig& cfg) {
  require_valid(cfg);
  if (corr.samples.size() < 3) return {};
  const double global_max = *std::max_element(corr.samples.begin(), corr.samples.end());
  if (!(global_max > 0.0)) return {};
  const double threshold = cfg.relative_threshold * global_max;

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < corr.samples.size(); ++i) {
    if (corr.samples[i] >= threshold && corr.samples[i] >= corr.samples[i - 1] &&
        corr.samples[i] > corr.samples[i + 1])
      candidates.push_back(i);
  }

  std::sort(candidates.begin(), candidates.end(),
            [&](std::size_t a, std::size_t b) {
              if (corr.samples[a] != corr.samples[b])
                return corr.samples[a] > corr.samples[b];
              return a < b;
            });
  const double interval_ps = corr.sample_interval_ps();
  std::vector<std::size_t> kept;
  for (std::size_t idx : candidates) {
    bool clear = true;
    for (std::size_t other : kept) {
      const double gap =
          std::abs(static_cast<double>(idx) - static_cast<double>(other)) * interval_ps;
      if (gap < cfg.min_separation_ps) {
        clear = false;
        break;
      }
    }
    if (clear) kept.push_back(idx);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

namespace detail {

inline double raised_cosine(double t, double t0, double w) {
  const double u = (t - t0) / w;
  if (u <= -1.0 || u >= 1.0) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * u));
}

struct RcModel {
  double t0_ps = 0.0;
  double w_ps = 0.0;
  double a = 0.0;
  double sse = std::numeric_limits<double>::infinity();
};

// Least-squares amplitude for fixed (t0, w); returns the SSE of the zero
// model when the shape has no support on the window or the best scale is
// not positive.
inline double rc_score(std::span<const double> t, std::span<const double> y,
                       double t0, double w, double& a_out) {
  double sy2 = 0.0, syp = 0.0, sp2 = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double p = raised_cosine(t[i], t0, w);
    sy2 += y[i] * y[i];
    syp += y[i] * p;
    sp2 += p * p;
  }
  if (sp2 < 1e-30 || syp <= 0.0) {
    a_out = 0.0;
    return sy2;
  }
  a_out = syp / sp2;
  return sy2 - a_out * syp;
}

template <typename F>
inline double golden_min(F f, double lo, double hi, int iters) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters && (b - a) > 1e-7; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

inline constexpr double kT0GridStepPs = 0.5;

// Deterministic raised-cosine fit: coarse grid over (t0, w), then
// golden-section polish alternating between the two parameters. Width
// bounds scale with the window span so the same physical pulse gets the
// same search range regardless of how densely it is sampled.
inline RcModel fit_raised_cosine(std::span<const double> t,
                                 std::span<const double> y, double t0_lo,
                                 double t0_hi) {
  RcModel best;
  const double span = t.empty() ? 0.0 : t.back() - t.front();
  if (!(span > 0.0)) return best;
  const double w_lo = 0.2 * span;
  const double w_hi = (4.0 / 3.0) * span;
  std::vector<double> w_grid;
  for (int i = 0; i < 12; ++i)
    w_grid.push_back(w_lo * std::pow(w_hi / w_lo, i / 11.0));

  const int steps = static_cast<int>(std::ceil((t0_hi - t0_lo) / kT0GridStepPs));
  for (double w : w_grid) {
    for (int s = 0; s <= steps; ++s) {
      const double t0 = std::min(t0_lo + s * kT0GridStepPs, t0_hi);
      double a = 0.0;
      const double sse = rc_score(t, y, t0, w, a);
      if (a > 0.0 && sse < best.sse) best = {t0, w, a, sse};
    }
  }
  if (!std::isfinite(best.sse) || best.a <= 0.0) {
    // Every candidate was rejected: score the zero model, so the caller's
    // error can report how much data the missing pulse leaves unexplained.
    double sy2 = 0.0;
    for (double v : y) sy2 += v * v;
    best.sse = sy2;
    return best;
  }

  for (int round = 0; round < 2; ++round) {
    const double span_t = round == 0 ? kT0GridStepPs : 0.05;
    double w_fixed = best.w_ps;
    best.t0_ps = golden_min(
        [&](double t0) {
          double a;
          return rc_score(t, y, t0, w_fixed, a);
        },
        std::max(t0_lo, best.t0_ps - span_t), std::min(t0_hi, best.t0_ps + span_t),
        60);
    double t0_fixed = best.t0_ps;
    best.w_ps = golden_min(
        [&](double w) {
          double a;
          return rc_score(t, y, t0_fixed, w, a);
        },
        std::max(w_lo, best.w_ps / 1.4), std::min(w_hi, best.w_ps * 1.4), 60);
  }
  best.sse = rc_score(t, y, best.t0_ps, best.w_ps, best.a);
  return best;
}

inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 32; ++k) {
    term *= (x * x) / (4.0 * k * k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

inline void window_bounds(const CorrelationTrace& corr, std::size_t coarse_index,
                          int fit_window_samples, std::size_t& lo,
                          std::size_t& hi) {
  const int half = (fit_window_samples - 1) / 2;
  if (static_cast<std::int64_t>(coarse_index) < half ||
      coarse_index + static_cast<std::size_t>(half) >= corr.samples.size())
    throw invalid_input("refine_peak: fit window clipped by the trace edge");
  lo = coarse_index - static_cast<std::size_t>(half);
  hi = coarse_index + static_cast<std::size_t>(half) + 1;
}

}  // namespace detail

// Subsample peak localization: fits a(1 + cos(pi (t - t0)/w))/2 on the fit
// window around the coarse maximum. The refined lag stays within one sample
// interval of the coarse one.
inline CorrelationPeak refine_peak(const CorrelationTrace& corr,
                                   std::size_t coarse_index,
                                   const PeakDetectConfig& cfg) {
  require_valid(cfg);
  std::size_t lo, hi;
  detail::window_bounds(corr, coarse_index, cfg.fit_window_samples, lo, hi);
  const double interval_ps = corr.sample_interval_ps();
  const double center = corr.lag_at_ps(coarse_index);
  std::vector<double> t, y;
  for (std::size_t i = lo; i < hi; ++i) {
    t.push_back(corr.lag_at_ps(i) - center);
    y.push_back(corr.samples[i]);
  }
  const detail::RcModel m = detail::fit_raised_cosine(t, y, -interval_ps, interval_ps);
  if (!std::isfinite(m.sse) || m.a <= 0.0)
    throw analysis_error("refine_peak: raised-cosine fit found no positive peak",
                         std::sqrt(m.sse / static_cast<double>(y.size())));
  CorrelationPeak peak;
  peak.coarse_index = coarse_index;
  peak.refined_lag_ps = center + m.t0_ps;
  peak.amplitude = m.a;
  peak.half_width_ps = m.w_ps;
  peak.fit_rms_residual = std::sqrt(m.sse / static_cast<double>(y.size()));
  return peak;
}

// Empirical pulse shape lifted from an isolated refined peak (normally the
// near-end reference return). Band-limited interpolation lets the cluster
// refiner subtract a neighbor's full response, ringing skirts included,
// which the raised-cosine model alone cannot represent.
class PulseTemplate {
 public:
  static constexpr std::size_t kDefaultHalfSpanSamples = 24;
  static constexpr int kSincHalfTaps = 10;

  PulseTemplate(const CorrelationTrace& corr, const CorrelationPeak& peak,
                std::size_t half_span_samples = kDefaultHalfSpanSamples)
      : interval_ps_(corr.sample_interval_ps()), amplitude_(peak.amplitude) {
    if (!(amplitude_ > 0.0))
      throw invalid_input("PulseTemplate: peak amplitude must be positive");
    const std::size_t i0 = peak.coarse_index;
    if (i0 < half_span_samples || i0 + half_span_samples >= corr.samples.size())
      throw invalid_input("PulseTemplate: span clipped by the trace edge");
    values_.assign(corr.samples.begin() + (i0 - half_span_samples),
                   corr.samples.begin() + (i0 + half_span_samples + 1));
    center_pos_ =
        (peak.refined_lag_ps - corr.lag_at_ps(i0 - half_span_samples)) /
        interval_ps_;
  }

  // Unit-amplitude pulse value at offset_ps from the pulse center; zero
  // outside the sampled span (skirts there are treated as negligible).
  double operator()(double offset_ps) const {
    const double x = center_pos_ + offset_ps / interval_ps_;
    if (x < kSincHalfTaps || x > static_cast<double>(values_.size() - 1) - kSincHalfTaps)
      return 0.0;
    const auto j_lo = static_cast<std::size_t>(std::ceil(x)) - kSincHalfTaps;
    double sum = 0.0;
    for (std::size_t j = j_lo; j <= j_lo + 2 * kSincHalfTaps - 1; ++j) {
      const double u = x - static_cast<double>(j);
      sum += values_[j] * windowed_sinc(u);
    }
    return sum / amplitude_;
  }

 private:
  static double windowed_sinc(double u) {
    const double t = u / kSincHalfTaps;
    if (t <= -1.0 || t >= 1.0) return 0.0;
    double sinc;
    if (std::abs(u) < 1e-9) {
      sinc = 1.0;
    } else {
      const double pu = std::numbers::pi * u;
      sinc = std::sin(pu) / pu;
    }
    constexpr double kBeta = 8.0;
    return sinc * detail::bessel_i0(kBeta * std::sqrt(1.0 - t * t)) /
           detail::bessel_i0(kBeta);
  }

  double interval_ps_;
  double amplitude_;
  double center_pos_ = 0.0;
  std::vector<double> values_;
};

// Joint refinement for peaks whose fit windows overlap: alternately refit
// each peak against the data minus the current models of the others. The
// neighbor model is the empirical pulse template when one is available and
// the raised cosine otherwise. Falls back to an independent fit when the
// cluster has a single member.
inline std::vector<CorrelationPeak> refine_peaks_joint(
    const CorrelationTrace& corr, const std::vector<std::size_t>& cluster,
    const PeakDetectConfig& cfg, const PulseTemplate* pulse = nullptr) {
  require_valid(cfg);
  if (cluster.empty()) return {};
  if (cluster.size() == 1) return {refine_peak(corr, cluster[0], cfg)};

  const double interval_ps = corr.sample_interval_ps();
  const std::size_t n_peaks = cluster.size();
  std::vector<std::size_t> lo(n_peaks), hi(n_peaks);
  std::vector<double> centers(n_peaks);
  for (std::size_t p = 0; p < n_peaks; ++p) {
    detail::window_bounds(corr, cluster[p], cfg.fit_window_samples, lo[p], hi[p]);
    centers[p] = corr.lag_at_ps(cluster[p]);
  }

  // Start every member at its coarse position with the raw sample height.
  // An independent fit here would already be biased by the neighbors inside
  // its window, and that bias can push the alternating refinement into a
  // shifted local minimum.
  std::vector<detail::RcModel> models(n_peaks);
  for (std::size_t p = 0; p < n_peaks; ++p) {
    const double span_ps = corr.lag_at_ps(hi[p] - 1) - corr.lag_at_ps(lo[p]);
    models[p] = {0.0, 0.5 * span_ps,
                 std::max(corr.samples[cluster[p]], 1e-12), 0.0};
  }

  auto neighbor_value = [&](std::size_t q, double lag) {
    const double peak_lag = centers[q] + models[q].t0_ps;
    if (pulse) return models[q].a * (*pulse)(lag - peak_lag);
    return models[q].a * detail::raised_cosine(lag, peak_lag, models[q].w_ps);
  };

  // Each sweep refits every peak over the full clamp window around its
  // coarse detection: per-block global search keeps a biased early estimate
  // from trapping the whole cluster, while the clamp still pins each peak to
  // its detected neighborhood.
  const double drift_limit = 3.0 * interval_ps;
  std::vector<double> t, y;
  for (int sweep = 0; sweep < 20; ++sweep) {
    double max_shift = 0.0;
    for (std::size_t p = 0; p < n_peaks; ++p) {
      t.clear();
      y.clear();
      for (std::size_t i = lo[p]; i < hi[p]; ++i) {
        const double lag = corr.lag_at_ps(i);
        double residual = corr.samples[i];
        for (std::size_t q = 0; q < n_peaks; ++q) {
          if (q == p) continue;
          residual -= neighbor_value(q, lag);
        }
        t.push_back(lag - centers[p]);
        y.push_back(residual);
      }
      const detail::RcModel next =
          detail::fit_raised_cosine(t, y, -drift_limit, drift_limit);
      if (!std::isfinite(next.sse) || next.a <= 0.0)
        throw analysis_error(
            "refine_peaks_joint: raised-cosine fit lost a peak in the cluster");
      max_shift = std::max(max_shift, std::abs(next.t0_ps - models[p].t0_ps));
      models[p] = next;
    }
    if (max_shift < 1e-3) break;
  }

  // Joint residual over the union of the fit windows (a cluster can span a
  // gap much wider than any window; the gap must not dilute the RMS).
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t p = 0; p < n_peaks; ++p) spans.emplace_back(lo[p], hi[p]);
  std::sort(spans.begin(), spans.end());
  double sse = 0.0;
  std::size_t n_samples = 0;
  std::size_t next_free = 0;
  for (const auto& [s_lo, s_hi] : spans) {
    for (std::size_t i = std::max(s_lo, next_free); i < s_hi; ++i) {
      const double lag = corr.lag_at_ps(i);
      double residual = corr.samples[i];
      for (std::size_t q = 0; q < n_peaks; ++q) residual -= neighbor_value(q, lag);
      sse += residual * residual;
      ++n_samples;
    }
    next_free = std::max(next_free, s_hi);
  }
  const double rms = std::sqrt(sse / static_cast<double>(n_samples));

  std::vector<CorrelationPeak> out(n_peaks);
  for (std::size_t p = 0; p < n_peaks; ++p) {
    out[p].coarse_index = cluster[p];
    out[p].refined_lag_ps = centers[p] + models[p].t0_ps;
    out[p].amplitude = models[p].a;
    out[p].half_width_ps = models[p].w_ps;
    out[p].fit_rms_residual = rms;
  }
  return out;
}

}  // namespace cotdr
