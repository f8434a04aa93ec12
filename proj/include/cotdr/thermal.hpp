#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <string>
#include <utility>
#include <vector>

#include "cotdr/errors.hpp"
#include "cotdr/series.hpp"

namespace cotdr {

inline constexpr double kSecondsPerDay = 86400.0;

// Air or fiber temperature samples; nominally 600 s spacing for 10-minute
// weather data, but irregular spacing and gaps are tolerated everywhere.
struct TemperatureSeries {
  std::vector<std::pair<double, double>> records;  // (timestamp_s, temp_c)
};

inline void require_valid(const TemperatureSeries& s, const char* where) {
  for (std::size_t i = 0; i + 1 < s.records.size(); ++i) {
    if (!(s.records[i].first < s.records[i + 1].first))
      throw invalid_input(std::string(where) +
                          ": timestamps must be strictly increasing");
  }
}

// First-order low-pass over irregular steps, exact exponential
// discretization: T[k] = T[k-1] + (1 - exp(-dt/tau)) * (air[k] - T[k-1]).
// Unconditionally stable for any step size, so measurement gaps need no
// special casing. Output timestamps equal input timestamps; the first
// output sample is the initial state.
inline TemperatureSeries lowpass_filter(const TemperatureSeries& air,
                                        double tau_days,
                                        double initial_temp_c) {
  require_valid(air, "lowpass_filter");
  if (air.records.empty()) throw invalid_input("lowpass_filter: empty input");
  if (!(tau_days > 0.0))
    throw invalid_input("lowpass_filter: tau must be positive");
  TemperatureSeries out;
  out.records.reserve(air.records.size());
  double state = initial_temp_c;
  out.records.emplace_back(air.records.front().first, state);
  for (std::size_t k = 1; k < air.records.size(); ++k) {
    const double dt_days =
        (air.records[k].first - air.records[k - 1].first) / kSecondsPerDay;
    state += (1.0 - std::exp(-dt_days / tau_days)) *
             (air.records[k].second - state);
    out.records.emplace_back(air.records[k].first, state);
  }
  return out;
}

// Fitted parameters of the latency-vs-fiber-temperature model
//   latency_ps = reference_rtt_ps * tdc_ppm_per_k * 1e-6 * T_fiber + offset_ps
// where T_fiber is the low-pass filtered air temperature.
struct ThermalFit {
  double tdc_ppm_per_k = 0.0;
  double tau_days = 0.0;
  double reference_rtt_ps = 0.0;
  double initial_fiber_temp_c = 0.0;
  double offset_ps = 0.0;
  double rms_residual_ps = 0.0;
  // Fit RMS over the RMS of the mean-subtracted latency. Near 1 the model
  // explains nothing (e.g. latency uncorrelated with temperature).
  double residual_ratio = 0.0;
  bool low_confidence = false;
};

inline constexpr double kLowConfidenceResidualRatio = 0.9;

// Logarithmic search grid for the filter time constant.
struct TauGrid {
  double lo_days = 0.5;
  double hi_days = 50.0;
  int points = 60;
};

namespace detail {

// Filter initial state: mean air temperature over the up-to-3-tau stretch
// preceding the analysis window, when such data exists; otherwise the first
// air sample. Long pre-data lets the filter state spin up from history the
// way the physical cable does.
inline double initial_filter_state(const TemperatureSeries& air,
                                   double window_start_s, double tau_days) {
  double sum = 0.0;
  std::size_t n = 0;
  const double lo = window_start_s - 3.0 * tau_days * kSecondsPerDay;
  for (const auto& [t, temp] : air.records) {
    if (t > window_start_s) break;
    if (t < lo) continue;
    sum += temp;
    ++n;
  }
  if (n == 0) return air.records.front().second;
  return sum / static_cast<double>(n);
}

// Linear interpolation of a series at the given times; times outside the
// series span are skipped. Returns (time index into `times`, value) pairs.
inline std::vector<std::pair<std::size_t, double>> interp_at(
    const TemperatureSeries& series, const std::vector<double>& times) {
  std::vector<std::pair<std::size_t, double>> out;
  if (series.records.empty()) return out;
  const auto& rec = series.records;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    if (t < rec.front().first || t > rec.back().first) continue;
    const auto it = std::lower_bound(
        rec.begin(), rec.end(), t,
        [](const std::pair<double, double>& r, double v) { return r.first < v; });
    if (it == rec.begin()) {
      out.emplace_back(i, it->second);
      continue;
    }
    const auto prev = it - 1;
    if (it == rec.end()) {
      out.emplace_back(i, prev->second);
      continue;
    }
    const double w = (t - prev->first) / (it->first - prev->first);
    out.emplace_back(i, prev->second + w * (it->second - prev->second));
  }
  return out;
}

struct TauEval {
  double tau_days = 0.0;
  double slope_ps_per_k = 0.0;  // reference_rtt_ps * tdc * 1e-6
  double offset_ps = 0.0;
  double initial_temp_c = 0.0;
  double rms_residual_ps = 0.0;
  std::size_t n_points = 0;
};

// Filter at one tau, resample onto the latency timestamps, and solve the
// two-parameter least squares (slope over filtered temperature, constant
// offset).
inline TauEval evaluate_tau(const LatencySeries& latency,
                            const TemperatureSeries& air, double tau_days) {
  TauEval ev;
  ev.tau_days = tau_days;
  ev.initial_temp_c =
      initial_filter_state(air, latency.records.front().first, tau_days);
  const TemperatureSeries fiber = lowpass_filter(air, tau_days, ev.initial_temp_c);

  std::vector<double> times;
  times.reserve(latency.records.size());
  for (const auto& [t, v] : latency.records) times.push_back(t);
  const auto samples = interp_at(fiber, times);
  ev.n_points = samples.size();
  if (ev.n_points < 2) return ev;

  double sx = 0.0, sy = 0.0;
  for (const auto& [i, x] : samples) {
    sx += x;
    sy += latency.records[i].second;
  }
  const double mx = sx / static_cast<double>(ev.n_points);
  const double my = sy / static_cast<double>(ev.n_points);
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [i, x] : samples) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (latency.records[i].second - my);
  }
  ev.slope_ps_per_k = sxx > 0.0 ? sxy / sxx : 0.0;
  ev.offset_ps = my - ev.slope_ps_per_k * mx;

  double sse = 0.0;
  for (const auto& [i, x] : samples) {
    const double r =
        latency.records[i].second - (ev.slope_ps_per_k * x + ev.offset_ps);
    sse += r * r;
  }
  ev.rms_residual_ps = std::sqrt(sse / static_cast<double>(ev.n_points));
  return ev;
}

}  // namespace detail

// Fits (TDC, tau) to a measured latency series against air temperature:
// logarithmic tau grid, linear least squares per tau for slope and offset,
// then one golden-section refinement between the best grid point's
// neighbors. The residual surface over tau is smooth and single-dipped for
// first-order-lag data, so the search is deterministic and needs no random
// restarts. Grid evaluations are independent; `parallelism` > 1 runs them
// on that many threads with identical results.
inline ThermalFit fit_thermal(const LatencySeries& latency,
                              const TemperatureSeries& air,
                              const TauGrid& grid, double reference_rtt_ps,
                              int parallelism = 1) {
  require_valid(latency, "fit_thermal(latency)");
  require_valid(air, "fit_thermal(air)");
  if (latency.records.empty()) throw invalid_input("fit_thermal: empty latency");
  if (air.records.empty()) throw invalid_input("fit_thermal: empty air series");
  if (!(grid.lo_days > 0.0) || !(grid.hi_days > grid.lo_days) || grid.points < 2)
    throw invalid_input("fit_thermal: bad tau grid");
  if (!(reference_rtt_ps > 0.0))
    throw invalid_input("fit_thermal: reference rtt must be positive");
  if (parallelism < 1) throw invalid_input("fit_thermal: parallelism must be >= 1");

  std::vector<double> taus(static_cast<std::size_t>(grid.points));
  const double log_lo = std::log(grid.lo_days);
  const double log_step = (std::log(grid.hi_days) - log_lo) /
                          static_cast<double>(grid.points - 1);
  for (std::size_t i = 0; i < taus.size(); ++i)
    taus[i] = std::exp(log_lo + log_step * static_cast<double>(i));

  std::vector<detail::TauEval> evals(taus.size());
  if (parallelism == 1) {
    for (std::size_t i = 0; i < taus.size(); ++i)
      evals[i] = detail::evaluate_tau(latency, air, taus[i]);
  } else {
    std::vector<std::future<void>> workers;
    std::size_t chunk = (taus.size() + static_cast<std::size_t>(parallelism) - 1) /
                        static_cast<std::size_t>(parallelism);
    chunk = std::max<std::size_t>(chunk, 1);
    for (std::size_t lo = 0; lo < taus.size(); lo += chunk) {
      const std::size_t hi = std::min(taus.size(), lo + chunk);
      workers.push_back(std::async(std::launch::async, [&, lo, hi] {
        for (std::size_t i = lo; i < hi; ++i)
          evals[i] = detail::evaluate_tau(latency, air, taus[i]);
      }));
    }
    for (auto& w : workers) w.get();
  }

  if (evals.front().n_points < 2)
    throw invalid_input(
        "fit_thermal: latency and air temperature overlap in fewer than 2 samples");

  std::size_t best = 0;
  for (std::size_t i = 1; i < evals.size(); ++i)
    if (evals[i].rms_residual_ps < evals[best].rms_residual_ps) best = i;

  // Golden-section refinement between the best point's grid neighbors.
  double lo = taus[best > 0 ? best - 1 : best];
  double hi = taus[best + 1 < taus.size() ? best + 1 : best];
  detail::TauEval winner = evals[best];
  if (hi > lo) {
    constexpr double kInvPhi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    detail::TauEval ec = detail::evaluate_tau(latency, air, c);
    detail::TauEval ed = detail::evaluate_tau(latency, air, d);
    for (int it = 0; it < 60 && (b - a) > 1e-9 * winner.tau_days; ++it) {
      if (ec.rms_residual_ps <= ed.rms_residual_ps) {
        b = d;
        d = c;
        ed = ec;
        c = b - kInvPhi * (b - a);
        ec = detail::evaluate_tau(latency, air, c);
      } else {
        a = c;
        c = d;
        ec = ed;
        d = a + kInvPhi * (b - a);
        ed = detail::evaluate_tau(latency, air, d);
      }
    }
    const detail::TauEval& refined =
        ec.rms_residual_ps <= ed.rms_residual_ps ? ec : ed;
    if (refined.rms_residual_ps < winner.rms_residual_ps) winner = refined;
  }

  ThermalFit fit;
  fit.tau_days = winner.tau_days;
  fit.reference_rtt_ps = reference_rtt_ps;
  fit.tdc_ppm_per_k = winner.slope_ps_per_k / (reference_rtt_ps * 1e-6);
  fit.initial_fiber_temp_c = winner.initial_temp_c;
  fit.offset_ps = winner.offset_ps;
  fit.rms_residual_ps = winner.rms_residual_ps;

  double sy = 0.0;
  for (const auto& [t, v] : latency.records) sy += v;
  const double my = sy / static_cast<double>(latency.records.size());
  double syy = 0.0;
  for (const auto& [t, v] : latency.records) syy += (v - my) * (v - my);
  const double spread =
      std::sqrt(syy / static_cast<double>(latency.records.size()));
  fit.residual_ratio = spread > 0.0 ? fit.rms_residual_ps / spread : 0.0;
  fit.low_confidence = fit.residual_ratio > kLowConfidenceResidualRatio;
  return fit;
}

// Latency change implied by a fiber-temperature series, relative to the
// first sample: delta(t) = rtt * tdc * 1e-6 * (T(t) - T(t0)).
inline LatencySeries predict_latency_delta(const TemperatureSeries& fiber_temp,
                                           const ThermalFit& fit) {
  require_valid(fiber_temp, "predict_latency_delta");
  if (fiber_temp.records.empty())
    throw invalid_input("predict_latency_delta: empty temperature series");
  if (!(fit.tau_days > 0.0))
    throw invalid_input("predict_latency_delta: fit has non-positive tau");
  const double sens =
      latency_sensitivity_ps_per_k(fit.reference_rtt_ps, fit.tdc_ppm_per_k);
  const double t0 = fiber_temp.records.front().second;
  LatencySeries out;
  out.fiber = "model";
  out.records.reserve(fiber_temp.records.size());
  for (const auto& [t, temp] : fiber_temp.records)
    out.records.emplace_back(t, sens * (temp - t0));
  return out;
}

// The fitted model evaluated at the given times: filter the air series at
// the fitted tau and initial state, then slope * T + offset. Times outside
// the air span yield no output (same mask as the fit itself).
inline std::vector<std::pair<double, double>> thermal_model_eval(
    const TemperatureSeries& air, const ThermalFit& fit,
    const std::vector<double>& times_s) {
  require_valid(air, "thermal_model_eval");
  if (air.records.empty())
    throw invalid_input("thermal_model_eval: empty air series");
  const TemperatureSeries fiber =
      lowpass_filter(air, fit.tau_days, fit.initial_fiber_temp_c);
  const double slope =
      latency_sensitivity_ps_per_k(fit.reference_rtt_ps, fit.tdc_ppm_per_k);
  std::vector<std::pair<double, double>> out;
  for (const auto& [i, x] : detail::interp_at(fiber, times_s))
    out.emplace_back(times_s[i], slope * x + fit.offset_ps);
  return out;
}

// Peak-to-peak projection over a long air-temperature record.
struct AnnualProjection {
  // Post-spin-up window (everything after the first 3 tau).
  double fiber_temp_pk_pk_k = 0.0;
  double latency_pk_pk_ps = 0.0;
  double skew_pk_pk_ps = 0.0;
  // Same statistics over the trailing 365 days, for records longer than a
  // year where the two windows disagree.
  double fiber_temp_pk_pk_last_365_k = 0.0;
  double latency_pk_pk_last_365_ps = 0.0;
  double skew_pk_pk_last_365_ps = 0.0;
  double window_start_s = 0.0;
  double window_end_s = 0.0;
};

// Filters the full air record, discards the 3-tau spin-up prefix, and
// reports peak-to-peak fiber temperature, the implied latency swing, and
// the skew of a fiber pair whose TDCs differ by the given fraction.
inline AnnualProjection annual_projection(const TemperatureSeries& air_full,
                                          const ThermalFit& fit,
                                          double tdc_mismatch_fraction) {
  require_valid(air_full, "annual_projection");
  if (air_full.records.empty())
    throw invalid_input("annual_projection: empty air series");
  if (!(fit.tau_days > 0.0))
    throw invalid_input("annual_projection: fit has non-positive tau");
  const double spin_up_s = 3.0 * fit.tau_days * kSecondsPerDay;
  const double required_s = spin_up_s + 365.0 * kSecondsPerDay;
  const double span_s =
      air_full.records.back().first - air_full.records.front().first;
  if (span_s < required_s)
    throw invalid_input(
        "annual_projection: air record spans " +
        std::to_string(span_s / kSecondsPerDay) + " days, need at least " +
        std::to_string(required_s / kSecondsPerDay) +
        " (3 tau spin-up + 365-day projection)");

  const TemperatureSeries fiber = lowpass_filter(
      air_full, fit.tau_days, air_full.records.front().second);
  const double window_start = air_full.records.front().first + spin_up_s;
  const double last_365_start =
      air_full.records.back().first - 365.0 * kSecondsPerDay;

  double lo = 0.0, hi = 0.0, lo365 = 0.0, hi365 = 0.0;
  bool first = true, first365 = true;
  for (const auto& [t, temp] : fiber.records) {
    if (t < window_start) continue;
    if (first) {
      lo = hi = temp;
      first = false;
    }
    lo = std::min(lo, temp);
    hi = std::max(hi, temp);
    if (t >= last_365_start) {
      if (first365) {
        lo365 = hi365 = temp;
        first365 = false;
      }
      lo365 = std::min(lo365, temp);
      hi365 = std::max(hi365, temp);
    }
  }
  const double sens =
      latency_sensitivity_ps_per_k(fit.reference_rtt_ps, fit.tdc_ppm_per_k);
  AnnualProjection out;
  out.fiber_temp_pk_pk_k = hi - lo;
  out.latency_pk_pk_ps = std::abs(sens) * out.fiber_temp_pk_pk_k;
  out.skew_pk_pk_ps = tdc_mismatch_fraction * out.latency_pk_pk_ps;
  out.fiber_temp_pk_pk_last_365_k = hi365 - lo365;
  out.latency_pk_pk_last_365_ps = std::abs(sens) * out.fiber_temp_pk_pk_last_365_k;
  out.skew_pk_pk_last_365_ps = tdc_mismatch_fraction * out.latency_pk_pk_last_365_ps;
  out.window_start_s = window_start;
  out.window_end_s = air_full.records.back().first;
  return out;
}

}  // namespace cotdr
