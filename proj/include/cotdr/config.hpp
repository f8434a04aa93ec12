#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotdr/burst.hpp"
#include "cotdr/channel.hpp"
#include "cotdr/errors.hpp"
#include "cotdr/measure.hpp"
#include "cotdr/peaks.hpp"
#include "cotdr/thermal.hpp"

namespace cotdr {

// Everything one pipeline run needs, in one declarative document. Every
// section is optional and defaults to the reference configuration; unknown
// keys are rejected so typos fail loudly instead of silently using a
// default.
struct RunConfig {
  double sample_rate_hz = 50e9;
  BurstSpec burst;
  FiberPlant plant;
  TraceAcquisition acquisition;
  PeakDetectConfig detect;
  MeasureOptions measure;
  FiberWindows windows;  // empty -> derived from the plant
  TauGrid tau_grid;
  double fit_reference_rtt_ps = 0.0;  // 0 -> plant's largest reflector latency
  double tdc_mismatch_fraction = 0.01;
};

// Per-fiber lag windows centered on the plant's nominal latencies, clipped
// at midpoints between neighbors so windows never overlap.
inline FiberWindows default_windows(const FiberPlant& plant,
                                    double half_width_ps = 40.0) {
  FiberWindows windows;
  for (const Reflector& r : plant.reflectors) {
    double lo = r.round_trip_latency_ps - half_width_ps;
    double hi = r.round_trip_latency_ps + half_width_ps;
    for (const Reflector& o : plant.reflectors) {
      if (o.label == r.label) continue;
      const double mid =
          0.5 * (r.round_trip_latency_ps + o.round_trip_latency_ps);
      if (o.round_trip_latency_ps > r.round_trip_latency_ps)
        hi = std::min(hi, mid);
      else
        lo = std::max(lo, mid);
    }
    windows[r.label] = {lo, hi};
  }
  return windows;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j,
                           std::initializer_list<std::string_view> allowed,
                           const std::string& where) {
  if (!j.is_object())
    throw format_error("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw format_error("config: " + where + ": unknown key '" + key + "'");
  }
}

template <typename T>
inline void read_field(const nlohmann::json& j, const char* key, T& out,
                       const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw format_error("config: " + where + "." + key + " has the wrong type");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& doc) {
  detail::reject_unknown(doc,
                         {"sample_rate_hz", "burst", "plant", "acquisition",
                          "detect", "measure", "windows", "fit", "predict"},
                         "top level");
  RunConfig cfg;
  cfg.plant = default_four_fiber_plant();
  detail::read_field(doc, "sample_rate_hz", cfg.sample_rate_hz, "top level");

  if (doc.contains("burst")) {
    const auto& b = doc.at("burst");
    detail::reject_unknown(b,
                           {"register_length", "feedback_taps", "seed",
                            "bit_rate_bps", "packet_duration_ps"},
                           "burst");
    detail::read_field(b, "register_length", cfg.burst.prbs.register_length,
                       "burst");
    detail::read_field(b, "feedback_taps", cfg.burst.prbs.feedback_taps, "burst");
    detail::read_field(b, "seed", cfg.burst.prbs.seed, "burst");
    detail::read_field(b, "bit_rate_bps", cfg.burst.bit_rate_bps, "burst");
    detail::read_field(b, "packet_duration_ps", cfg.burst.packet_duration_ps,
                       "burst");
  }

  if (doc.contains("plant")) {
    const auto& p = doc.at("plant");
    detail::reject_unknown(
        p, {"receiver_bandwidth_hz", "noise_sigma", "rng_seed", "reflectors"},
        "plant");
    detail::read_field(p, "receiver_bandwidth_hz",
                       cfg.plant.receiver_bandwidth_hz, "plant");
    detail::read_field(p, "noise_sigma", cfg.plant.noise_sigma, "plant");
    detail::read_field(p, "rng_seed", cfg.plant.rng_seed, "plant");
    if (p.contains("reflectors")) {
      if (!p.at("reflectors").is_array())
        throw format_error("config: plant.reflectors must be an array");
      cfg.plant.reflectors.clear();
      std::size_t i = 0;
      for (const auto& rj : p.at("reflectors")) {
        const std::string where = "plant.reflectors[" + std::to_string(i++) + "]";
        detail::reject_unknown(
            rj, {"label", "round_trip_latency_ps", "amplitude"}, where);
        Reflector r;
        detail::read_field(rj, "label", r.label, where);
        detail::read_field(rj, "round_trip_latency_ps", r.round_trip_latency_ps,
                           where);
        detail::read_field(rj, "amplitude", r.amplitude, where);
        if (r.label.empty())
          throw format_error("config: " + where + " needs a label");
        cfg.plant.reflectors.push_back(std::move(r));
      }
    }
  }

  if (doc.contains("acquisition")) {
    const auto& a = doc.at("acquisition");
    detail::reject_unknown(a,
                           {"n_traces", "observation_window_ps",
                            "pre_trigger_ps", "simulate_each_trace"},
                           "acquisition");
    detail::read_field(a, "n_traces", cfg.acquisition.n_traces, "acquisition");
    detail::read_field(a, "observation_window_ps",
                       cfg.acquisition.observation_window_ps, "acquisition");
    detail::read_field(a, "pre_trigger_ps", cfg.acquisition.pre_trigger_ps,
                       "acquisition");
    detail::read_field(a, "simulate_each_trace",
                       cfg.acquisition.simulate_each_trace, "acquisition");
  }

  if (doc.contains("detect")) {
    const auto& d = doc.at("detect");
    detail::reject_unknown(
        d, {"relative_threshold", "min_separation_ps", "fit_window_samples"},
        "detect");
    detail::read_field(d, "relative_threshold", cfg.detect.relative_threshold,
                       "detect");
    detail::read_field(d, "min_separation_ps", cfg.detect.min_separation_ps,
                       "detect");
    detail::read_field(d, "fit_window_samples", cfg.detect.fit_window_samples,
                       "detect");
  }

  if (doc.contains("measure")) {
    const auto& m = doc.at("measure");
    detail::reject_unknown(
        m, {"regularization", "taper_pass_hz", "taper_stop_hz", "envelope_floor"},
        "measure");
    detail::read_field(m, "regularization", cfg.measure.regularization,
                       "measure");
    detail::read_field(m, "taper_pass_hz", cfg.measure.taper.pass_hz, "measure");
    detail::read_field(m, "taper_stop_hz", cfg.measure.taper.stop_hz, "measure");
    detail::read_field(m, "envelope_floor", cfg.measure.taper.envelope_floor,
                       "measure");
  }

  if (doc.contains("windows")) {
    const auto& w = doc.at("windows");
    if (!w.is_object())
      throw format_error("config: windows must map labels to [lo, hi] pairs");
    for (const auto& [label, range] : w.items()) {
      if (!range.is_array() || range.size() != 2 || !range[0].is_number() ||
          !range[1].is_number())
        throw format_error("config: windows." + label +
                           " must be a [lo_ps, hi_ps] pair");
      cfg.windows[label] = {range[0].get<double>(), range[1].get<double>()};
    }
  }

  if (doc.contains("fit")) {
    const auto& f = doc.at("fit");
    detail::reject_unknown(
        f, {"tau_lo_days", "tau_hi_days", "tau_points", "reference_rtt_ps"},
        "fit");
    detail::read_field(f, "tau_lo_days", cfg.tau_grid.lo_days, "fit");
    detail::read_field(f, "tau_hi_days", cfg.tau_grid.hi_days, "fit");
    detail::read_field(f, "tau_points", cfg.tau_grid.points, "fit");
    detail::read_field(f, "reference_rtt_ps", cfg.fit_reference_rtt_ps, "fit");
  }

  if (doc.contains("predict")) {
    const auto& p = doc.at("predict");
    detail::reject_unknown(p, {"tdc_mismatch_fraction"}, "predict");
    detail::read_field(p, "tdc_mismatch_fraction", cfg.tdc_mismatch_fraction,
                       "predict");
  }

  cfg.measure.detect = cfg.detect;
  if (cfg.windows.empty()) cfg.windows = default_windows(cfg.plant);
  if (cfg.fit_reference_rtt_ps == 0.0) {
    for (const Reflector& r : cfg.plant.reflectors)
      cfg.fit_reference_rtt_ps =
          std::max(cfg.fit_reference_rtt_ps, r.round_trip_latency_ps);
  }

  // Fail on violated module preconditions now, not mid-pipeline.
  if (!(cfg.sample_rate_hz > 0.0))
    throw format_error("config: sample_rate_hz must be positive");
  try {
    build_burst(cfg.burst, cfg.sample_rate_hz);
    require_valid(cfg.detect);
    require_valid(cfg.windows);
  } catch (const invalid_input& e) {
    throw format_error("config: " + std::string(e.what()));
  }
  return cfg;
}

inline RunConfig parse_run_config(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw format_error("config: " + std::string(e.what()));
  }
  return parse_run_config(doc);
}

inline RunConfig default_run_config() {
  return parse_run_config(nlohmann::json::object());
}

}  // namespace cotdr
