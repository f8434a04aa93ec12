#include "cotdr/thermal.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace {

using cotdr::AnnualProjection;
using cotdr::kSecondsPerDay;
using cotdr::LatencySeries;
using cotdr::lowpass_filter;
using cotdr::TauGrid;
using cotdr::TemperatureSeries;
using cotdr::ThermalFit;

TemperatureSeries sine_air(double offset_c, double amplitude_k,
                           double period_days, double step_s,
                           double duration_days) {
  TemperatureSeries air;
  const double omega = 2.0 * std::numbers::pi / (period_days * kSecondsPerDay);
  const auto n = static_cast<std::size_t>(duration_days * kSecondsPerDay / step_s);
  air.records.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * step_s;
    air.records.emplace_back(t, offset_c + amplitude_k * std::sin(omega * t));
  }
  return air;
}

TEST(Lowpass, StepResponseMatchesClosedForm) {
  // Constant input after t0: 1 - exp(-(t_k - t0)/tau) regardless of how the
  // intermediate samples are spaced.
  TemperatureSeries air;
  const std::vector<double> gaps_s = {600.0, 600.0, 1800.0, 600.0, 86400.0,
                                      43200.0, 600.0, 604800.0, 600.0};
  double t = 0.0;
  air.records.emplace_back(t, 1.0);
  for (double g : gaps_s) {
    t += g;
    air.records.emplace_back(t, 1.0);
  }
  const double tau_days = 2.5;
  const auto out = lowpass_filter(air, tau_days, 0.0);
  ASSERT_EQ(out.records.size(), air.records.size());
  EXPECT_DOUBLE_EQ(out.records[0].second, 0.0);
  for (std::size_t k = 1; k < out.records.size(); ++k) {
    const double elapsed_days = out.records[k].first / kSecondsPerDay;
    const double expect = 1.0 - std::exp(-elapsed_days / tau_days);
    EXPECT_NEAR(out.records[k].second, expect, 1e-12) << "sample " << k;
    EXPECT_DOUBLE_EQ(out.records[k].first, air.records[k].first);
  }
}

// Quadrature demodulation of the fundamental at omega over an integer number
// of periods starting at start_s.
struct Fundamental {
  double amplitude = 0.0;
  double phase_lag = 0.0;
};

Fundamental demodulate(const TemperatureSeries& s, double omega,
                       double start_s) {
  double i_sum = 0.0, q_sum = 0.0;
  std::size_t n = 0;
  for (const auto& [t, v] : s.records) {
    if (t < start_s) continue;
    i_sum += v * std::sin(omega * t);
    q_sum += v * std::cos(omega * t);
    ++n;
  }
  Fundamental f;
  f.amplitude = 2.0 * std::hypot(i_sum, q_sum) / static_cast<double>(n);
  f.phase_lag = std::atan2(-q_sum, i_sum);
  return f;
}

TEST(Lowpass, DailySinusoidGainAndPhase) {
  // tau = 12.7 days against the diurnal cycle: gain 1/sqrt(1+(wt)^2), an
  // attenuation of roughly 80x.
  const double tau_days = 12.7;
  const double omega = 2.0 * std::numbers::pi / kSecondsPerDay;
  const double wt = omega * tau_days * kSecondsPerDay;
  const double gain = 1.0 / std::sqrt(1.0 + wt * wt);
  const double amp = 10.0;
  auto air = sine_air(12.0, amp, 1.0, 600.0, 40.0);
  // Start from the analytic steady state so no spin-up transient pollutes
  // the measurement window.
  const double init = 12.0 - amp * gain * gain * wt;
  const auto out = lowpass_filter(air, tau_days, init);
  // Demodulate the last 20 days: exactly 20 periods of 144 samples.
  const auto f = demodulate(out, omega, 20.0 * kSecondsPerDay);
  EXPECT_NEAR(f.amplitude, amp * gain, 0.01 * amp * gain);
  EXPECT_NEAR(f.phase_lag, std::atan(wt), 0.05);
  EXPECT_NEAR(gain, 0.0125309, 1e-6);  // anchor the analytic value itself
}

TEST(Lowpass, AnnualSinusoidPassesAlmostUnattenuated) {
  const double tau_days = 12.7;
  const double omega = 2.0 * std::numbers::pi / (365.0 * kSecondsPerDay);
  const double wt = omega * tau_days * kSecondsPerDay;
  const double gain = 1.0 / std::sqrt(1.0 + wt * wt);
  const double amp = 10.0;
  auto air = sine_air(8.0, amp, 365.0, 0.25 * kSecondsPerDay, 730.0);
  const double init = 8.0 - amp * gain * gain * wt;
  const auto out = lowpass_filter(air, tau_days, init);
  const auto f = demodulate(out, omega, 365.0 * kSecondsPerDay);
  EXPECT_NEAR(f.amplitude, amp * gain, 0.01 * amp * gain);
  EXPECT_NEAR(gain, 0.9769255, 1e-6);
}

TEST(Lowpass, ExtremeTauLimits) {
  TemperatureSeries air;
  for (int k = 0; k < 200; ++k)
    air.records.emplace_back(600.0 * k, (k % 7) - 3.0);
  // tau far below the sample spacing: the filter tracks the input.
  const auto fast = lowpass_filter(air, 1e-4, 50.0);
  for (std::size_t k = 1; k < fast.records.size(); ++k)
    EXPECT_NEAR(fast.records[k].second, air.records[k].second, 1e-9);
  // tau far above the record length: the state barely moves.
  const auto slow = lowpass_filter(air, 1e6, 50.0);
  for (const auto& [t, v] : slow.records) EXPECT_NEAR(v, 50.0, 1e-3);
}

TEST(Lowpass, OutputStaysInsideInputEnvelope) {
  // Every update is a convex combination, so the state can never leave the
  // interval spanned by the initial value and the inputs seen so far.
  std::vector<double> values = {3.0, -7.0, 11.0, 2.0, 2.0, -1.0, 9.5, -6.25};
  TemperatureSeries air;
  for (std::size_t k = 0; k < values.size(); ++k)
    air.records.emplace_back(900.0 * static_cast<double>(k * k + 1), values[k]);
  for (double tau : {0.001, 0.05, 1.0, 30.0}) {
    const auto out = lowpass_filter(air, tau, 1.5);
    double lo = 1.5, hi = 1.5;
    for (std::size_t k = 0; k < out.records.size(); ++k) {
      lo = std::min(lo, values[k]);
      hi = std::max(hi, values[k]);
      EXPECT_GE(out.records[k].second, lo - 1e-12);
      EXPECT_LE(out.records[k].second, hi + 1e-12);
    }
  }
}

TEST(Lowpass, RejectsBadArguments) {
  TemperatureSeries air;
  air.records = {{0.0, 1.0}, {600.0, 2.0}};
  EXPECT_THROW(lowpass_filter(TemperatureSeries{}, 1.0, 0.0),
               cotdr::invalid_input);
  EXPECT_THROW(lowpass_filter(air, 0.0, 0.0), cotdr::invalid_input);
  EXPECT_THROW(lowpass_filter(air, -1.0, 0.0), cotdr::invalid_input);
  TemperatureSeries unordered;
  unordered.records = {{600.0, 1.0}, {0.0, 2.0}};
  EXPECT_THROW(lowpass_filter(unordered, 1.0, 0.0), cotdr::invalid_input);
}

TEST(InitialFilterState, AveragesUpToThreeTauOfHistory) {
  TemperatureSeries air;
  for (int d = 0; d <= 30; ++d)
    air.records.emplace_back(d * kSecondsPerDay, static_cast<double>(d));
  // 3 tau = 12 days of history before day 30: mean of 18..30 inclusive.
  EXPECT_DOUBLE_EQ(
      cotdr::detail::initial_filter_state(air, 30.0 * kSecondsPerDay, 4.0),
      24.0);
  // No history at all: fall back to the first air sample.
  EXPECT_DOUBLE_EQ(
      cotdr::detail::initial_filter_state(air, -5.0 * kSecondsPerDay, 4.0),
      0.0);
}

// Synthesizes a latency series that follows the thermal model exactly:
// latency(t) = rtt * tdc * 1e-6 * T_fiber(t) + offset, with T_fiber the
// filtered air temperature, seeded the way the fit seeds it.
struct SyntheticThermal {
  TemperatureSeries air;
  LatencySeries latency;
  double tdc = 7.5;
  double tau_days = 8.0;
  double rtt_ps = 83255596.77688755;
  double offset_ps = -480000.0;
};

SyntheticThermal make_thermal_scene() {
  SyntheticThermal s;
  TemperatureSeries air;
  const double step_s = 600.0;
  const auto n = static_cast<std::size_t>(150.0 * kSecondsPerDay / step_s);
  const double w_day = 2.0 * std::numbers::pi / kSecondsPerDay;
  const double w_slow = 2.0 * std::numbers::pi / (60.0 * kSecondsPerDay);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * step_s;
    air.records.emplace_back(
        t, 10.0 + 6.0 * std::sin(w_slow * t) + 4.0 * std::sin(w_day * t));
  }
  s.air = std::move(air);

  const double lat_start_s = 30.0 * kSecondsPerDay;
  const double init = cotdr::detail::initial_filter_state(
      s.air, lat_start_s, s.tau_days);
  const TemperatureSeries fiber = lowpass_filter(s.air, s.tau_days, init);
  const double slope = s.rtt_ps * s.tdc * 1e-6;
  s.latency.fiber = "fiber1";
  for (std::size_t k = 0; k < fiber.records.size(); k += 12) {
    const auto& [t, temp] = fiber.records[k];
    if (t < lat_start_s || t > 140.0 * kSecondsPerDay) continue;
    s.latency.records.emplace_back(t, slope * temp + s.offset_ps);
  }
  return s;
}

TEST(FitThermal, RecoversPlantedParameters) {
  const SyntheticThermal s = make_thermal_scene();
  const ThermalFit fit =
      cotdr::fit_thermal(s.latency, s.air, TauGrid{0.5, 50.0, 60}, s.rtt_ps);
  EXPECT_NEAR(fit.tdc_ppm_per_k, s.tdc, 0.01 * s.tdc);
  EXPECT_NEAR(fit.tau_days, s.tau_days, 0.02 * s.tau_days);
  EXPECT_NEAR(fit.offset_ps, s.offset_ps, 1.0);
  EXPECT_LT(fit.rms_residual_ps, 0.01);
  EXPECT_LT(fit.residual_ratio, 1e-3);
  EXPECT_FALSE(fit.low_confidence);
  EXPECT_DOUBLE_EQ(fit.reference_rtt_ps, s.rtt_ps);
}

TEST(FitThermal, TdcScalesInverselyWithReferenceRtt) {
  // The physical slope (ps per kelvin) is what the data pins down; halving
  // the assumed round-trip time must exactly double the reported TDC.
  const SyntheticThermal s = make_thermal_scene();
  const TauGrid grid{0.5, 50.0, 20};
  const ThermalFit a = cotdr::fit_thermal(s.latency, s.air, grid, s.rtt_ps);
  const ThermalFit b =
      cotdr::fit_thermal(s.latency, s.air, grid, 0.5 * s.rtt_ps);
  EXPECT_DOUBLE_EQ(a.tau_days, b.tau_days);
  EXPECT_NEAR(b.tdc_ppm_per_k, 2.0 * a.tdc_ppm_per_k,
              1e-9 * std::abs(b.tdc_ppm_per_k));
}

TEST(FitThermal, ParallelGridMatchesSequential) {
  const SyntheticThermal s = make_thermal_scene();
  const TauGrid grid{0.5, 50.0, 24};
  const ThermalFit seq = cotdr::fit_thermal(s.latency, s.air, grid, s.rtt_ps, 1);
  const ThermalFit par = cotdr::fit_thermal(s.latency, s.air, grid, s.rtt_ps, 4);
  EXPECT_EQ(seq.tau_days, par.tau_days);
  EXPECT_EQ(seq.tdc_ppm_per_k, par.tdc_ppm_per_k);
  EXPECT_EQ(seq.rms_residual_ps, par.rms_residual_ps);
  EXPECT_EQ(seq.offset_ps, par.offset_ps);
}

TEST(FitThermal, FlagsThermallyUncorrelatedLatency) {
  // Alternating +-500 ps cannot be explained by any smooth filtered
  // temperature: the best fit explains nothing and must say so.
  TemperatureSeries air = sine_air(10.0, 8.0, 30.0, 3600.0, 60.0);
  LatencySeries latency;
  latency.fiber = "noisy";
  for (int k = 0; k < 200; ++k)
    latency.records.emplace_back(3600.0 * 6.0 * k + 1800.0,
                                 (k % 2 == 0) ? 500.0 : -500.0);
  const ThermalFit fit =
      cotdr::fit_thermal(latency, air, TauGrid{0.5, 50.0, 30}, 1e6);
  EXPECT_TRUE(fit.low_confidence);
  EXPECT_GT(fit.residual_ratio, 0.9);
}

TEST(FitThermal, RejectsBadInputs) {
  const SyntheticThermal s = make_thermal_scene();
  const TauGrid grid{0.5, 50.0, 10};
  EXPECT_THROW(cotdr::fit_thermal(LatencySeries{}, s.air, grid, s.rtt_ps),
               cotdr::invalid_input);
  EXPECT_THROW(cotdr::fit_thermal(s.latency, TemperatureSeries{}, grid, s.rtt_ps),
               cotdr::invalid_input);
  EXPECT_THROW(cotdr::fit_thermal(s.latency, s.air, TauGrid{0.0, 50.0, 10},
                                  s.rtt_ps),
               cotdr::invalid_input);
  EXPECT_THROW(cotdr::fit_thermal(s.latency, s.air, TauGrid{5.0, 5.0, 10},
                                  s.rtt_ps),
               cotdr::invalid_input);
  EXPECT_THROW(cotdr::fit_thermal(s.latency, s.air, TauGrid{0.5, 50.0, 1},
                                  s.rtt_ps),
               cotdr::invalid_input);
  EXPECT_THROW(cotdr::fit_thermal(s.latency, s.air, grid, 0.0),
               cotdr::invalid_input);
  EXPECT_THROW(cotdr::fit_thermal(s.latency, s.air, grid, s.rtt_ps, 0),
               cotdr::invalid_input);
  // Disjoint time ranges: nothing to regress on.
  LatencySeries later;
  later.fiber = "f";
  later.records = {{400.0 * kSecondsPerDay, 1.0},
                   {401.0 * kSecondsPerDay, 2.0}};
  try {
    cotdr::fit_thermal(later, s.air, grid, s.rtt_ps);
    FAIL() << "expected invalid_input";
  } catch (const cotdr::invalid_input& e) {
    EXPECT_NE(std::string(e.what()).find("overlap"), std::string::npos);
  }
}

TEST(PredictLatencyDelta, IsExactlyLinearInTemperature) {
  TemperatureSeries fiber;
  fiber.records = {{0.0, 5.0}, {600.0, 7.25}, {1200.0, 4.0}, {1800.0, 5.0}};
  ThermalFit fit;
  fit.tdc_ppm_per_k = 7.5;
  fit.reference_rtt_ps = 1e6;
  fit.tau_days = 5.0;
  const LatencySeries out = cotdr::predict_latency_delta(fiber, fit);
  EXPECT_EQ(out.fiber, "model");
  ASSERT_EQ(out.records.size(), 4u);
  EXPECT_DOUBLE_EQ(out.records[0].second, 0.0);
  EXPECT_DOUBLE_EQ(out.records[1].second, 7.5 * 2.25);
  EXPECT_DOUBLE_EQ(out.records[2].second, 7.5 * -1.0);
  EXPECT_DOUBLE_EQ(out.records[3].second, 0.0);
  ThermalFit bad = fit;
  bad.tau_days = 0.0;
  EXPECT_THROW(cotdr::predict_latency_delta(fiber, bad), cotdr::invalid_input);
  EXPECT_THROW(cotdr::predict_latency_delta(TemperatureSeries{}, fit),
               cotdr::invalid_input);
}

TEST(ThermalModelEval, MatchesManualRecomputation) {
  TemperatureSeries air = sine_air(10.0, 5.0, 3.0, 3600.0, 20.0);
  ThermalFit fit;
  fit.tau_days = 3.0;
  fit.initial_fiber_temp_c = 5.0;
  fit.tdc_ppm_per_k = 7.5;
  fit.reference_rtt_ps = 1e6;
  fit.offset_ps = -100.0;
  std::vector<double> times;
  for (std::size_t k = 10; k < air.records.size(); k += 37)
    times.push_back(air.records[k].first);
  times.push_back(1e12);  // outside the air span: silently skipped
  const auto eval = cotdr::thermal_model_eval(air, fit, times);
  ASSERT_EQ(eval.size(), times.size() - 1);
  const TemperatureSeries fiber = lowpass_filter(air, 3.0, 5.0);
  for (std::size_t i = 0; i < eval.size(); ++i) {
    EXPECT_DOUBLE_EQ(eval[i].first, times[i]);
    const std::size_t k = 10 + 37 * i;
    EXPECT_NEAR(eval[i].second, 7.5 * fiber.records[k].second - 100.0, 1e-9);
  }
}

TEST(AnnualProjection, SyntheticYearMatchesAnalyticSwing) {
  const double tau_days = 12.7;
  const double omega = 2.0 * std::numbers::pi / (365.0 * kSecondsPerDay);
  const double wt = omega * tau_days * kSecondsPerDay;
  const double gain = 1.0 / std::sqrt(1.0 + wt * wt);
  const double amp = 10.0;
  const TemperatureSeries air =
      sine_air(8.0, amp, 365.0, 0.25 * kSecondsPerDay, 420.0);
  ThermalFit fit;
  fit.tau_days = tau_days;
  fit.tdc_ppm_per_k = 7.5;
  fit.reference_rtt_ps = 83255596.77688755;
  const AnnualProjection proj = cotdr::annual_projection(air, fit, 0.01);
  const double sens = fit.reference_rtt_ps * 7.5e-6;
  EXPECT_NEAR(proj.fiber_temp_pk_pk_k, 2.0 * amp * gain,
              0.01 * 2.0 * amp * gain);
  EXPECT_NEAR(proj.latency_pk_pk_ps, sens * proj.fiber_temp_pk_pk_k, 1e-6);
  EXPECT_DOUBLE_EQ(proj.skew_pk_pk_ps, 0.01 * proj.latency_pk_pk_ps);
  // Both extremes fall inside the trailing 365 days too, so the two windows
  // report identical swings here.
  EXPECT_DOUBLE_EQ(proj.fiber_temp_pk_pk_last_365_k, proj.fiber_temp_pk_pk_k);
  EXPECT_DOUBLE_EQ(proj.latency_pk_pk_last_365_ps, proj.latency_pk_pk_ps);
  EXPECT_DOUBLE_EQ(proj.window_start_s,
                   air.records.front().first + 3.0 * tau_days * kSecondsPerDay);
  EXPECT_DOUBLE_EQ(proj.window_end_s, air.records.back().first);
}

TEST(AnnualProjection, RejectsRecordsShorterThanSpinUpPlusYear) {
  const TemperatureSeries air =
      sine_air(8.0, 10.0, 365.0, 0.25 * kSecondsPerDay, 100.0);
  ThermalFit fit;
  fit.tau_days = 12.7;
  fit.reference_rtt_ps = 1e6;
  fit.tdc_ppm_per_k = 7.5;
  try {
    cotdr::annual_projection(air, fit, 0.01);
    FAIL() << "expected invalid_input";
  } catch (const cotdr::invalid_input& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("need at least"), std::string::npos);
    EXPECT_NE(msg.find("3 tau spin-up + 365-day projection"), std::string::npos);
  }
}

}  // namespace
