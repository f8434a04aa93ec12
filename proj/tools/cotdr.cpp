// Command-line front end for the correlation-OTDR latency toolkit.
//
// Subcommands form a pipeline over shared file formats:
//   simulate  config -> averaged trace (binary) + ground-truth sidecar
//   measure   trace  -> per-fiber round-trip latencies appended to a CSV
//   analyze   latency CSV -> relative-latency and pairwise-skew CSV + SVG
//   fit       latency CSV + weather CSV -> thermal model report + overlay SVG
//   predict   weather CSV + report -> filtered temperature, drift projection
//
// Exit codes are a stable scripting contract: 0 success, 1 usage,
// 2 input/format problems, 3 analysis failures.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cotdr/cotdr.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitAnalysis = 3;

cotdr::RunConfig load_config(const std::string& path) {
  if (path.empty()) return cotdr::default_run_config();
  std::ifstream in(path);
  if (!in) throw cotdr::format_error("cannot open config file: " + path);
  return cotdr::parse_run_config(in);
}

std::ofstream open_output(const fs::path& p) {
  // Binary mode keeps text outputs byte-identical across platforms.
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw cotdr::format_error("cannot open output file: " + p.string());
  return out;
}

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw cotdr::format_error("cannot open input file: " + p.string());
  return in;
}

cotdr::DwdParseResult load_weather(const std::string& path,
                                   cotdr::TimeZone tz) {
  auto in = open_input(path);
  auto parsed = cotdr::parse_dwd_10min(in, tz);
  for (const std::string& w : parsed.warnings)
    std::cerr << "warning: " << path << ": " << w << "\n";
  if (parsed.series.records.empty())
    throw cotdr::format_error(path + ": no usable temperature rows");
  return parsed;
}

void write_series_csv(const fs::path& p, const char* value_header,
                      const std::vector<std::pair<double, double>>& records) {
  auto out = open_output(p);
  out << "timestamp_s," << value_header << "\n";
  for (const auto& [t, v] : records)
    out << cotdr::detail::format_g17(t) << ','
        << cotdr::detail::format_g17(v) << "\n";
}

// X axis in days since the first sample; keeps multi-month plots readable.
std::vector<std::pair<double, double>> to_day_axis(
    const std::vector<std::pair<double, double>>& records, double t0_s) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(records.size());
  for (const auto& [t, v] : records)
    pts.emplace_back((t - t0_s) / cotdr::kSecondsPerDay, v);
  return pts;
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::string timezone = "utc";
  std::uint64_t seed = 0;
  bool seed_set = false;
  double noise = 0.0;
  bool noise_set = false;
  int parallel = 1;
};

cotdr::TimeZone parse_tz(const std::string& s) {
  return s == "mez" ? cotdr::TimeZone::mez : cotdr::TimeZone::utc;
}

// ---------------------------------------------------------------- simulate

int run_simulate(const CommonOpts& common, const std::string& trace_name) {
  cotdr::RunConfig cfg = load_config(common.config_path);
  if (common.seed_set) cfg.plant.rng_seed = common.seed;
  if (common.noise_set) cfg.plant.noise_sigma = common.noise;

  const cotdr::SampledWaveform burst =
      cotdr::build_burst(cfg.burst, cfg.sample_rate_hz);
  const cotdr::SampledWaveform trace =
      cotdr::simulate_averaged_trace(burst, cfg.plant, cfg.acquisition);

  fs::create_directories(common.out_dir);
  const fs::path trace_path = fs::path(common.out_dir) / trace_name;
  {
    auto out = open_output(trace_path);
    cotdr::write_trace(out, trace);
  }

  nlohmann::json truth;
  truth["sample_rate_hz"] = trace.sample_rate_hz;
  truth["n_traces"] = cfg.acquisition.n_traces;
  truth["noise_sigma"] = cfg.plant.noise_sigma;
  truth["rng_seed"] = cfg.plant.rng_seed;
  truth["reflectors"] = nlohmann::json::array();
  for (const cotdr::Reflector& r : cfg.plant.reflectors) {
    truth["reflectors"].push_back({{"label", r.label},
                                   {"round_trip_latency_ps",
                                    r.round_trip_latency_ps},
                                   {"amplitude", r.amplitude}});
  }
  fs::path truth_path = trace_path;
  truth_path.replace_extension();
  truth_path += "_truth.json";
  {
    auto out = open_output(truth_path);
    out << truth.dump(2) << "\n";
  }

  std::cout << "simulated " << trace.samples.size() << " samples ("
            << cfg.plant.reflectors.size() << " reflectors, noise sigma "
            << cfg.plant.noise_sigma << ", seed " << cfg.plant.rng_seed
            << ")\n"
            << "wrote " << trace_path.string() << "\n"
            << "wrote " << truth_path.string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- measure

int run_measure(const CommonOpts& common, const std::string& trace_path,
                const std::string& csv_name, double timestamp_s) {
  cotdr::RunConfig cfg = load_config(common.config_path);
  cfg.measure.parallelism = common.parallel;

  cotdr::SampledWaveform trace;
  {
    auto in = open_input(trace_path);
    trace = cotdr::read_trace(in);
  }
  const cotdr::SampledWaveform burst =
      cotdr::build_burst(cfg.burst, cfg.sample_rate_hz);

  cotdr::LatencyMeasurer measurer(burst, cfg.measure, cfg.windows);
  const cotdr::MeasureResult result = measurer.measure(trace);

  for (const auto& [label, reason] : result.failures)
    std::cerr << "warning: window '" << label << "': " << reason << "\n";

  std::cout << "reference lag: "
            << cotdr::detail::format_g17(result.reference_lag_ps) << " ps\n";
  std::cout << "label            rtt_ps              lag_ps              "
               "amplitude   fit_rms\n";
  for (const auto& [label, peak] : result.peaks) {
    std::string rtt = "-";
    if (auto it = result.latency_ps.find(label); it != result.latency_ps.end())
      rtt = cotdr::detail::format_g17(it->second);
    std::cout << label;
    for (std::size_t i = label.size(); i < 17; ++i) std::cout << ' ';
    std::cout << rtt;
    for (std::size_t i = rtt.size(); i < 20; ++i) std::cout << ' ';
    const std::string lag = cotdr::detail::format_g17(peak.refined_lag_ps);
    std::cout << lag;
    for (std::size_t i = lag.size(); i < 20; ++i) std::cout << ' ';
    char amp[64];
    std::snprintf(amp, sizeof amp, "%-11.4f %.3e", peak.amplitude,
                  peak.fit_rms_residual);
    std::cout << amp << "\n";
  }

  fs::create_directories(common.out_dir);
  const fs::path csv_path = fs::path(common.out_dir) / csv_name;
  const bool fresh = !fs::exists(csv_path);
  std::ofstream out(csv_path, std::ios::binary | std::ios::app);
  if (!out)
    throw cotdr::format_error("cannot open output file: " + csv_path.string());
  if (fresh) out << "timestamp_s,fiber,rtt_ps\n";
  for (const auto& [label, rtt_ps] : result.latency_ps) {
    cotdr::LatencyRecord rec{timestamp_s, label, rtt_ps};
    cotdr::require_valid(rec);
    out << cotdr::detail::format_g17(rec.timestamp_s) << ',' << rec.fiber
        << ',' << cotdr::detail::format_g17(rec.rtt_ps) << "\n";
  }
  std::cout << (fresh ? "wrote " : "appended to ") << csv_path.string()
            << " (" << result.latency_ps.size() << " fibers, timestamp "
            << cotdr::detail::format_g17(timestamp_s) << ")\n";
  return kExitOk;
}

// ----------------------------------------------------------------- analyze

int run_analyze(const CommonOpts& common, const std::string& latency_path,
                const std::vector<std::string>& only_fibers) {
  cotdr::LatencyCsv csv;
  {
    auto in = open_input(latency_path);
    csv = cotdr::read_latency_csv(in);
  }
  auto by_fiber = cotdr::group_by_fiber(csv.records);
  if (!only_fibers.empty()) {
    std::map<std::string, cotdr::LatencySeries> kept;
    for (const std::string& f : only_fibers) {
      auto it = by_fiber.find(f);
      if (it == by_fiber.end())
        throw cotdr::invalid_input("analyze: no records for fiber '" + f + "'");
      kept.insert(*it);
    }
    by_fiber = std::move(kept);
  }
  if (by_fiber.empty())
    throw cotdr::invalid_input("analyze: latency file has no records");

  fs::create_directories(common.out_dir);
  const fs::path out_dir(common.out_dir);
  const double t0 = csv.records.front().timestamp_s;

  std::vector<cotdr::PlotSeries> all_relative;
  for (const auto& [label, series] : by_fiber) {
    const cotdr::LatencySeries rel = cotdr::relative_series(series);
    write_series_csv(out_dir / ("relative_" + label + ".csv"), "delta_ps",
                     rel.records);
    cotdr::PlotSeries ps{label, to_day_axis(rel.records, t0)};
    auto svg = open_output(out_dir / ("relative_" + label + ".svg"));
    svg << cotdr::render_line_plot(
        {"Relative round-trip latency: " + label, "days", "delta (ps)"}, {ps});
    all_relative.push_back(std::move(ps));
  }
  {
    auto svg = open_output(out_dir / "relative_all.svg");
    svg << cotdr::render_line_plot(
        {"Relative round-trip latency", "days", "delta (ps)"}, all_relative);
  }

  std::size_t pairs = 0;
  for (auto a = by_fiber.begin(); a != by_fiber.end(); ++a) {
    for (auto b = std::next(a); b != by_fiber.end(); ++b) {
      const cotdr::LatencySeries sk = cotdr::skew_series(a->second, b->second);
      const std::string stem = "skew_" + a->first + "_" + b->first;
      write_series_csv(out_dir / (stem + ".csv"), "skew_ps", sk.records);
      auto svg = open_output(out_dir / (stem + ".svg"));
      svg << cotdr::render_line_plot(
          {"Skew (offset to minimum): " + a->first + " vs " + b->first,
           "days", "skew (ps)"},
          {{a->first + " - " + b->first, to_day_axis(sk.records, t0)}});
      ++pairs;
    }
  }
  std::cout << "analyzed " << by_fiber.size() << " fibers, " << pairs
            << " skew pairs -> " << out_dir.string() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------- fit

int run_fit(const CommonOpts& common, const std::string& latency_path,
            const std::string& air_path, const std::string& fiber,
            double reference_rtt_ps, const std::string& report_name) {
  cotdr::RunConfig cfg = load_config(common.config_path);

  cotdr::LatencyCsv csv;
  {
    auto in = open_input(latency_path);
    csv = cotdr::read_latency_csv(in);
  }
  auto by_fiber = cotdr::group_by_fiber(csv.records);
  auto it = by_fiber.find(fiber);
  if (it == by_fiber.end())
    throw cotdr::invalid_input("fit: no records for fiber '" + fiber + "'");
  const cotdr::LatencySeries& series = it->second;

  const auto weather = load_weather(air_path, parse_tz(common.timezone));

  double ref_rtt = reference_rtt_ps;
  if (!(ref_rtt > 0.0)) ref_rtt = cfg.fit_reference_rtt_ps;
  if (!(ref_rtt > 0.0)) {
    for (const auto& [t, rtt] : series.records) ref_rtt += rtt;
    ref_rtt /= static_cast<double>(series.records.size());
  }

  const cotdr::ThermalFit fit = cotdr::fit_thermal(
      series, weather.series, cfg.tau_grid, ref_rtt, common.parallel);

  fs::create_directories(common.out_dir);
  const fs::path report_path = fs::path(common.out_dir) / report_name;
  {
    auto out = open_output(report_path);
    cotdr::write_fit_report(out, fit);
  }

  // Overlay: measured latency vs the fitted model, both relative to the
  // measured mean so picosecond variation is visible.
  double mean_rtt = 0.0;
  for (const auto& [t, rtt] : series.records) mean_rtt += rtt;
  mean_rtt /= static_cast<double>(series.records.size());
  std::vector<double> times;
  times.reserve(series.records.size());
  for (const auto& [t, rtt] : series.records) times.push_back(t);
  const auto model = cotdr::thermal_model_eval(weather.series, fit, times);

  const double t0 = series.records.front().first;
  std::vector<std::pair<double, double>> measured_pts, model_pts;
  for (const auto& [t, rtt] : series.records)
    measured_pts.emplace_back((t - t0) / cotdr::kSecondsPerDay,
                              rtt - mean_rtt);
  for (const auto& [t, y] : model)
    model_pts.emplace_back((t - t0) / cotdr::kSecondsPerDay, y - mean_rtt);
  {
    auto svg = open_output(fs::path(common.out_dir) / "fit_overlay.svg");
    svg << cotdr::render_line_plot(
        {"Thermal model fit: " + fiber, "days", "latency - mean (ps)"},
        {{"measured", measured_pts}, {"model", model_pts}});
  }

  std::cout << "fit " << fiber << ": TDC "
            << cotdr::detail::format_g17(fit.tdc_ppm_per_k)
            << " ppm/K, tau " << cotdr::detail::format_g17(fit.tau_days)
            << " days, rms residual "
            << cotdr::detail::format_g17(fit.rms_residual_ps) << " ps"
            << (fit.low_confidence ? " (low confidence)" : "") << "\n"
            << "wrote " << report_path.string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- predict

int run_predict(const CommonOpts& common, const std::string& air_path,
                const std::string& report_path) {
  cotdr::RunConfig cfg = load_config(common.config_path);

  std::vector<cotdr::ThermalFit> fits;
  {
    auto in = open_input(report_path);
    fits = cotdr::read_fit_report(in);
  }
  if (fits.empty())
    throw cotdr::format_error(report_path + ": report has no fits");
  const cotdr::ThermalFit& fit = fits.back();

  const auto weather = load_weather(air_path, parse_tz(common.timezone));
  const cotdr::AnnualProjection proj = cotdr::annual_projection(
      weather.series, fit, cfg.tdc_mismatch_fraction);

  const cotdr::TemperatureSeries fiber_temp = cotdr::lowpass_filter(
      weather.series, fit.tau_days, weather.series.records.front().second);
  const cotdr::LatencySeries delta =
      cotdr::predict_latency_delta(fiber_temp, fit);

  fs::create_directories(common.out_dir);
  const fs::path out_dir(common.out_dir);
  write_series_csv(out_dir / "fiber_temperature.csv", "temp_c",
                   fiber_temp.records);
  write_series_csv(out_dir / "latency_projection.csv", "delta_ps",
                   delta.records);

  nlohmann::json stats;
  stats["tau_days"] = fit.tau_days;
  stats["tdc_ppm_per_k"] = fit.tdc_ppm_per_k;
  stats["tdc_mismatch_fraction"] = cfg.tdc_mismatch_fraction;
  stats["fiber_temp_pk_pk_k"] = proj.fiber_temp_pk_pk_k;
  stats["latency_pk_pk_ps"] = proj.latency_pk_pk_ps;
  stats["skew_pk_pk_ps"] = proj.skew_pk_pk_ps;
  stats["fiber_temp_pk_pk_last_365_k"] = proj.fiber_temp_pk_pk_last_365_k;
  stats["latency_pk_pk_last_365_ps"] = proj.latency_pk_pk_last_365_ps;
  stats["skew_pk_pk_last_365_ps"] = proj.skew_pk_pk_last_365_ps;
  stats["window_start_s"] = proj.window_start_s;
  stats["window_end_s"] = proj.window_end_s;
  {
    auto out = open_output(out_dir / "projection.json");
    out << stats.dump(2) << "\n";
  }

  const double t0 = weather.series.records.front().first;
  {
    auto svg = open_output(out_dir / "prediction.svg");
    svg << cotdr::render_line_plot(
        {"Air vs. filtered fiber temperature", "days", "temperature (C)"},
        {{"air", to_day_axis(weather.series.records, t0)},
         {"fiber (filtered)", to_day_axis(fiber_temp.records, t0)}});
  }

  std::cout << "projection over "
            << cotdr::detail::format_g17(
                   (proj.window_end_s - proj.window_start_s) /
                   cotdr::kSecondsPerDay)
            << " days (after 3-tau spin-up):\n"
            << "  fiber temperature pk-pk: "
            << cotdr::detail::format_g17(proj.fiber_temp_pk_pk_k) << " K\n"
            << "  latency pk-pk:           "
            << cotdr::detail::format_g17(proj.latency_pk_pk_ps) << " ps\n"
            << "  skew pk-pk:              "
            << cotdr::detail::format_g17(proj.skew_pk_pk_ps) << " ps\n"
            << "wrote " << (out_dir / "projection.json").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Correlation-OTDR latency toolkit: simulate reflected PRBS traces, "
      "measure per-fiber round-trip latency to picosecond precision, and "
      "model temperature-driven drift."};
  app.require_subcommand(1);

  CommonOpts common;
  std::string trace_name = "trace.bin";
  std::string trace_path;
  std::string csv_name = "latency.csv";
  double timestamp_s = 0.0;
  std::string latency_path;
  std::string air_path;
  std::string fiber = "fiber1";
  double reference_rtt_ps = 0.0;
  std::string report_name = "fit_report.jsonl";
  std::string report_path;
  std::vector<std::string> only_fibers;

  const auto add_common = [&](CLI::App* sub, bool with_tz) {
    sub->add_option("--config", common.config_path,
                    "Run configuration JSON (defaults match the reference "
                    "four-fiber setup)");
    sub->add_option("--out", common.out_dir, "Output directory")
        ->capture_default_str();
    if (with_tz)
      sub->add_option("--timezone", common.timezone,
                      "Timestamp zone of the weather file")
          ->check(CLI::IsMember({"utc", "mez"}))
          ->capture_default_str();
  };

  CLI::App* sim = app.add_subcommand(
      "simulate", "Simulate an averaged multi-reflector trace");
  add_common(sim, false);
  auto* seed_opt =
      sim->add_option("--seed", common.seed, "Override the noise RNG seed");
  auto* noise_opt = sim->add_option(
      "--noise", common.noise, "Override per-trace noise sigma (0 = none)");
  sim->add_option("--trace", trace_name, "Trace file name")
      ->capture_default_str();

  CLI::App* mea = app.add_subcommand(
      "measure", "Recover per-fiber round-trip latencies from a trace");
  add_common(mea, false);
  mea->add_option("--trace", trace_path, "Trace file to measure")->required();
  mea->add_option("--csv", csv_name, "Latency CSV to append to")
      ->capture_default_str();
  mea->add_option("--timestamp", timestamp_s,
                  "Timestamp (epoch seconds) recorded with the measurement")
      ->capture_default_str();
  mea->add_option("--parallel", common.parallel,
                  "Threads for segment interpolation and peak refinement "
                  "(identical results)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CLI::App* ana = app.add_subcommand(
      "analyze", "Relative-latency and pairwise-skew series from a latency CSV");
  add_common(ana, false);
  ana->add_option("--latency", latency_path, "Latency CSV")->required();
  ana->add_option("--fibers", only_fibers,
                  "Restrict to these fiber labels (default: all)");

  CLI::App* fitc = app.add_subcommand(
      "fit", "Fit the first-order thermal model to measured latency");
  add_common(fitc, true);
  fitc->add_option("--latency", latency_path, "Latency CSV")->required();
  fitc->add_option("--air", air_path, "Weather-station 10-minute CSV")
      ->required();
  fitc->add_option("--fiber", fiber, "Fiber label to fit")
      ->capture_default_str();
  fitc->add_option("--reference-rtt-ps", reference_rtt_ps,
                   "Round-trip time used to convert slope to ppm/K "
                   "(default: config, else the series mean)");
  fitc->add_option("--report", report_name, "Report file name")
      ->capture_default_str();
  fitc->add_option("--parallel", common.parallel,
                   "Threads for the tau-grid search (identical results)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CLI::App* pre = app.add_subcommand(
      "predict", "Project latency drift from a fit report and weather record");
  add_common(pre, true);
  pre->add_option("--air", air_path, "Weather-station 10-minute CSV")
      ->required();
  pre->add_option("--report", report_path, "Fit report (JSON lines)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  common.seed_set = seed_opt->count() > 0;
  common.noise_set = noise_opt->count() > 0;

  try {
    if (sim->parsed()) return run_simulate(common, trace_name);
    if (mea->parsed())
      return run_measure(common, trace_path, csv_name, timestamp_s);
    if (ana->parsed()) return run_analyze(common, latency_path, only_fibers);
    if (fitc->parsed())
      return run_fit(common, latency_path, air_path, fiber, reference_rtt_ps,
                     report_name);
    if (pre->parsed()) return run_predict(common, air_path, report_path);
  } catch (const cotdr::analysis_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAnalysis;
  } catch (const cotdr::invalid_input& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const cotdr::format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAnalysis;
  }
  return kExitUsage;
}
