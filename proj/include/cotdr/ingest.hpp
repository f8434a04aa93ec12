#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotdr/errors.hpp"
#include "cotdr/series.hpp"
#include "cotdr/thermal.hpp"
#include "cotdr/waveform.hpp"

namespace cotdr {

// ---------------------------------------------------------------------------
// Weather-service 10-minute air temperature files: semicolon-separated, one
// header line naming the columns, rows terminated by an "eor" marker,
// -999 as the missing-value sentinel in TT_10.
// ---------------------------------------------------------------------------

enum class TimeZone { utc, mez };  // mez: legacy central European winter time, UTC+1

struct DwdRecord {
  long long station_id = 0;
  double measurement_time_s = 0.0;  // UTC seconds
  int quality = 0;
  double air_temp_c = 0.0;
};

struct DwdParseResult {
  std::vector<DwdRecord> records;
  TemperatureSeries series;
  std::size_t rows_total = 0;
  std::size_t rows_missing = 0;     // TT_10 == -999
  std::size_t rows_bad = 0;         // unparseable, skipped
  std::size_t rows_out_of_order = 0;  // duplicate or backwards timestamp
  std::vector<std::string> warnings;  // line-numbered, capped
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_semicolons(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(';', pos);
    if (next == std::string_view::npos) {
      out.push_back(trim(line.substr(pos)));
      break;
    }
    out.push_back(trim(line.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

inline bool parse_ll(std::string_view s, long long& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Days since 1970-01-01 for a proleptic Gregorian civil date.
inline long long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

// YYYYMMDDHHMM -> UTC seconds; returns false on malformed input.
inline bool parse_dwd_timestamp(std::string_view s, TimeZone tz, double& out) {
  if (s.size() != 12) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = 0; i < len; ++i) v = v * 10 + (s[pos + i] - '0');
    return v;
  };
  const int year = num(0, 4), month = num(4, 2), day = num(6, 2);
  const int hour = num(8, 2), minute = num(10, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31) return false;
  if (hour > 23 || minute > 59) return false;
  double t = static_cast<double>(days_from_civil(year, month, day)) * 86400.0 +
             hour * 3600.0 + minute * 60.0;
  if (tz == TimeZone::mez) t -= 3600.0;
  out = t;
  return true;
}

}  // namespace detail

inline DwdParseResult parse_dwd_10min(std::istream& in,
                                      TimeZone tz = TimeZone::utc) {
  std::string line;
  if (!std::getline(in, line))
    throw format_error("dwd: empty input, expected a header line");
  const auto header = detail::split_semicolons(line);
  auto column = [&](std::string_view name) -> std::ptrdiff_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  };
  const std::ptrdiff_t col_station = column("STATIONS_ID");
  const std::ptrdiff_t col_time = column("MESS_DATUM");
  const std::ptrdiff_t col_quality = column("QN");
  const std::ptrdiff_t col_temp = column("TT_10");
  if (col_temp < 0) throw format_error("dwd: header has no TT_10 column");
  if (col_time < 0) throw format_error("dwd: header has no MESS_DATUM column");

  DwdParseResult result;
  constexpr std::size_t kMaxWarnings = 20;
  auto warn = [&](std::size_t line_no, const std::string& what) {
    if (result.warnings.size() < kMaxWarnings)
      result.warnings.push_back("line " + std::to_string(line_no) + ": " + what);
  };

  std::size_t line_no = 1;
  double last_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    ++result.rows_total;
    const auto fields = detail::split_semicolons(line);
    const auto need = static_cast<std::size_t>(std::max(col_time, col_temp)) + 1;
    if (fields.size() < need) {
      ++result.rows_bad;
      warn(line_no, "too few fields");
      continue;
    }
    DwdRecord rec;
    if (!detail::parse_dwd_timestamp(fields[static_cast<std::size_t>(col_time)],
                                     tz, rec.measurement_time_s)) {
      ++result.rows_bad;
      warn(line_no, "bad MESS_DATUM '" +
                        std::string(fields[static_cast<std::size_t>(col_time)]) + "'");
      continue;
    }
    double temp = 0.0;
    if (!detail::parse_double(fields[static_cast<std::size_t>(col_temp)], temp)) {
      ++result.rows_bad;
      warn(line_no, "bad TT_10 '" +
                        std::string(fields[static_cast<std::size_t>(col_temp)]) + "'");
      continue;
    }
    if (temp == -999.0) {
      ++result.rows_missing;
      continue;
    }
    if (col_station >= 0)
      detail::parse_ll(fields[static_cast<std::size_t>(col_station)],
                       rec.station_id);
    if (col_quality >= 0) {
      long long q = 0;
      if (detail::parse_ll(fields[static_cast<std::size_t>(col_quality)], q))
        rec.quality = static_cast<int>(q);
    }
    if (rec.measurement_time_s <= last_t) {
      ++result.rows_out_of_order;
      warn(line_no, "non-increasing timestamp, row dropped");
      continue;
    }
    last_t = rec.measurement_time_s;
    rec.air_temp_c = temp;
    result.records.push_back(rec);
    result.series.records.emplace_back(rec.measurement_time_s, rec.air_temp_c);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Latency CSV: header `timestamp_s,fiber,rtt_ps`, numbers printed with 17
// significant digits so the round trip is lossless.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_g17(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), v,
                    std::chars_format::general, 17);
  if (ec != std::errc()) throw format_error("csv: number formatting failed");
  return std::string(buf.data(), ptr);
}

}  // namespace detail

inline void write_latency_csv(std::ostream& out,
                              const std::vector<LatencyRecord>& records) {
  out << "timestamp_s,fiber,rtt_ps\n";
  for (const LatencyRecord& r : records) {
    if (r.fiber.find_first_of(",\n\r") != std::string::npos)
      throw invalid_input("latency csv: fiber label '" + r.fiber +
                          "' contains a delimiter");
    out << detail::format_g17(r.timestamp_s) << ',' << r.fiber << ','
        << detail::format_g17(r.rtt_ps) << '\n';
  }
  if (!out) throw format_error("latency csv: write failed");
}

struct LatencyCsv {
  std::vector<LatencyRecord> records;
  bool out_of_order = false;  // some fiber's timestamps were not increasing
};

inline LatencyCsv read_latency_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw format_error("latency csv: empty input, expected a header");
  if (detail::trim(line) != "timestamp_s,fiber,rtt_ps")
    throw format_error("latency csv: unexpected header '" + line + "'");
  LatencyCsv result;
  std::map<std::string, double> last_t;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = detail::trim(line);
    if (row.empty()) continue;
    const std::size_t c1 = row.find(',');
    const std::size_t c2 = c1 == std::string_view::npos
                               ? std::string_view::npos
                               : row.find(',', c1 + 1);
    if (c2 == std::string_view::npos)
      throw format_error("latency csv: line " + std::to_string(line_no) +
                         ": expected 3 comma-separated fields");
    LatencyRecord rec;
    if (!detail::parse_double(row.substr(0, c1), rec.timestamp_s))
      throw format_error("latency csv: line " + std::to_string(line_no) +
                         ": bad timestamp");
    rec.fiber = std::string(detail::trim(row.substr(c1 + 1, c2 - c1 - 1)));
    if (!detail::parse_double(row.substr(c2 + 1), rec.rtt_ps))
      throw format_error("latency csv: line " + std::to_string(line_no) +
                         ": bad rtt value");
    if (rec.fiber.empty())
      throw format_error("latency csv: line " + std::to_string(line_no) +
                         ": empty fiber label");
    auto [it, fresh] = last_t.try_emplace(rec.fiber, rec.timestamp_s);
    if (!fresh) {
      if (rec.timestamp_s <= it->second) result.out_of_order = true;
      it->second = rec.timestamp_s;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

// Groups flat records into per-fiber series; sorts each by timestamp when
// asked (readers flag out-of-order data but leave the ordering decision to
// the caller).
inline std::map<std::string, LatencySeries> group_by_fiber(
    const std::vector<LatencyRecord>& records, bool sort_by_time = true) {
  std::map<std::string, LatencySeries> out;
  for (const LatencyRecord& r : records) {
    LatencySeries& s = out[r.fiber];
    s.fiber = r.fiber;
    s.records.emplace_back(r.timestamp_s, r.rtt_ps);
  }
  if (sort_by_time)
    for (auto& [label, s] : out)
      std::sort(s.records.begin(), s.records.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

// ---------------------------------------------------------------------------
// Binary trace file: magic "COTR", little-endian fixed-width header, then
// sample_count raw IEEE-754 doubles. Chosen over text for 5M-sample traces.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kTraceFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "trace format assumes a little-endian host");

inline void write_trace(std::ostream& out, const SampledWaveform& trace) {
  require_valid(trace, "write_trace");
  out.write("COTR", 4);
  const std::uint32_t version = kTraceFormatVersion;
  const auto count = static_cast<std::uint64_t>(trace.samples.size());
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&trace.sample_rate_hz),
            sizeof trace.sample_rate_hz);
  out.write(reinterpret_cast<const char*>(&trace.start_time_ps),
            sizeof trace.start_time_ps);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  if (count > 0)
    out.write(reinterpret_cast<const char*>(trace.samples.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw format_error("write_trace: write failed");
}

inline SampledWaveform read_trace(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "COTR", 4) != 0)
    throw format_error("read_trace: not a trace file (bad magic)");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in) throw format_error("read_trace: truncated header");
  if (version != kTraceFormatVersion)
    throw format_error("read_trace: unsupported format version " +
                       std::to_string(version) + ", expected " +
                       std::to_string(kTraceFormatVersion));
  SampledWaveform trace;
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&trace.sample_rate_hz),
          sizeof trace.sample_rate_hz);
  in.read(reinterpret_cast<char*>(&trace.start_time_ps),
          sizeof trace.start_time_ps);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in) throw format_error("read_trace: truncated header");
  trace.samples.resize(count);
  if (count > 0) {
    in.read(reinterpret_cast<char*>(trace.samples.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    const auto got = static_cast<std::uint64_t>(in.gcount()) / sizeof(double);
    if (got != count)
      throw format_error("read_trace: truncated payload, expected " +
                         std::to_string(count) + " samples, got " +
                         std::to_string(got));
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Thermal fit reports: one compact JSON object per line.
// ---------------------------------------------------------------------------

inline void write_fit_report(std::ostream& out, const ThermalFit& fit) {
  nlohmann::json j;
  j["tdc_ppm_per_k"] = fit.tdc_ppm_per_k;
  j["tau_days"] = fit.tau_days;
  j["reference_rtt_ps"] = fit.reference_rtt_ps;
  j["initial_fiber_temp_c"] = fit.initial_fiber_temp_c;
  j["offset_ps"] = fit.offset_ps;
  j["rms_residual_ps"] = fit.rms_residual_ps;
  j["residual_ratio"] = fit.residual_ratio;
  j["low_confidence"] = fit.low_confidence;
  out << j.dump() << '\n';
  if (!out) throw format_error("fit report: write failed");
}

inline std::vector<ThermalFit> read_fit_report(std::istream& in) {
  std::vector<ThermalFit> fits;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw format_error("fit report: line " + std::to_string(line_no) + ": " +
                         e.what());
    }
    ThermalFit fit;
    try {
      fit.tdc_ppm_per_k = j.at("tdc_ppm_per_k").get<double>();
      fit.tau_days = j.at("tau_days").get<double>();
      fit.reference_rtt_ps = j.at("reference_rtt_ps").get<double>();
      fit.initial_fiber_temp_c = j.at("initial_fiber_temp_c").get<double>();
      fit.offset_ps = j.at("offset_ps").get<double>();
      fit.rms_residual_ps = j.at("rms_residual_ps").get<double>();
      fit.residual_ratio = j.at("residual_ratio").get<double>();
      fit.low_confidence = j.at("low_confidence").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw format_error("fit report: line " + std::to_string(line_no) + ": " +
                         e.what());
    }
    fits.push_back(fit);
  }
  return fits;
}

}  // namespace cotdr
