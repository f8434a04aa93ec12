#include "cotdr/ingest.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <locale>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using cotdr::DwdParseResult;
using cotdr::LatencyRecord;
using cotdr::parse_dwd_10min;
using cotdr::SampledWaveform;
using cotdr::ThermalFit;
using cotdr::TimeZone;

// --------------------------------------------------------------------------
// Weather file parsing
// --------------------------------------------------------------------------

constexpr char kDwdHeader[] =
    "STATIONS_ID;MESS_DATUM;  QN;PP_10;TT_10;TM5_10;RF_10;TD_10;eor\n";

TEST(DwdTimestamp, FrozenEpochAnchors) {
  // Hand-checked UTC conversions, frozen as regression anchors.
  double t = 0.0;
  ASSERT_TRUE(cotdr::detail::parse_dwd_timestamp("197001010000",
                                                 TimeZone::utc, t));
  EXPECT_DOUBLE_EQ(t, 0.0);
  ASSERT_TRUE(cotdr::detail::parse_dwd_timestamp("202301011230",
                                                 TimeZone::utc, t));
  EXPECT_DOUBLE_EQ(t, 1672576200.0);
  ASSERT_TRUE(cotdr::detail::parse_dwd_timestamp("202012312300",
                                                 TimeZone::utc, t));
  EXPECT_DOUBLE_EQ(t, 1609455600.0);
  ASSERT_TRUE(cotdr::detail::parse_dwd_timestamp("201807070940",
                                                 TimeZone::utc, t));
  EXPECT_DOUBLE_EQ(t, 1530956400.0);
  // Leap day.
  ASSERT_TRUE(cotdr::detail::parse_dwd_timestamp("202402290000",
                                                 TimeZone::utc, t));
  EXPECT_DOUBLE_EQ(t, 1709164800.0);
  // Legacy central European winter time is one hour ahead of UTC.
  ASSERT_TRUE(cotdr::detail::parse_dwd_timestamp("202301011230",
                                                 TimeZone::mez, t));
  EXPECT_DOUBLE_EQ(t, 1672576200.0 - 3600.0);
}

TEST(DwdTimestamp, RejectsMalformedStamps) {
  double t = 0.0;
  for (const char* bad : {"20230101123", "2023010112300", "2023o1011230",
                          "202313011230", "202301321230", "202301012430",
                          "202301011260", ""}) {
    EXPECT_FALSE(cotdr::detail::parse_dwd_timestamp(bad, TimeZone::utc, t))
        << bad;
  }
}

TEST(DwdParse, ReadsWellFormedRows) {
  std::istringstream in(
      std::string(kDwdHeader) +
      "  44;201807070940;    3;  990.3;  21.4;  20.1;  60.0;  13.2;eor\n"
      "  44;201807070950;    3;  990.1;  21.9;  20.5;  59.0;  13.4;eor\n"
      "  44;201807071000;    3;  990.0;  22.3;  21.0;  58.0;  13.5;eor\n");
  const DwdParseResult r = parse_dwd_10min(in);
  EXPECT_EQ(r.rows_total, 3u);
  EXPECT_EQ(r.rows_bad, 0u);
  EXPECT_EQ(r.rows_missing, 0u);
  EXPECT_EQ(r.rows_out_of_order, 0u);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0].station_id, 44);
  EXPECT_EQ(r.records[0].quality, 3);
  EXPECT_DOUBLE_EQ(r.records[0].air_temp_c, 21.4);
  EXPECT_DOUBLE_EQ(r.records[0].measurement_time_s, 1530956400.0);
  EXPECT_DOUBLE_EQ(r.records[1].measurement_time_s, 1530956400.0 + 600.0);
  ASSERT_EQ(r.series.records.size(), 3u);
  EXPECT_DOUBLE_EQ(r.series.records[2].second, 22.3);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(DwdParse, MissingSentinelRowsAreDroppedAndCounted) {
  std::istringstream in(
      std::string(kDwdHeader) +
      "  44;201807070940;    3;  990.3;  21.4;  20.1;  60.0;  13.2;eor\n"
      "  44;201807070950;    3;  990.1;  -999;  -999;  -999;  -999;eor\n"
      "  44;201807071000;    3;  990.0;  22.3;  21.0;  58.0;  13.5;eor\n");
  const DwdParseResult r = parse_dwd_10min(in);
  EXPECT_EQ(r.rows_total, 3u);
  EXPECT_EQ(r.rows_missing, 1u);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_DOUBLE_EQ(r.records[1].air_temp_c, 22.3);
  EXPECT_TRUE(r.warnings.empty());  // missing data is expected, not a defect
}

TEST(DwdParse, BadRowsAreSkippedWithLineNumberedWarnings) {
  std::istringstream in(
      std::string(kDwdHeader) +
      "  44;201807070940;    3;  990.3;  21.4;  20.1;  60.0;  13.2;eor\n"
      "  44;2018070709xx;    3;  990.1;  21.0;  20.0;  60.0;  13.0;eor\n"
      "  44;201807071000\n"
      "  44;201807071010;    3;  990.0;  oops;  21.0;  58.0;  13.5;eor\n"
      "  44;201807071020;    3;  990.0;  22.5;  21.0;  58.0;  13.5;eor\n");
  const DwdParseResult r = parse_dwd_10min(in);
  EXPECT_EQ(r.rows_total, 5u);
  EXPECT_EQ(r.rows_bad, 3u);
  ASSERT_EQ(r.records.size(), 2u);
  ASSERT_EQ(r.warnings.size(), 3u);
  EXPECT_NE(r.warnings[0].find("line 3"), std::string::npos);
  EXPECT_NE(r.warnings[0].find("MESS_DATUM"), std::string::npos);
  EXPECT_NE(r.warnings[1].find("line 4"), std::string::npos);
  EXPECT_NE(r.warnings[2].find("line 5"), std::string::npos);
  EXPECT_NE(r.warnings[2].find("TT_10"), std::string::npos);
}

TEST(DwdParse, NonIncreasingTimestampsKeepFirst) {
  std::istringstream in(
      std::string(kDwdHeader) +
      "  44;201807070940;    3;  990.3;  21.4;  20.1;  60.0;  13.2;eor\n"
      "  44;201807070940;    3;  990.3;  99.0;  20.1;  60.0;  13.2;eor\n"
      "  44;201807070930;    3;  990.3;  88.0;  20.1;  60.0;  13.2;eor\n"
      "  44;201807070950;    3;  990.3;  21.5;  20.1;  60.0;  13.2;eor\n");
  const DwdParseResult r = parse_dwd_10min(in);
  EXPECT_EQ(r.rows_out_of_order, 2u);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_DOUBLE_EQ(r.records[0].air_temp_c, 21.4);  // first wins
  EXPECT_DOUBLE_EQ(r.records[1].air_temp_c, 21.5);
  ASSERT_EQ(r.warnings.size(), 2u);
  EXPECT_NE(r.warnings[0].find("non-increasing"), std::string::npos);
  // The surviving series is valid by construction.
  EXPECT_NO_THROW(cotdr::require_valid(r.series, "test"));
}

TEST(DwdParse, ColumnOrderIsNameDrivenAndExtrasAreIgnored) {
  std::istringstream in(
      "TT_10;STATIONS_ID;EXTRA;MESS_DATUM;eor\n"
      "  5.5;  77;  junk;201807070940;eor\n");
  const DwdParseResult r = parse_dwd_10min(in);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].station_id, 77);
  EXPECT_DOUBLE_EQ(r.records[0].air_temp_c, 5.5);
  EXPECT_EQ(r.records[0].quality, 0);  // QN column absent
}

TEST(DwdParse, MissingRequiredColumnsAreFormatErrors) {
  std::istringstream no_temp("STATIONS_ID;MESS_DATUM;QN;eor\n");
  EXPECT_THROW(parse_dwd_10min(no_temp), cotdr::format_error);
  std::istringstream no_time("STATIONS_ID;QN;TT_10;eor\n");
  EXPECT_THROW(parse_dwd_10min(no_time), cotdr::format_error);
  std::istringstream empty("");
  EXPECT_THROW(parse_dwd_10min(empty), cotdr::format_error);
}

TEST(DwdParse, MezShiftsWholeSeries) {
  std::istringstream in_utc(
      std::string(kDwdHeader) +
      "  44;201807070940;3;990.3;21.4;20.1;60.0;13.2;eor\n");
  std::istringstream in_mez(
      std::string(kDwdHeader) +
      "  44;201807070940;3;990.3;21.4;20.1;60.0;13.2;eor\n");
  const auto utc = parse_dwd_10min(in_utc, TimeZone::utc);
  const auto mez = parse_dwd_10min(in_mez, TimeZone::mez);
  EXPECT_DOUBLE_EQ(mez.records[0].measurement_time_s,
                   utc.records[0].measurement_time_s - 3600.0);
}

// --------------------------------------------------------------------------
// Latency CSV
// --------------------------------------------------------------------------

TEST(LatencyCsv, RoundTripIsLossless) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ts(0.0, 2e9);
  std::uniform_real_distribution<double> rtt(1.0, 1e8);
  std::vector<LatencyRecord> records;
  for (int i = 0; i < 200; ++i) {
    LatencyRecord r;
    r.timestamp_s = ts(rng);
    r.fiber = (i % 3 == 0) ? "fiber1" : (i % 3 == 1 ? "fiber2" : "ref cal");
    r.rtt_ps = rtt(rng);
    records.push_back(r);
  }
  records.push_back({1e-300, "tiny", 83255596.77688755});
  std::ostringstream out;
  cotdr::write_latency_csv(out, records);
  std::istringstream in(out.str());
  const cotdr::LatencyCsv parsed = cotdr::read_latency_csv(in);
  ASSERT_EQ(parsed.records.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(parsed.records[i].timestamp_s, records[i].timestamp_s) << i;
    EXPECT_EQ(parsed.records[i].fiber, records[i].fiber) << i;
    EXPECT_EQ(parsed.records[i].rtt_ps, records[i].rtt_ps) << i;
  }
}

TEST(LatencyCsv, WriterRejectsDelimiterInLabel) {
  std::ostringstream out;
  EXPECT_THROW(
      cotdr::write_latency_csv(out, {{0.0, "fiber,evil", 1.0}}),
      cotdr::invalid_input);
  EXPECT_THROW(cotdr::write_latency_csv(out, {{0.0, "fiber\nevil", 1.0}}),
               cotdr::invalid_input);
}

TEST(LatencyCsv, ReaderErrorsCarryLineNumbers) {
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    return cotdr::read_latency_csv(in);
  };
  EXPECT_THROW(read(""), cotdr::format_error);
  EXPECT_THROW(read("wrong,header,here\n"), cotdr::format_error);
  const std::string head = "timestamp_s,fiber,rtt_ps\n";
  for (const auto& [row, what] :
       std::vector<std::pair<std::string, std::string>>{
           {"1,fiber1\n", "3 comma-separated"},
           {"abc,fiber1,2\n", "bad timestamp"},
           {"1,fiber1,xyz\n", "bad rtt"},
           {"1,fiber1,2,extra\n", "bad rtt"},
           {"1,,2\n", "empty fiber"}}) {
    try {
      read(head + "0,ok,1\n" + row);
      FAIL() << "expected format_error for: " << row;
    } catch (const cotdr::format_error& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
      EXPECT_NE(msg.find(what), std::string::npos) << msg;
    }
  }
}

TEST(LatencyCsv, OutOfOrderFlagIsPerFiber) {
  const std::string head = "timestamp_s,fiber,rtt_ps\n";
  {
    // Interleaved fibers, each increasing on its own: fine.
    std::istringstream in(head + "10,a,1\n0,b,1\n20,a,1\n5,b,1\n");
    EXPECT_FALSE(cotdr::read_latency_csv(in).out_of_order);
  }
  {
    std::istringstream in(head + "10,a,1\n20,a,1\n15,a,1\n");
    EXPECT_TRUE(cotdr::read_latency_csv(in).out_of_order);
  }
  {
    // Duplicate timestamp counts as out of order.
    std::istringstream in(head + "10,a,1\n10,a,1\n");
    EXPECT_TRUE(cotdr::read_latency_csv(in).out_of_order);
  }
}

TEST(LatencyCsv, GroupByFiberSortsWhenAsked) {
  std::vector<LatencyRecord> records = {
      {30.0, "a", 3.0}, {10.0, "a", 1.0}, {5.0, "b", 9.0}, {20.0, "a", 2.0}};
  const auto sorted = cotdr::group_by_fiber(records);
  ASSERT_EQ(sorted.size(), 2u);
  const auto& a = sorted.at("a");
  ASSERT_EQ(a.records.size(), 3u);
  EXPECT_DOUBLE_EQ(a.records[0].first, 10.0);
  EXPECT_DOUBLE_EQ(a.records[1].first, 20.0);
  EXPECT_DOUBLE_EQ(a.records[2].first, 30.0);
  EXPECT_EQ(a.fiber, "a");
  const auto raw = cotdr::group_by_fiber(records, false);
  EXPECT_DOUBLE_EQ(raw.at("a").records[0].first, 30.0);
}

// --------------------------------------------------------------------------
// Binary trace files
// --------------------------------------------------------------------------

SampledWaveform sample_trace() {
  SampledWaveform w;
  w.sample_rate_hz = 5e10;
  w.start_time_ps = -1280.0;
  w.samples = {0.0,
               1.0,
               -0.25,
               83255596.77688755,
               std::numeric_limits<double>::denorm_min(),
               -std::numeric_limits<double>::max(),
               std::numeric_limits<double>::quiet_NaN(),
               1e-300};
  return w;
}

TEST(TraceFile, RoundTripPreservesEveryBit) {
  const SampledWaveform w = sample_trace();
  std::ostringstream out(std::ios::binary);
  cotdr::write_trace(out, w);
  std::istringstream in(out.str(), std::ios::binary);
  const SampledWaveform r = cotdr::read_trace(in);
  EXPECT_EQ(r.sample_rate_hz, w.sample_rate_hz);
  EXPECT_EQ(r.start_time_ps, w.start_time_ps);
  ASSERT_EQ(r.samples.size(), w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(r.samples[i]),
              std::bit_cast<std::uint64_t>(w.samples[i]))
        << i;
  }
}

TEST(TraceFile, RejectsBadMagicVersionAndTruncation) {
  std::ostringstream out(std::ios::binary);
  cotdr::write_trace(out, sample_trace());
  const std::string good = out.str();

  {
    std::istringstream in("JUNK" + good.substr(4), std::ios::binary);
    try {
      cotdr::read_trace(in);
      FAIL() << "expected format_error";
    } catch (const cotdr::format_error& e) {
      EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
  }
  {
    std::string bumped = good;
    bumped[4] = 9;  // version field, little endian
    std::istringstream in(bumped, std::ios::binary);
    try {
      cotdr::read_trace(in);
      FAIL() << "expected format_error";
    } catch (const cotdr::format_error& e) {
      EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos);
    }
  }
  {
    std::istringstream in(good.substr(0, good.size() - 8), std::ios::binary);
    try {
      cotdr::read_trace(in);
      FAIL() << "expected format_error";
    } catch (const cotdr::format_error& e) {
      EXPECT_NE(std::string(e.what()).find("truncated payload"),
                std::string::npos);
    }
  }
  {
    std::istringstream in(good.substr(0, 6), std::ios::binary);
    EXPECT_THROW(cotdr::read_trace(in), cotdr::format_error);
  }
  {
    SampledWaveform empty;
    empty.sample_rate_hz = 5e10;
    std::ostringstream sink(std::ios::binary);
    EXPECT_THROW(cotdr::write_trace(sink, empty), cotdr::invalid_input);
  }
}

// --------------------------------------------------------------------------
// Fit reports
// --------------------------------------------------------------------------

TEST(FitReport, RoundTripsAllFields) {
  ThermalFit a;
  a.tdc_ppm_per_k = 7.4932178210553217;
  a.tau_days = 12.703117723951171;
  a.reference_rtt_ps = 83255596.77688755;
  a.initial_fiber_temp_c = -3.25;
  a.offset_ps = -479812.52881216305;
  a.rms_residual_ps = 4.912318812361172;
  a.residual_ratio = 0.031872310055123;
  a.low_confidence = false;
  ThermalFit b;
  b.tdc_ppm_per_k = 0.0;
  b.tau_days = 0.5;
  b.reference_rtt_ps = 1.0;
  b.low_confidence = true;

  std::ostringstream out;
  cotdr::write_fit_report(out, a);
  cotdr::write_fit_report(out, b);
  std::istringstream in(out.str());
  const std::vector<ThermalFit> fits = cotdr::read_fit_report(in);
  ASSERT_EQ(fits.size(), 2u);
  EXPECT_EQ(fits[0].tdc_ppm_per_k, a.tdc_ppm_per_k);
  EXPECT_EQ(fits[0].tau_days, a.tau_days);
  EXPECT_EQ(fits[0].reference_rtt_ps, a.reference_rtt_ps);
  EXPECT_EQ(fits[0].initial_fiber_temp_c, a.initial_fiber_temp_c);
  EXPECT_EQ(fits[0].offset_ps, a.offset_ps);
  EXPECT_EQ(fits[0].rms_residual_ps, a.rms_residual_ps);
  EXPECT_EQ(fits[0].residual_ratio, a.residual_ratio);
  EXPECT_FALSE(fits[0].low_confidence);
  EXPECT_TRUE(fits[1].low_confidence);
  EXPECT_EQ(fits[1].tau_days, 0.5);
}

TEST(FitReport, MalformedLinesAreFormatErrors) {
  {
    std::istringstream in("{\"tau_days\": 1.0}\n");  // missing keys
    try {
      cotdr::read_fit_report(in);
      FAIL() << "expected format_error";
    } catch (const cotdr::format_error& e) {
      EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
  }
  {
    ThermalFit ok;
    ok.tau_days = 1.0;
    std::ostringstream out;
    cotdr::write_fit_report(out, ok);
    std::istringstream in(out.str() + "this is not json\n");
    try {
      cotdr::read_fit_report(in);
      FAIL() << "expected format_error";
    } catch (const cotdr::format_error& e) {
      EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
  }
  {
    std::istringstream in("");  // no fits at all is not an error here
    EXPECT_TRUE(cotdr::read_fit_report(in).empty());
  }
}

// --------------------------------------------------------------------------
// Locale independence: number formatting and parsing must not bend to a
// comma-decimal global locale.
// --------------------------------------------------------------------------

class LocaleGuard {
 public:
  explicit LocaleGuard(const char* name) : old_(std::locale::global(std::locale(name))) {}
  ~LocaleGuard() { std::locale::global(old_); }

 private:
  std::locale old_;
};

TEST(Locale, CsvAndDwdAreLocaleIndependent) {
  std::unique_ptr<LocaleGuard> guard;
  try {
    guard = std::make_unique<LocaleGuard>("de_DE.UTF-8");
  } catch (const std::runtime_error&) {
    GTEST_SKIP() << "de_DE.UTF-8 locale not installed";
  }
  std::vector<LatencyRecord> records = {{1234.5678, "f", 83255596.77688755}};
  std::ostringstream out;
  cotdr::write_latency_csv(out, records);
  // Exactly two commas in the data row: the decimal separator stayed a dot.
  const std::string text = out.str();
  const std::string row = text.substr(text.find('\n') + 1);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 2);
  EXPECT_NE(row.find('.'), std::string::npos);
  std::istringstream in(text);
  const auto parsed = cotdr::read_latency_csv(in);
  ASSERT_EQ(parsed.records.size(), 1u);
  EXPECT_EQ(parsed.records[0].rtt_ps, 83255596.77688755);
  std::istringstream dwd(std::string(kDwdHeader) +
                         "44;201807070940;3;990.3;21.4;20.1;60.0;13.2;eor\n");
  const auto weather = parse_dwd_10min(dwd);
  ASSERT_EQ(weather.records.size(), 1u);
  EXPECT_DOUBLE_EQ(weather.records[0].air_temp_c, 21.4);
}

}  // namespace
