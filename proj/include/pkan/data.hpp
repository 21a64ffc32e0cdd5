#pragma once

// Hourly PRB demand series: synthetic generation, CSV ingestion, train/test
// splitting, standardization and sliding windows.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pkan/error.hpp"
#include "pkan/likelihood.hpp"
#include "pkan/nets.hpp"

namespace pkan {

using Timestamp = std::chrono::sys_seconds;

inline std::string format_timestamp(Timestamp ts) {
  const auto day = std::chrono::floor<std::chrono::days>(ts);
  const std::chrono::year_month_day ymd(day);
  const std::chrono::hh_mm_ss hms(ts - day);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

/// Accepts `YYYY-MM-DDTHH:MM:SS` with optional trailing `Z` (a space may replace the `T`).
inline Timestamp parse_timestamp(std::string_view text) {
  int y = 0;
  unsigned mo = 0;
  unsigned d = 0;
  int h = 0;
  int mi = 0;
  int s = 0;
  char sep = 0;
  int consumed = 0;
  const std::string str(text);
  if (std::sscanf(str.c_str(), "%4d-%2u-%2u%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &s, &consumed) != 7 ||
      (sep != 'T' && sep != ' ')) {
    throw InvalidArgument("malformed timestamp '" + str + "'");
  }
  const std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
  if (!(rest.empty() || rest == "Z")) throw InvalidArgument("malformed timestamp '" + str + "'");
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(mo), std::chrono::day(d)};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59 || h < 0 || mi < 0 || s < 0) {
    throw InvalidArgument("invalid timestamp '" + str + "'");
  }
  return std::chrono::sys_days(ymd) + std::chrono::hours(h) + std::chrono::minutes(mi) + std::chrono::seconds(s);
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline Timestamp default_start() { return std::chrono::sys_days(std::chrono::year(2024) / 1 / 1); }

struct TimeSeries {
  std::string beam_id;
  Timestamp start = default_start();
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  Timestamp timestamp(std::size_t i) const { return start + std::chrono::hours(static_cast<long>(i)); }

  /// Hours [offset, offset + count).
  TimeSeries slice(std::size_t offset, std::size_t count) const {
    if (offset + count > values.size()) throw InvalidArgument("TimeSeries::slice out of range");
    return {beam_id, timestamp(offset),
            std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                values.begin() + static_cast<std::ptrdiff_t>(offset + count))};
  }
};

// ---------------------------------------------------------------------------
// Synthetic traffic.

struct SyntheticSpec {
  std::string beam_id = "beam0";
  Timestamp start = default_start();
  std::size_t length_hours = 552;
  double base_level = 60.0;
  double diurnal_amplitude = 25.0;
  double diurnal_phase = 0.0;
  double weekly_amplitude = 5.0;
  double burst_rate = 0.02;   // expected burst onsets per hour
  double burst_shape = 2.5;   // Pareto tail index
  double burst_scale = 15.0;  // Pareto minimum magnitude
  Likelihood noise_family = Likelihood::gaussian;
  double noise_scale = 3.0;
  double noise_dof = 3.0;  // Student-t noise only
  std::uint64_t seed = 0;

  void validate() const {
    if (length_hours == 0) throw InvalidArgument("SyntheticSpec: length_hours must be positive");
    if (base_level < 0.0 || diurnal_amplitude < 0.0 || weekly_amplitude < 0.0 || noise_scale < 0.0) {
      throw InvalidArgument("SyntheticSpec: levels, amplitudes and noise scale must be non-negative");
    }
    if (burst_rate < 0.0) throw InvalidArgument("SyntheticSpec: burst_rate must be non-negative");
    if (!(burst_shape > 0.0) || !(burst_scale > 0.0)) {
      throw InvalidArgument("SyntheticSpec: burst shape and scale must be positive");
    }
    if (noise_family == Likelihood::none) throw InvalidArgument("SyntheticSpec: noise family must be gaussian or student_t");
    if (noise_family == Likelihood::student_t && !(noise_dof > 0.0)) {
      throw InvalidArgument("SyntheticSpec: noise_dof must be positive");
    }
  }

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct GeneratedSeries {
  TimeSeries series;
  std::vector<std::size_t> burst_onsets;
  std::vector<double> burst_magnitudes;
};

/// y_t = max(0, base + A_d sin(2 pi t / 24 + phase) + A_w sin(2 pi t / 168) + burst_t + noise_t).
/// Bursts arrive as a Poisson process; a burst of magnitude m adds m, m/2, m/4 over three hours.
inline GeneratedSeries generate_detailed(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::poisson_distribution<int> arrivals(spec.burst_rate > 0.0 ? spec.burst_rate : 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::student_t_distribution<double> student(spec.noise_family == Likelihood::student_t ? spec.noise_dof : 1.0);

  GeneratedSeries out;
  out.series.beam_id = spec.beam_id;
  out.series.start = spec.start;
  const std::size_t n = spec.length_hours;
  std::vector<double> bursts(n + 3, 0.0);
  out.series.values.resize(n);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (std::size_t t = 0; t < n; ++t) {
    const int k = spec.burst_rate > 0.0 ? arrivals(rng) : 0;
    for (int i = 0; i < k; ++i) {
      const double u = 1.0 - unit(rng);  // (0, 1]
      const double m = spec.burst_scale * std::pow(u, -1.0 / spec.burst_shape);
      out.burst_onsets.push_back(t);
      out.burst_magnitudes.push_back(m);
      bursts[t] += m;
      bursts[t + 1] += 0.5 * m;
      bursts[t + 2] += 0.25 * m;
    }
    double noise = 0.0;
    if (spec.noise_scale > 0.0) {
      noise = spec.noise_scale * (spec.noise_family == Likelihood::gaussian ? gauss(rng) : student(rng));
    }
    const double td = static_cast<double>(t);
    const double y = spec.base_level + spec.diurnal_amplitude * std::sin(kTwoPi * td / 24.0 + spec.diurnal_phase) +
                     spec.weekly_amplitude * std::sin(kTwoPi * td / 168.0) + bursts[t] + noise;
    out.series.values[t] = std::max(0.0, y);
  }
  return out;
}

inline TimeSeries generate(const SyntheticSpec& spec) { return generate_detailed(spec).series; }

// ---------------------------------------------------------------------------
// CSV: header `beam_id,timestamp,prb`, one row per beam-hour.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  const auto last = s.find_last_not_of(ws);
  s.erase(last == std::string::npos ? 0 : last + 1);
  return s;
}

}  // namespace detail

/// One series per beam, ordered by beam_id. Rows of a beam must be consecutive hours in file order.
inline std::vector<TimeSeries> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV input", 1);
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + name + "'", 1);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_beam = column("beam_id");
  const std::size_t c_time = column("timestamp");
  const std::size_t c_prb = column("prb");
  const std::size_t needed = std::max({c_beam, c_time, c_prb}) + 1;

  std::map<std::string, TimeSeries> beams;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() < needed) throw DataError("expected at least " + std::to_string(needed) + " fields", row);
    const std::string beam = detail::trim(fields[c_beam]);
    if (beam.empty()) throw DataError("empty beam_id", row);
    Timestamp ts;
    try {
      ts = parse_timestamp(detail::trim(fields[c_time]));
    } catch (const InvalidArgument& e) {
      throw DataError(e.what(), row);
    }
    const std::string prb_text = detail::trim(fields[c_prb]);
    double prb = 0.0;
    const auto res = std::from_chars(prb_text.data(), prb_text.data() + prb_text.size(), prb);
    if (res.ec != std::errc() || res.ptr != prb_text.data() + prb_text.size() || !std::isfinite(prb)) {
      throw DataError("unparseable prb value '" + prb_text + "'", row);
    }
    if (prb < 0.0) throw DataError("negative prb value", row);
    auto [it, inserted] = beams.try_emplace(beam);
    TimeSeries& s = it->second;
    if (inserted) {
      s.beam_id = beam;
      s.start = ts;
    } else {
      const Timestamp expected = s.timestamp(s.size());
      const Timestamp last = s.timestamp(s.size() - 1);
      if (ts == last) throw DataError("duplicate timestamp " + format_timestamp(ts) + " for beam " + beam, row);
      if (ts < last) throw DataError("non-monotone timestamp " + format_timestamp(ts) + " for beam " + beam, row);
      if (ts != expected) {
        throw DataError("gap before " + format_timestamp(ts) + " for beam " + beam + " (expected " +
                            format_timestamp(expected) + ")",
                        row);
      }
    }
    s.values.push_back(prb);
  }
  std::vector<TimeSeries> out;
  for (auto& [_, s] : beams) out.push_back(std::move(s));
  return out;
}

inline std::vector<TimeSeries> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_csv(in);
}

inline void write_csv(std::ostream& out, std::span<const TimeSeries> series) {
  out << "beam_id,timestamp,prb\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out << s.beam_id << ',' << format_timestamp(s.timestamp(i)) << ',' << format_double(s.values[i]) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Splitting, standardization, windows.

/// Defaults: two weeks plus one day of training, one week plus one day of testing.
struct SplitSpec {
  std::size_t train_hours = 360;
  std::size_t test_hours = 192;

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

struct Split {
  TimeSeries train;
  TimeSeries test;
};

inline Split split(const TimeSeries& ts, const SplitSpec& spec) {
  if (spec.train_hours == 0 || spec.test_hours == 0) throw InvalidArgument("split: segment lengths must be positive");
  if (spec.train_hours + spec.test_hours > ts.size()) {
    throw DataError("series " + ts.beam_id + " has " + std::to_string(ts.size()) + " hours, split needs " +
                    std::to_string(spec.train_hours + spec.test_hours));
  }
  return {ts.slice(0, spec.train_hours), ts.slice(spec.train_hours, spec.test_hours)};
}

/// Sample mean and population standard deviation (floored at 1e-9), two-pass.
inline Standardizer fit_standardizer(const TimeSeries& train) {
  if (train.values.empty()) throw DataError("cannot standardize an empty series");
  double total = 0.0;
  for (double v : train.values) total += v;
  const double mean = total / static_cast<double>(train.size());
  double ss = 0.0;
  for (double v : train.values) ss += (v - mean) * (v - mean);
  const double std = std::sqrt(ss / static_cast<double>(train.size()));
  return {mean, std::max(std, 1e-9)};
}

struct Window {
  std::vector<double> context;
  std::vector<double> target;
  Timestamp origin;  // time of target[0]
};

/// All stride-1 windows fully inside `ts`: len - c - h + 1 of them.
inline std::vector<Window> make_windows(const TimeSeries& ts, std::size_t c, std::size_t h) {
  if (c == 0 || h == 0) throw InvalidArgument("make_windows: c and h must be positive");
  if (ts.size() < c + h) {
    throw DataError("series " + ts.beam_id + " has " + std::to_string(ts.size()) + " hours, windows need " +
                    std::to_string(c + h));
  }
  std::vector<Window> out;
  const std::size_t count = ts.size() - c - h + 1;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto begin = ts.values.begin() + static_cast<std::ptrdiff_t>(i);
    out.push_back({std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(c)),
                   std::vector<double>(begin + static_cast<std::ptrdiff_t>(c), begin + static_cast<std::ptrdiff_t>(c + h)),
                   ts.timestamp(i + c)});
  }
  return out;
}

/// Forecast origins every `stride` hours over the segment [begin, begin + length) of `full`,
/// with contexts taken from the true history (which may reach back before `begin`).
/// Only windows whose whole target lies inside the segment are produced.
inline std::vector<Window> make_rolling_windows(const TimeSeries& full, std::size_t begin, std::size_t length,
                                                std::size_t c, std::size_t h, std::size_t stride) {
  if (stride == 0) throw InvalidArgument("make_rolling_windows: stride must be positive");
  if (begin < c) throw DataError("rolling evaluation needs " + std::to_string(c) + " hours of history before the segment");
  if (begin + length > full.size()) throw DataError("rolling segment exceeds the series");
  std::vector<Window> out;
  for (std::size_t origin = begin; origin + h <= begin + length; origin += stride) {
    const auto it = full.values.begin() + static_cast<std::ptrdiff_t>(origin);
    out.push_back({std::vector<double>(it - static_cast<std::ptrdiff_t>(c), it),
                   std::vector<double>(it, it + static_cast<std::ptrdiff_t>(h)), full.timestamp(origin)});
  }
  return out;
}

}  // namespace pkan
