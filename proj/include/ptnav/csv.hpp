#pragma once

// Canonical CSV schemas.  UTF-8, '.' decimal separator, '#' starts a
// comment line.  Values are written with the shortest representation that
// parses back bit-exactly.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "ptnav/deadreck.hpp"
#include "ptnav/metrics.hpp"
#include "ptnav/simgen.hpp"
#include "ptnav/train.hpp"

namespace ptnav {

inline constexpr const char* kImuCsvHeader =
    "t_s,fx_mps2,fy_mps2,fz_mps2,wx_rps,wy_rps,wz_rps";
inline constexpr const char* kGtCsvHeader = "t_s,x_m,y_m,z_m";
inline constexpr const char* kGtCsvHeaderWithYaw = "t_s,x_m,y_m,z_m,yaw_rad";
inline constexpr const char* kFixCsvHeader = "t_s,x_m,y_m,z_m,sigma_m";
inline constexpr const char* kResultsCsvHeader =
    "run_id,mode,platform,seed,rmse_m,max_error_m,drmse_m,duration_s";
inline constexpr const char* kHistoryCsvHeader = "epoch,train_loss,val_loss,lr";
inline constexpr const char* kErrorSeriesCsvHeader = "t_s,error_m";

struct PositionRecord {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  std::optional<double> yaw;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

struct CsvReader {
  explicit CsvReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path + " for reading");
  }

  // Next non-blank, non-comment line; false at end of file.
  bool next_line(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::size_t i = 0;
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i == line.size() || line[i] == '#') continue;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(path_ + ": line " + std::to_string(line_number_) + ": " + what);
  }

  void expect_header(const std::vector<std::string>& accepted, std::string& found) {
    std::string line;
    if (!next_line(line)) fail("missing header row");
    for (const std::string& h : accepted) {
      if (line == h) {
        found = h;
        return;
      }
    }
    fail("unexpected header '" + line + "'");
  }

  std::vector<std::string> split(const std::string& line) const {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        return fields;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
  }

  double parse_double(const std::string& field) {
    double v = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) {
      fail("cannot parse '" + field + "' as a number");
    }
    return v;
  }

  // Parses a data row with exactly `n` numeric fields, or returns false at
  // end of file.  `alt_n`, when nonzero, is also accepted.
  bool next_row(std::vector<double>& row, std::size_t n, std::size_t alt_n = 0) {
    std::string line;
    if (!next_line(line)) return false;
    const auto fields = split(line);
    if (fields.size() != n && (alt_n == 0 || fields.size() != alt_n)) {
      fail("expected " + std::to_string(n) + " fields, found " +
           std::to_string(fields.size()));
    }
    row.clear();
    for (const std::string& f : fields) row.push_back(parse_double(f));
    return true;
  }

  void check_monotone(double prev_t, double t) {
    if (!(t > prev_t)) fail("timestamps must be strictly increasing");
  }

  const std::string path_;
  std::ifstream in_;
  int line_number_ = 0;
};

inline void warn_on_gaps(const std::string& path, const std::vector<double>& times) {
  if (times.size() < 3) return;
  std::vector<double> dts(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i) dts[i - 1] = times[i] - times[i - 1];
  std::vector<double> sorted = dts;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  for (std::size_t i = 0; i < dts.size(); ++i) {
    if (dts[i] > 3.0 * median) {
      std::cerr << "warning: " << path << ": gap of " << dts[i] << " s after t="
                << times[i] << " exceeds 3 sample periods\n";
    }
  }
}

}  // namespace detail

// Median-interval sample rate of a time sequence.
inline double infer_rate(const std::vector<double>& times) {
  if (times.size() < 2) throw ValidationError("need two samples to infer a rate");
  std::vector<double> dts(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i) dts[i - 1] = times[i] - times[i - 1];
  std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
  const double median = dts[dts.size() / 2];
  if (!(median > 0.0)) throw ValidationError("non-positive median sample interval");
  return 1.0 / median;
}

inline void write_imu_csv(const std::string& path, const std::vector<ImuSample>& s) {
  auto out = detail::open_for_write(path);
  out << kImuCsvHeader << '\n';
  for (const ImuSample& x : s) {
    out << detail::format_double(x.t) << ',' << detail::format_double(x.f_b.x()) << ','
        << detail::format_double(x.f_b.y()) << ',' << detail::format_double(x.f_b.z())
        << ',' << detail::format_double(x.w_b.x()) << ','
        << detail::format_double(x.w_b.y()) << ',' << detail::format_double(x.w_b.z())
        << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline std::vector<ImuSample> read_imu_csv(const std::string& path) {
  detail::CsvReader r(path);
  std::string header;
  r.expect_header({kImuCsvHeader}, header);
  std::vector<ImuSample> out;
  std::vector<double> row;
  std::vector<double> times;
  while (r.next_row(row, 7)) {
    if (!out.empty()) r.check_monotone(out.back().t, row[0]);
    ImuSample s;
    s.t = row[0];
    s.f_b = Vec3(row[1], row[2], row[3]);
    s.w_b = Vec3(row[4], row[5], row[6]);
    out.push_back(s);
    times.push_back(s.t);
  }
  detail::warn_on_gaps(path, times);
  return out;
}

inline void write_gt_csv(const std::string& path,
                         const std::vector<PositionRecord>& recs) {
  auto out = detail::open_for_write(path);
  const bool with_yaw = !recs.empty() && recs.front().yaw.has_value();
  out << (with_yaw ? kGtCsvHeaderWithYaw : kGtCsvHeader) << '\n';
  for (const PositionRecord& x : recs) {
    out << detail::format_double(x.t) << ',' << detail::format_double(x.p.x()) << ','
        << detail::format_double(x.p.y()) << ',' << detail::format_double(x.p.z());
    if (with_yaw) out << ',' << detail::format_double(x.yaw.value_or(0.0));
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline std::vector<PositionRecord> read_gt_csv(const std::string& path) {
  detail::CsvReader r(path);
  std::string header;
  r.expect_header({kGtCsvHeader, kGtCsvHeaderWithYaw}, header);
  const bool with_yaw = header == kGtCsvHeaderWithYaw;
  std::vector<PositionRecord> out;
  std::vector<double> row;
  std::vector<double> times;
  while (r.next_row(row, with_yaw ? 5 : 4)) {
    if (!out.empty()) r.check_monotone(out.back().t, row[0]);
    PositionRecord p;
    p.t = row[0];
    p.p = Vec3(row[1], row[2], row[3]);
    if (with_yaw) p.yaw = row[4];
    out.push_back(p);
    times.push_back(p.t);
  }
  detail::warn_on_gaps(path, times);
  return out;
}

inline void write_fixes_csv(const std::string& path,
                            const std::vector<PositionFix>& fixes) {
  auto out = detail::open_for_write(path);
  out << kFixCsvHeader << '\n';
  for (const PositionFix& f : fixes) {
    out << detail::format_double(f.t) << ',' << detail::format_double(f.p.x()) << ','
        << detail::format_double(f.p.y()) << ',' << detail::format_double(f.p.z())
        << ',' << detail::format_double(f.sigma) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline std::vector<PositionFix> read_fixes_csv(const std::string& path) {
  detail::CsvReader r(path);
  std::string header;
  r.expect_header({kFixCsvHeader}, header);
  std::vector<PositionFix> out;
  std::vector<double> row;
  while (r.next_row(row, 5)) {
    if (!out.empty()) r.check_monotone(out.back().t, row[0]);
    out.push_back({row[0], Vec3(row[1], row[2], row[3]), row[4]});
  }
  return out;
}

inline void write_results_csv(const std::string& path,
                              const std::vector<RunRecord>& records) {
  auto out = detail::open_for_write(path);
  out << kResultsCsvHeader << '\n';
  for (const RunRecord& r : records) {
    out << r.run_id << ',' << r.mode << ',' << r.platform << ',' << r.seed << ','
        << detail::format_double(r.rmse_m) << ','
        << detail::format_double(r.max_error_m) << ',';
    if (r.drmse_m) out << detail::format_double(*r.drmse_m);
    out << ',' << detail::format_double(r.duration_s) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline std::vector<RunRecord> read_results_csv(const std::string& path) {
  detail::CsvReader r(path);
  std::string header;
  r.expect_header({kResultsCsvHeader}, header);
  std::vector<RunRecord> out;
  std::string line;
  while (r.next_line(line)) {
    const auto fields = r.split(line);
    if (fields.size() != 8) {
      r.fail("expected 8 fields, found " + std::to_string(fields.size()));
    }
    RunRecord rec;
    rec.run_id = fields[0];
    rec.mode = fields[1];
    rec.platform = fields[2];
    rec.seed = static_cast<std::uint64_t>(r.parse_double(fields[3]));
    rec.rmse_m = r.parse_double(fields[4]);
    rec.max_error_m = r.parse_double(fields[5]);
    if (!fields[6].empty()) rec.drmse_m = r.parse_double(fields[6]);
    rec.duration_s = r.parse_double(fields[7]);
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_history_csv(const std::string& path,
                              const std::vector<EpochStats>& history) {
  auto out = detail::open_for_write(path);
  out << kHistoryCsvHeader << '\n';
  for (const EpochStats& e : history) {
    out << e.epoch << ',' << detail::format_double(e.train_loss) << ','
        << detail::format_double(e.val_loss) << ',' << detail::format_double(e.lr)
        << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline void write_error_series_csv(
    const std::string& path, const std::vector<std::pair<double, double>>& series) {
  auto out = detail::open_for_write(path);
  out << kErrorSeriesCsvHeader << '\n';
  for (const auto& [t, e] : series) {
    out << detail::format_double(t) << ',' << detail::format_double(e) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline std::vector<PositionRecord> position_records(
    const std::vector<TruthSample>& truth) {
  std::vector<PositionRecord> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out[i].t = truth[i].t;
    out[i].p = truth[i].p;
    out[i].yaw = yaw_of(truth[i].att).psi;
  }
  return out;
}

inline std::vector<PositionRecord> position_records(
    const std::vector<NavState>& states) {
  std::vector<PositionRecord> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    out[i].t = states[i].t;
    out[i].p = states[i].p;
    out[i].yaw = yaw_of(states[i].att).psi;
  }
  return out;
}

inline std::vector<PositionRecord> position_records(const std::vector<DrState>& dr) {
  std::vector<PositionRecord> out(dr.size());
  for (std::size_t i = 0; i < dr.size(); ++i) {
    out[i].t = dr[i].t;
    out[i].p = Vec3(dr[i].x, dr[i].y, dr[i].z);
    out[i].yaw = dr[i].psi;
  }
  return out;
}

inline std::vector<TimedPosition> timed_positions(
    const std::vector<PositionRecord>& recs) {
  std::vector<TimedPosition> out(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) out[i] = {recs[i].t, recs[i].p};
  return out;
}

}  // namespace ptnav
