#include "fishdet/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "fishdet/csv.hpp"
#include "fishdet/errors.hpp"

namespace fishdet {

namespace {

bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace

std::optional<Timestamp> try_parse_timestamp(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
  // YYYY-MM-DD[T ]HH:MM:SS
  int y, mo, d, h, mi, sec;
  if (s.size() != 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':') {
    return std::nullopt;
  }
  if (!read_digits(s, 0, 4, y) || !read_digits(s, 5, 2, mo) || !read_digits(s, 8, 2, d) ||
      !read_digits(s, 11, 2, h) || !read_digits(s, 14, 2, mi) || !read_digits(s, 17, 2, sec)) {
    return std::nullopt;
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * 86400 + h * 3600 + mi * 60 + sec;
}

Timestamp parse_timestamp(std::string_view text) {
  auto t = try_parse_timestamp(text);
  if (!t) throw std::invalid_argument("bad timestamp '" + std::string(text) + "'");
  return *t;
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  Timestamp days = t >= 0 ? t / 86400 : -((-t + 86399) / 86400);
  Timestamp rem = t - days * 86400;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                static_cast<int>(rem % 60));
  return buf;
}

namespace ingest {

std::string_view to_string(Rejection r) {
  switch (r) {
    case Rejection::invalid_sog: return "invalid_sog";
    case Rejection::invalid_cog: return "invalid_cog";
    case Rejection::low_speed: return "low_speed";
    case Rejection::out_of_range_position: return "out_of_range_position";
  }
  return "unknown";
}

void IngestReport::count(Rejection r) {
  switch (r) {
    case Rejection::invalid_sog: ++invalid_sog; ++rows_invalid; break;
    case Rejection::invalid_cog: ++invalid_cog; ++rows_invalid; break;
    case Rejection::out_of_range_position: ++out_of_range_position; ++rows_invalid; break;
    case Rejection::low_speed: ++rows_low_speed; break;
  }
}

void IngestReport::merge(const IngestReport& o) {
  rows_read += o.rows_read;
  rows_invalid += o.rows_invalid;
  rows_duplicate += o.rows_duplicate;
  rows_low_speed += o.rows_low_speed;
  rows_kept += o.rows_kept;
  malformed += o.malformed;
  invalid_sog += o.invalid_sog;
  invalid_cog += o.invalid_cog;
  out_of_range_position += o.out_of_range_position;
}

nlohmann::json IngestReport::to_json() const {
  return {{"rows_read", rows_read},
          {"rows_invalid", rows_invalid},
          {"rows_duplicate", rows_duplicate},
          {"rows_low_speed", rows_low_speed},
          {"rows_kept", rows_kept},
          {"vessels", vessels},
          {"invalid_breakdown",
           {{"malformed", malformed},
            {"invalid_sog", invalid_sog},
            {"invalid_cog", invalid_cog},
            {"out_of_range_position", out_of_range_position}}}};
}

std::vector<RawRecord> parse_csv(const std::string& path, const CsvSchema& schema,
                                 IngestReport& report) {
  csv::Reader reader(path);
  const std::size_t c_mmsi = reader.require(schema.mmsi);
  const std::size_t c_time = reader.require(schema.timestamp);
  const std::size_t c_lat = reader.require(schema.lat);
  const std::size_t c_lon = reader.require(schema.lon);
  const std::size_t c_sog = reader.require(schema.sog);
  const std::size_t c_cog = reader.require(schema.cog);
  const std::size_t needed = std::max({c_mmsi, c_time, c_lat, c_lon, c_sog, c_cog}) + 1;

  std::vector<RawRecord> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    ++report.rows_read;
    if (f.size() < needed) {
      ++report.malformed;
      ++report.rows_invalid;
      continue;
    }
    auto mmsi = csv::parse_int(f[c_mmsi]);
    auto ts = try_parse_timestamp(f[c_time]);
    auto lat = csv::parse_double(f[c_lat]);
    auto lon = csv::parse_double(f[c_lon]);
    auto sog = csv::parse_double(f[c_sog]);
    auto cog = csv::parse_double(f[c_cog]);
    if (!mmsi || !ts || !lat || !lon || !sog || !cog) {
      ++report.malformed;
      ++report.rows_invalid;
      continue;
    }
    out.push_back({*mmsi, *ts, *lat, *lon, *sog, *cog});
  }
  return out;
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::variant<AisMessage, Rejection> clean(const RawRecord& r) {
  if (!(r.sog >= 0.0)) return Rejection::invalid_sog;
  if (!(r.cog >= 0.0 && r.cog <= 360.0)) return Rejection::invalid_cog;
  if (!(std::abs(r.lat) <= 90.0 && std::abs(r.lon) <= 180.0)) {
    return Rejection::out_of_range_position;
  }
  if (r.sog <= 0.5) return Rejection::low_speed;
  AisMessage m = r;
  m.lat = round4(r.lat);
  m.lon = round4(r.lon);
  return m;
}

Assembled assemble(std::vector<AisMessage> messages) {
  // Stable so that "first encountered" survives the sort.
  std::stable_sort(messages.begin(), messages.end(), [](const auto& a, const auto& b) {
    return a.mmsi != b.mmsi ? a.mmsi < b.mmsi : a.timestamp < b.timestamp;
  });
  Assembled out;
  for (const auto& m : messages) {
    if (out.trajectories.empty() || out.trajectories.back().mmsi != m.mmsi) {
      out.trajectories.push_back({m.mmsi, {}});
    }
    auto& msgs = out.trajectories.back().messages;
    if (!msgs.empty() && msgs.back().timestamp == m.timestamp) {
      ++out.duplicates;
      continue;
    }
    msgs.push_back(m);
  }
  return out;
}

IngestResult ingest_files(const std::vector<std::string>& paths, const CsvSchema& schema) {
  const auto n = static_cast<std::ptrdiff_t>(paths.size());
  std::vector<std::vector<AisMessage>> accepted(paths.size());
  std::vector<IngestReport> reports(paths.size());
  std::vector<std::string> errors(paths.size());
  std::vector<int> error_kind(paths.size(), 0);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      auto records = parse_csv(paths[i], schema, reports[i]);
      accepted[i].reserve(records.size());
      for (const auto& r : records) {
        auto res = clean(r);
        if (auto* m = std::get_if<AisMessage>(&res)) {
          accepted[i].push_back(*m);
        } else {
          reports[i].count(std::get<Rejection>(res));
        }
      }
    } catch (const ConfigError& e) {
      errors[i] = e.what();
      error_kind[i] = 1;
    } catch (const std::exception& e) {
      errors[i] = e.what();
      error_kind[i] = 2;
    }
  }
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (error_kind[i] == 1) throw ConfigError(errors[i]);
    if (error_kind[i] == 2) throw IoError(errors[i]);
  }

  IngestResult result;
  std::vector<AisMessage> all;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    result.report.merge(reports[i]);
    all.insert(all.end(), accepted[i].begin(), accepted[i].end());
  }
  auto assembled = assemble(std::move(all));
  result.report.rows_duplicate = assembled.duplicates;
  result.trajectories = std::move(assembled.trajectories);
  std::size_t kept = 0;
  for (const auto& t : result.trajectories) kept += t.size();
  result.report.rows_kept = kept;
  result.report.vessels = result.trajectories.size();
  return result;
}

void write_store(const std::string& path, const std::vector<Trajectory>& trajectories) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "mmsi,timestamp,lat,lon,sog,cog\n";
  for (const auto& t : trajectories) {
    for (const auto& m : t.messages) {
      out << m.mmsi << ',' << format_timestamp(m.timestamp) << ',' << csv::format_fixed(m.lat, 4)
          << ',' << csv::format_fixed(m.lon, 4) << ',' << csv::format_double(m.sog) << ','
          << csv::format_double(m.cog) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Trajectory> read_store(const std::string& path) {
  IngestReport report;
  CsvSchema lower{"mmsi", "timestamp", "lat", "lon", "sog", "cog"};
  auto records = parse_csv(path, lower, report);
  if (report.malformed > 0) {
    throw IoError(path + ": " + std::to_string(report.malformed) + " malformed rows in store");
  }
  return assemble(std::move(records)).trajectories;
}

}  // namespace ingest
}  // namespace fishdet
