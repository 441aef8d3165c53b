#include "fishdet/features.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "fishdet/csv.hpp"
#include "fishdet/errors.hpp"

namespace fishdet::features {

std::string_view to_string(WindowKind k) {
  switch (k) {
    case WindowKind::message: return "message";
    case WindowKind::time: return "time";
    case WindowKind::distance: return "distance";
  }
  return "?";
}

WindowKind parse_window_kind(std::string_view s) {
  if (s == "message" || s == "O") return WindowKind::message;
  if (s == "time" || s == "T") return WindowKind::time;
  if (s == "distance" || s == "D") return WindowKind::distance;
  throw std::invalid_argument("unknown window kind '" + std::string(s) + "'");
}

void WindowSpec::validate() const {
  if (!(size > 0.0)) throw std::invalid_argument("window size must be > 0");
  if (kind == WindowKind::message && size != std::floor(size)) {
    throw std::invalid_argument("message window size must be an integer");
  }
}

WindowSpec WindowSpec::defaults(WindowKind kind) {
  switch (kind) {
    case WindowKind::message: return {kind, 10.0};
    case WindowKind::time: return {kind, 10.0};
    case WindowKind::distance: return {kind, 5000.0};
  }
  return {};
}

double rcog(double d) {
  if (d > 180.0) d -= 360.0;
  else if (d < -180.0) d += 360.0;
  if (d == -180.0) d = 180.0;
  return d;
}

double haversine(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = 3.14159265358979323846 / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

IndexRange window_members(std::span<const AisMessage> messages, std::size_t index,
                          const WindowSpec& spec) {
  if (index >= messages.size()) throw std::out_of_range("window index out of range");
  std::size_t begin = index;
  switch (spec.kind) {
    case WindowKind::message: {
      const auto n = static_cast<std::size_t>(spec.size);
      begin = index + 1 >= n ? index + 1 - n : 0;
      break;
    }
    case WindowKind::time: {
      const double cutoff = static_cast<double>(messages[index].timestamp) - spec.size * 60.0;
      while (begin > 0 && static_cast<double>(messages[begin - 1].timestamp) >= cutoff) --begin;
      break;
    }
    case WindowKind::distance: {
      double length = 0.0;
      while (begin > 0) {
        const auto& a = messages[begin - 1];
        const auto& b = messages[begin];
        const double leg = haversine(a.lat, a.lon, b.lat, b.lon);
        if (length + leg > spec.size) break;
        length += leg;
        --begin;
      }
      break;
    }
  }
  return {begin, index + 1};
}

std::vector<FeatureRow> featurize(const Trajectory& trajectory, const WindowSpec& spec) {
  spec.validate();
  const auto& msgs = trajectory.messages;
  std::vector<FeatureRow> rows;
  if (msgs.size() < 2) return rows;
  rows.reserve(msgs.size() - 1);
  for (std::size_t i = 1; i < msgs.size(); ++i) {
    FeatureRow r;
    r.mmsi = msgs[i].mmsi;
    r.timestamp = msgs[i].timestamp;
    r.accel = diff(msgs[i].sog, msgs[i - 1].sog);
    r.rcog = rcog(diff(msgs[i].cog, msgs[i - 1].cog));
    rows.push_back(r);
  }
  // Windows are taken over the feature rows, i.e. messages[1..].
  const std::span<const AisMessage> tail(msgs.data() + 1, msgs.size() - 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto w = window_members(tail, i, spec);
    double accel_sum = 0.0;
    double rcog_sum = 0.0;
    for (std::size_t j = w.begin; j < w.end; ++j) {
      accel_sum += rows[j].accel;
      rcog_sum += rows[j].rcog;
    }
    rows[i].accel_ma = accel_sum / static_cast<double>(w.size());
    rows[i].rcog_ms = rcog_sum;
  }
  return rows;
}

FeaturizedSet featurize_all(const std::vector<Trajectory>& trajectories, const WindowSpec& spec) {
  spec.validate();
  FeaturizedSet out;
  out.rows.resize(trajectories.size());
  const auto n = static_cast<std::ptrdiff_t>(trajectories.size());
  std::size_t short_count = 0;
#pragma omp parallel for schedule(dynamic, 4) reduction(+ : short_count)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (trajectories[i].size() < 2) ++short_count;
    out.rows[i] = featurize(trajectories[i], spec);
  }
  out.short_trajectories = short_count;
  return out;
}

void write_features_csv(const std::string& path,
                        const std::vector<std::vector<FeatureRow>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "mmsi,timestamp,accel,rcog,accel_ma,rcog_ms\n";
  for (const auto& traj : rows) {
    for (const auto& r : traj) {
      out << r.mmsi << ',' << format_timestamp(r.timestamp) << ','
          << csv::format_double(r.accel) << ',' << csv::format_double(r.rcog) << ','
          << csv::format_double(r.accel_ma) << ',' << csv::format_double(r.rcog_ms) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace fishdet::features
