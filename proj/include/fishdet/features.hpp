#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fishdet/ingest.hpp"

namespace fishdet::features {

enum class WindowKind { message, time, distance };

std::string_view to_string(WindowKind k);
WindowKind parse_window_kind(std::string_view s);  // throws std::invalid_argument

/// Trailing window definition. `size` is a message count, minutes, or meters
/// depending on `kind`.
struct WindowSpec {
  WindowKind kind = WindowKind::message;
  double size = 10.0;

  void validate() const;
  static WindowSpec defaults(WindowKind kind);  // 10 messages, 10 min, 5000 m
};

struct FeatureRow {
  std::int64_t mmsi = 0;
  Timestamp timestamp = 0;
  double accel = 0.0;     // SOG difference to the previous message, knots
  double rcog = 0.0;      // signed turn, (-180, 180]
  double accel_ma = 0.0;  // mean accel over the window
  double rcog_ms = 0.0;   // summed rcog over the window
};

inline constexpr double kEarthRadiusM = 6371000.0;

/// next - curr.
inline double diff(double attr_next, double attr_curr) { return attr_next - attr_curr; }

/// Wraps a COG difference to the smaller signed angle in (-180, 180].
double rcog(double d_cog);

/// Great-circle distance in meters.
double haversine(double lat1, double lon1, double lat2, double lon2);

/// Half-open index range [begin, end) of a trailing window.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// Trailing window ending at `index` (inclusive) over `messages`.
///  - message:  the last `size` messages (fewer at the head)
///  - time:     messages with timestamp >= t[index] - size minutes
///  - distance: longest suffix whose along-track haversine length <= size m
IndexRange window_members(std::span<const AisMessage> messages, std::size_t index,
                          const WindowSpec& spec);

/// One FeatureRow per message from index 1 onward. Windows run over the
/// feature rows, i.e. over messages[1..]. Trajectories with fewer than two
/// messages give an empty result.
std::vector<FeatureRow> featurize(const Trajectory& trajectory, const WindowSpec& spec);

struct FeaturizedSet {
  std::vector<std::vector<FeatureRow>> rows;  // parallel to the input trajectories
  std::size_t short_trajectories = 0;        // inputs with < 2 messages
};

/// featurize() over many trajectories, parallel across trajectories.
FeaturizedSet featurize_all(const std::vector<Trajectory>& trajectories, const WindowSpec& spec);

void write_features_csv(const std::string& path, const std::vector<std::vector<FeatureRow>>& rows);

}  // namespace fishdet::features
