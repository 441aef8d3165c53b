#include "fishdet/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fishdet/rng.hpp"

namespace fishdet::synthetic {

namespace {

constexpr double kEarthRadius = 6371000.0;
constexpr double kKnot = 1852.0 / 3600.0;  // m/s

double wrap360(double deg) {
  double d = std::fmod(deg, 360.0);
  if (d < 0.0) d += 360.0;
  return d;
}

}  // namespace

std::vector<Vessel> generate(const Spec& spec) {
  if (spec.min_segment == 0 || spec.max_segment < spec.min_segment || spec.interval <= 0) {
    throw std::invalid_argument("synthetic: bad segment or interval settings");
  }
  Rng rng(spec.seed);
  std::vector<Vessel> out;
  out.reserve(spec.vessels);
  for (std::size_t v = 0; v < spec.vessels; ++v) {
    Vessel vessel;
    vessel.trajectory.mmsi = spec.first_mmsi + static_cast<std::int64_t>(v);
    double lat = rng.uniform(48.0, 48.5);
    double lon = rng.uniform(-124.5, -123.0);
    double heading = rng.uniform(0.0, 360.0);
    Timestamp t = spec.start + static_cast<Timestamp>(rng.below(3600));
    bool fishing = rng.below(2) == 1;
    for (std::size_t seg = 0; seg < spec.segments; ++seg, fishing = !fishing) {
      const auto len = spec.min_segment + rng.below(spec.max_segment - spec.min_segment + 1);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      heading = wrap360(heading + rng.uniform(-60.0, 60.0));
      for (std::size_t i = 0; i < len; ++i) {
        double cog, sog;
        if (fishing) {
          const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / spec.turn_period;
          cog = wrap360(heading + spec.turn_amplitude * std::sin(angle + phase) + rng.normal());
          sog = spec.fishing_sog + 0.5 * std::sin(angle + phase) + 0.05 * rng.normal();
        } else {
          cog = wrap360(heading + 0.3 * rng.normal());
          sog = spec.transit_sog + 0.05 * rng.normal();
        }
        AisMessage m;
        m.mmsi = vessel.trajectory.mmsi;
        m.timestamp = t;
        m.lat = std::round(lat * 1e4) / 1e4;
        m.lon = std::round(lon * 1e4) / 1e4;
        m.sog = std::round(sog * 10.0) / 10.0;
        m.cog = std::round(cog * 10.0) / 10.0;
        if (m.cog >= 360.0) m.cog -= 360.0;
        vessel.trajectory.messages.push_back(m);
        vessel.truth.push_back(fishing ? 1 : 0);

        const double dist = sog * kKnot * static_cast<double>(spec.interval);
        const double rad = cog * std::numbers::pi / 180.0;
        lat += dist * std::cos(rad) / kEarthRadius * 180.0 / std::numbers::pi;
        lon += dist * std::sin(rad) /
               (kEarthRadius * std::cos(lat * std::numbers::pi / 180.0)) * 180.0 / std::numbers::pi;
        t += spec.interval;
      }
    }
    out.push_back(std::move(vessel));
  }
  return out;
}

std::vector<Trajectory> trajectories(const std::vector<Vessel>& vessels) {
  std::vector<Trajectory> out;
  out.reserve(vessels.size());
  for (const auto& v : vessels) out.push_back(v.trajectory);
  return out;
}

}  // namespace fishdet::synthetic
