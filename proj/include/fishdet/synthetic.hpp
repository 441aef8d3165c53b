#pragma once

#include <cstdint>
#include <vector>

#include "fishdet/ingest.hpp"

namespace fishdet::synthetic {

/// Vessels that alternate straight transits with tight sinusoidal (trawl-like)
/// segments. Used by tests, benchmarks and the `synth` subcommand.
struct Spec {
  std::size_t vessels = 100;
  std::size_t segments = 6;        // per vessel, alternating, random first kind
  std::size_t min_segment = 30;    // messages
  std::size_t max_segment = 60;
  std::int64_t interval = 30;      // seconds between messages
  double transit_sog = 10.0;       // knots
  double fishing_sog = 3.0;
  double turn_amplitude = 80.0;    // degrees of COG swing while fishing
  double turn_period = 8.0;        // messages per swing cycle
  std::int64_t first_mmsi = 367000000;
  Timestamp start = 1585699200;    // 2020-04-01T00:00:00
  std::uint64_t seed = 7;
};

struct Vessel {
  Trajectory trajectory;
  std::vector<int> truth;  // per message: 1 while in a sinusoidal segment
};

std::vector<Vessel> generate(const Spec& spec);
std::vector<Trajectory> trajectories(const std::vector<Vessel>& vessels);

}  // namespace fishdet::synthetic
