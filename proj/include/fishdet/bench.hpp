#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fishdet/model.hpp"

namespace fishdet::bench {

struct Config {
  model::Cell cell = model::Cell::elman;
  int w = 10;
  int s = 64;
  std::size_t windows = 4096;   // inference batch
  std::size_t points = 200000;  // k-means assignment
  int k = 8;
  std::size_t vessels = 40;     // stream replay
  int repeats = 3;
  std::uint64_t seed = 42;
};

struct Timing {
  std::string name;
  double seconds = 0.0;  // best of repeats
  std::size_t items = 0;
  double per_second() const { return seconds > 0.0 ? static_cast<double>(items) / seconds : 0.0; }
};

/// Times the OpenMP kernels against their serial twins and the tape path, and
/// single-worker stream throughput.
std::vector<Timing> run(const Config& cfg);
nlohmann::json to_json(const Config& cfg, const std::vector<Timing>& timings);

}  // namespace fishdet::bench
