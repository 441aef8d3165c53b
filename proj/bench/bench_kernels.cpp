// Standalone timing of the parallel kernels, their serial twins and the
// single-worker stream path. Usage: fishdet_bench [w] [s] [windows]
#include <cstdlib>
#include <iostream>

#include "fishdet/bench.hpp"

int main(int argc, char** argv) {
  fishdet::bench::Config cfg;
  if (argc > 1) cfg.w = std::atoi(argv[1]);
  if (argc > 2) cfg.s = std::atoi(argv[2]);
  if (argc > 3) cfg.windows = static_cast<std::size_t>(std::atoll(argv[3]));
  const auto timings = fishdet::bench::run(cfg);
  for (const auto& t : timings) {
    std::cout << t.name << ": " << t.seconds * 1e3 << " ms, " << t.per_second() << " items/s\n";
  }
  std::cout << fishdet::bench::to_json(cfg, timings).dump(2) << '\n';
  return 0;
}
