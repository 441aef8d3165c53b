#include "fishdet/bench.hpp"

#include <chrono>
#include <functional>
#include <memory>

#include <omp.h>

#include "fishdet/kernels.hpp"
#include "fishdet/rng.hpp"
#include "fishdet/stream.hpp"
#include "fishdet/synthetic.hpp"

namespace fishdet::bench {

namespace {

double best_of(int repeats, const std::function<void()>& body) {
  double best = 1e300;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

// Keeps results observable so the optimizer cannot drop the work.
volatile double g_sink = 0.0;

}  // namespace

std::vector<Timing> run(const Config& cfg) {
  std::vector<Timing> out;
  Rng rng(cfg.seed);

  model::ModelConfig mc;
  mc.cell = cfg.cell;
  mc.w = cfg.w;
  mc.s = cfg.s;
  mc.validate();
  auto weights = model::init_weights<float>(mc, cfg.seed);
  nn::Tensor<float> x({cfg.windows, static_cast<std::size_t>(cfg.w), model::kInputs});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform());

  out.push_back({"infer_batch_omp", best_of(cfg.repeats, [&] {
                   g_sink = g_sink + kernels::infer_batch(mc, weights, x)[0];
                 }),
                 cfg.windows});
  out.push_back({"infer_batch_serial", best_of(cfg.repeats, [&] {
                   g_sink = g_sink + kernels::infer_batch_serial(mc, weights, x)[0];
                 }),
                 cfg.windows});
  const std::size_t tape_windows = std::min<std::size_t>(cfg.windows, 512);
  nn::Tensor<float> xt({tape_windows, static_cast<std::size_t>(cfg.w), model::kInputs});
  std::copy_n(x.data.begin(), xt.data.size(), xt.data.begin());
  out.push_back({"infer_batch_tape", best_of(cfg.repeats, [&] {
                   g_sink = g_sink + kernels::infer_batch_tape(mc, weights, xt)[0];
                 }),
                 tape_windows});

  std::vector<labeling::Point2> points(cfg.points);
  for (auto& p : points) p = {rng.normal(), rng.normal()};
  std::vector<labeling::Point2> centroids(static_cast<std::size_t>(cfg.k));
  for (auto& c : centroids) c = {rng.normal(), rng.normal()};
  std::vector<int> assignment(points.size(), -1);
  out.push_back({"assign_nearest_omp", best_of(cfg.repeats, [&] {
                   std::fill(assignment.begin(), assignment.end(), -1);
                   g_sink = g_sink + kernels::assign_nearest(points, centroids, assignment);
                 }),
                 cfg.points});
  out.push_back({"assign_nearest_serial", best_of(cfg.repeats, [&] {
                   std::fill(assignment.begin(), assignment.end(), -1);
                   g_sink = g_sink + kernels::assign_nearest_serial(points, centroids, assignment);
                 }),
                 cfg.points});

  synthetic::Spec spec;
  spec.vessels = cfg.vessels;
  spec.seed = cfg.seed;
  const auto messages = stream::merge_order(synthetic::trajectories(synthetic::generate(spec)));
  auto ck = std::make_shared<Checkpoint>();
  ck->config = mc;
  ck->weights = weights;
  for (auto& a : ck->norm.attrs) a = {0.0, 1.0, -200.0, 400.0};
  const stream::Detector detector{std::shared_ptr<const Checkpoint>(ck)};
  out.push_back({"stream_single_worker", best_of(cfg.repeats, [&] {
                   std::size_t emitted = 0;
                   stream::Engine engine(detector, 0, [&](const stream::Detection&) { ++emitted; });
                   for (const auto& m : messages) engine.submit(m);
                   engine.finish();
                   g_sink = g_sink + static_cast<double>(emitted);
                 }),
                 messages.size()});
  return out;
}

nlohmann::json to_json(const Config& cfg, const std::vector<Timing>& timings) {
  nlohmann::json j;
  j["config"] = {{"cell", model::to_string(cfg.cell)}, {"w", cfg.w},           {"s", cfg.s},
                 {"windows", cfg.windows},            {"points", cfg.points}, {"k", cfg.k},
                 {"vessels", cfg.vessels},            {"repeats", cfg.repeats},
                 {"seed", cfg.seed},                  {"threads", omp_get_max_threads()}};
  j["timings"] = nlohmann::json::array();
  for (const auto& t : timings) {
    j["timings"].push_back(
        {{"name", t.name}, {"seconds", t.seconds}, {"items", t.items}, {"per_second", t.per_second()}});
  }
  return j;
}

}  // namespace fishdet::bench
