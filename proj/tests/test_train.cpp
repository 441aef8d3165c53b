#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "fishdet/errors.hpp"
#include "fishdet/labeling.hpp"
#include "fishdet/synthetic.hpp"
#include "fishdet/train.hpp"

using namespace fishdet;
using namespace fishdet::train;

namespace {

labeling::LabeledTrajectory labeled_track(std::int64_t mmsi, std::size_t n, Timestamp t0 = 0) {
  labeling::LabeledTrajectory t{mmsi, {}};
  for (std::size_t i = 0; i < n; ++i) {
    labeling::LabeledRow r;
    r.message = {mmsi, t0 + static_cast<Timestamp>(60 * i), 48.0 + 0.001 * i, -124.0 + 0.002 * static_cast<double>(i % 5),
                 5.0 + static_cast<double>(i % 3), static_cast<double>(10 * i % 360)};
    r.label = i % 4 == 0 ? labeling::Label::fishing : labeling::Label::sailing;
    t.rows.push_back(r);
  }
  return t;
}

std::vector<labeling::LabeledTrajectory> synthetic_labeled(std::size_t vessels, std::uint64_t seed) {
  synthetic::Spec spec;
  spec.vessels = vessels;
  spec.seed = seed;
  labeling::LabelConfig cfg;
  return labeling::label_dataset(synthetic::trajectories(synthetic::generate(spec)), cfg).trajectories;
}

}  // namespace

TEST_CASE("split sizes, determinism and disjointness") {
  std::vector<std::int64_t> ids(600);
  std::iota(ids.begin(), ids.end(), 1000);
  const auto a = split(ids, {});
  CHECK(a.test.size() == 50);
  CHECK(a.val.size() == 15);
  CHECK(a.train.size() == 535);
  const auto b = split(ids, {});
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  const auto c = split(ids, {50, 15, 43});
  CHECK(c.test != a.test);

  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int64_t> v;
    const std::size_t n = 5 + rng.below(100);
    for (std::size_t i = 0; i < n; ++i) v.push_back(static_cast<std::int64_t>(rng.below(1000)));
    std::set<std::int64_t> uniq(v.begin(), v.end());
    if (uniq.size() < 4) continue;
    const SplitSpec spec{1 + rng.below(uniq.size() / 2), 1, rng.next()};
    const auto s = split(v, spec);
    std::set<std::int64_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
    CHECK(all.size() == s.train.size() + s.val.size() + s.test.size());
    CHECK(all == uniq);
  }
  std::vector<std::int64_t> small(65);
  std::iota(small.begin(), small.end(), 0);
  CHECK_THROWS_AS(split(small, {}), std::invalid_argument);
}

TEST_CASE("normalization composes z-score and min-max") {
  std::vector<std::array<double, 4>> rows = {{0, 0, 0, 0}, {5, 1, 2, 3}, {10, 2, 4, 9}};
  const auto st = NormStats::fit(rows);
  CHECK(st.attrs[kLat].std == doctest::Approx(std::sqrt(50.0 / 3.0)));
  CHECK((0.0 - st.attrs[kLat].mean) / st.attrs[kLat].std == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(st.apply(kLat, 0.0) == doctest::Approx(0.0));
  CHECK(st.apply(kLat, 5.0) == doctest::Approx(0.5));
  CHECK(st.apply(kLat, 10.0) == doctest::Approx(1.0));
  CHECK(st.apply(kLat, 20.0) == doctest::Approx(2.0));  // not clipped
  for (std::size_t a = 0; a < 4; ++a) {
    CHECK(st.apply(a, st.attrs[a].min) == doctest::Approx(0.0));
    CHECK(st.apply(a, st.attrs[a].max) == doctest::Approx(1.0));
  }
  CHECK(NormStats::from_json(st.to_json()).hash() == st.hash());

  std::vector<std::array<double, 4>> flat = {{1, 0, 0, 0}, {1, 1, 1, 1}};
  CHECK_THROWS_AS(NormStats::fit(flat).validate(), ConfigError);
}

TEST_CASE("normalization statistics cover only windowed training messages") {
  auto data = std::vector{labeled_track(1, 12), labeled_track(2, 5)};
  data[1].rows[0].message.lat = 1000.0;  // too short for a window, must be ignored
  const auto st = NormStats::fit(data, 10, 1);
  CHECK(st.attrs[kLat].max < 49.0);
}

TEST_CASE("make_windows") {
  const auto set = make_windows(std::vector{labeled_track(1, 12)}, 10, 1);
  CHECK(set.size() == 3);
  CHECK(set.x.shape == nn::Shape{3, 10, 4});
  CHECK(make_windows(std::vector{labeled_track(1, 9)}, 10, 1).size() == 0);
  CHECK(make_windows(std::vector{labeled_track(1, 25)}, 10, 5).size() == 4);

  const auto t = labeled_track(7, 30);
  const auto w = make_windows(std::vector{t}, 10, 3);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& last = t.rows[i * 3 + 9];
    CHECK(w.y[i] == (last.label == labeling::Label::fishing ? 1.0f : 0.0f));
    CHECK(w.end_time[i] == last.message.timestamp);
    CHECK(w.mmsi[i] == 7);
    for (std::size_t j = 0; j < 10; ++j) {
      const auto& m = t.rows[i * 3 + j].message;
      const float* v = w.x.data.data() + (i * 10 + j) * 4;
      CHECK(v[kLat] == static_cast<float>(m.lat));
      CHECK(v[kLon] == static_cast<float>(m.lon));
      CHECK(v[kCog] == static_cast<float>(m.cog));
      CHECK(v[kSog] == static_cast<float>(m.sog));
    }
  }
  // Windows never span trajectories.
  const auto two = make_windows(std::vector{labeled_track(1, 11), labeled_track(2, 11)}, 10, 1);
  CHECK(two.size() == 4);
  CHECK(two.mmsi == std::vector<std::int64_t>{1, 1, 2, 2});
}

TEST_CASE("loss terms") {
  nn::Parameter<double> centers("c", nn::Tensor<double>({2, 2}, {0, 0, 1, 1}));
  SUBCASE("BCE at logit 0 and zero center distance") {
    nn::Tape<double> tape;
    auto logits = tape.constant(nn::Tensor<double>({1}, {0.0}));
    auto emb = tape.constant(nn::Tensor<double>({1, 2}, {1, 1}));
    const std::vector<double> y = {1.0};
    auto t = loss<double>(tape, logits, emb, y, tape.param(centers), {});
    CHECK(tape.value(t.bce)[0] == doctest::Approx(std::log(2.0)));
    CHECK(tape.value(t.center)[0] == 0.0);
    CHECK(tape.value(t.total)[0] == doctest::Approx(0.15 * std::log(2.0)));
  }
  SUBCASE("pure BCE weighting and center term") {
    nn::Tape<double> tape;
    auto logits = tape.constant(nn::Tensor<double>({2}, {1.5, -0.5}));
    auto emb = tape.constant(nn::Tensor<double>({2, 2}, {3, 0, 1, 1}));
    const std::vector<double> y = {0.0, 1.0};
    auto t = loss<double>(tape, logits, emb, y, tape.param(centers), {0.0, 1.0});
    CHECK(tape.value(t.total)[0] == doctest::Approx(tape.value(t.bce)[0]));
    CHECK(tape.value(t.center)[0] == doctest::Approx(0.5 * 9.0 / 2.0));
    CHECK(tape.value(t.total)[0] >= 0.0);
  }
}

TEST_CASE("AdamW") {
  auto one = [](float theta, float grad, AdamWConfig cfg) {
    nn::Parameter<float> p("p", nn::Tensor<float>({1}, {theta}));
    p.grad.data[0] = grad;
    AdamW opt({&p}, cfg);
    opt.step();
    return p.value.data[0];
  };
  CHECK(one(1.0f, 1.0f, {0.1, 0.9, 0.999, 1e-8, 0.0}) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(one(1.0f, 0.0f, {0.1, 0.9, 0.999, 1e-8, 0.0}) == 1.0f);
  CHECK(one(2.0f, 0.0f, {0.1, 0.9, 0.999, 1e-8, 0.5}) == doctest::Approx(2.0 * (1 - 0.05)));
}

TEST_CASE("gradient clipping") {
  nn::Parameter<float> a("a", nn::Tensor<float>({2}, {0, 0}));
  nn::Parameter<float> b("b", nn::Tensor<float>({1}, {0}));
  std::vector<nn::Parameter<float>*> ps = {&a, &b};
  a.grad.data = {3, 4};
  b.grad.data = {0};
  CHECK(clip_gradients(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad.data[0] == doctest::Approx(0.6f));
  CHECK(a.grad.data[1] == doctest::Approx(0.8f));

  a.grad.data = {0.3f, 0};
  clip_gradients(ps, 1.0);
  CHECK(a.grad.data[0] == 0.3f);

  a.grad.data = {0, 2};
  clip_gradients(ps, 1.0);
  CHECK(global_grad_norm(ps) == doctest::Approx(1.0));

  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    for (auto& g : a.grad.data) g = static_cast<float>(rng.normal() * 3);
    b.grad.data[0] = static_cast<float>(rng.normal());
    const double before = global_grad_norm(ps);
    clip_gradients(ps, 1.0);
    const double after = global_grad_norm(ps);
    CHECK(after <= before + 1e-9);
    CHECK(after <= 1.0 + 1e-6);
  }
}

TEST_CASE("plateau scheduler and early stopping") {
  PlateauScheduler sched(0.5, 5);
  double lr = 1e-3;
  lr = sched.step(1.0, lr);
  for (int i = 0; i < 4; ++i) lr = sched.step(1.0, lr);
  CHECK(lr == 1e-3);
  lr = sched.step(1.0, lr);
  CHECK(lr == 5e-4);

  EarlyStopping stop(10);
  const double hist[] = {0.6, 0.5, 0.55, 0.52, 0.51, 0.53, 0.54, 0.56, 0.57, 0.58, 0.59, 0.6};
  int epoch = 0;
  for (double v : hist) {
    stop.update(++epoch, v);
    if (stop.should_stop()) break;
  }
  CHECK(stop.should_stop());
  CHECK(epoch == 12);
  CHECK(stop.best_epoch() == 2);
}

TEST_CASE("training on synthetic vessels") {
  const auto data = synthetic_labeled(30, 3);
  const auto prep = prepare(data, {8, 4, 1}, 10, 2);
  model::ModelConfig mc;
  mc.w = 10;
  mc.s = 16;
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.batch = 64;
  std::vector<EpochRecord> seen;
  const auto res = fit(cfg, mc, prep.train, prep.val, prep.stats,
                       [&](const EpochRecord& r) { seen.push_back(r); });
  REQUIRE(res.history.size() == 5);
  CHECK(seen.size() == 5);
  for (std::size_t i = 1; i < res.history.size(); ++i) {
    CHECK(res.history[i].train_bce <= res.history[i - 1].train_bce * 1.02);
  }
  CHECK(res.history.back().train_bce < res.history.front().train_bce);
  double best = 1e9;
  for (const auto& r : res.history) best = std::min(best, r.val_bce);
  CHECK(validation_bce(res.checkpoint, prep.val) == doctest::Approx(best).epsilon(1e-9));
  CHECK(res.history[static_cast<std::size_t>(res.best_epoch - 1)].val_bce == best);

  // Single-threaded reruns are bit-identical.
  cfg.max_epochs = 2;
  const auto a = fit(cfg, mc, prep.train, prep.val, prep.stats);
  const auto b = fit(cfg, mc, prep.train, prep.val, prep.stats);
  auto pa = a.checkpoint.weights.parameters();
  auto pb = b.checkpoint.weights.parameters();
  for (std::size_t p = 0; p < pa.size(); ++p) CHECK(pa[p]->value.data == pb[p]->value.data);
}

TEST_CASE("non-finite loss aborts with the last good checkpoint") {
  const auto data = synthetic_labeled(12, 5);
  const auto prep = prepare(data, {3, 2, 1}, 10, 3);
  model::ModelConfig mc;
  mc.s = 8;
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.lr = 1e30;  // guaranteed blow-up
  cfg.clip_norm = 1e30;
  try {
    fit(cfg, mc, prep.train, prep.val, prep.stats);
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(e.last_good().config == mc);
    for (const auto* p : e.last_good().weights.parameters())
      for (float v : p->value.data) CHECK(std::isfinite(v));
  }
}
