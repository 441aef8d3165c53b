// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//   fishdet_acceptance                 criteria 1-7 and 9; 8 runs only with data
//   fishdet_acceptance --full-scale   criterion 8 alone; exit 77 without data
//
// Criterion 8 reads the AIS extract named by FISHDET_MARINECADASTRE_CSV
// (comma-separated list of files in the MarineCadastre column layout).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "fishdet/ensemble.hpp"
#include "fishdet/eval.hpp"
#include "fishdet/features.hpp"
#include "fishdet/ingest.hpp"
#include "fishdet/labeling.hpp"
#include "fishdet/model.hpp"
#include "fishdet/rng.hpp"
#include "fishdet/stream.hpp"
#include "fishdet/synthetic.hpp"
#include "fishdet/train.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace fishdet;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

Verdict check(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

const char* name(Outcome o) {
  switch (o) {
    case Outcome::pass: return "PASS";
    case Outcome::fail: return "FAIL";
    default: return "SKIP";
  }
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// 1 -------------------------------------------------------------------------
Verdict parameter_accounting() {
  struct Row {
    model::Cell cell;
    int w, s;
    std::size_t expect;
  };
  const Row rows[] = {
      {model::Cell::elman, 5, 32, 5704},   {model::Cell::elman, 5, 64, 21640},
      {model::Cell::elman, 5, 128, 84232}, {model::Cell::elman, 10, 32, 5864},
      {model::Cell::elman, 10, 64, 21960}, {model::Cell::elman, 10, 128, 84872},
      {model::Cell::elman, 15, 32, 6024},  {model::Cell::elman, 15, 64, 22280},
      {model::Cell::elman, 15, 128, 85512}, {model::Cell::gru, 10, 64, 64200},
      {model::Cell::lstm, 10, 64, 85320},
  };
  std::string bad;
  for (const auto& r : rows) {
    model::ModelConfig cfg;
    cfg.cell = r.cell;
    cfg.w = r.w;
    cfg.s = r.s;
    const auto got = model::count_params(cfg).total;
    if (got != r.expect) {
      bad += " " + std::string(model::to_string(r.cell)) + "(w=" + std::to_string(r.w) +
             ",s=" + std::to_string(r.s) + ")=" + std::to_string(got);
    }
  }
  return check(bad.empty(), bad.empty() ? "11/11 counts exact" : "mismatch:" + bad);
}

// 2 -------------------------------------------------------------------------
Verdict gradient_correctness() {
  // At s=3, batch=2 every decoder ReLU unit is sometimes inactive, leaving no
  // gradient to compare. Such seeds are checked but not counted toward the five.
  double worst = 0.0;
  std::size_t checked = 0;
  int vacuous = 0;
  bool enough = true;
  for (auto cell : {model::Cell::elman, model::Cell::gru, model::Cell::lstm}) {
    int informative = 0;
    for (std::uint64_t seed = 1; informative < 5 && seed <= 50; ++seed) {
      const auto r = oracle::gradient_check<float>(cell, seed);
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
      if (r.zero_grad_params == 0) {
        ++informative;
      } else {
        ++vacuous;
      }
    }
    enough = enough && informative == 5;
  }
  return check(worst < 1e-4 && enough,
               "max rel error " + fmt(worst) + " over " + std::to_string(checked) +
                   " entries (3 cells x 5 seeds with full gradient flow, float32 analytic, tol "
                   "1e-4; " + std::to_string(vacuous) + " dead-decoder seeds skipped)");
}

// 3 -------------------------------------------------------------------------
Verdict unsupervised_oracle() {
  Rng rng(2024);
  double worst = 0.0;
  int instances = 0;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<labeling::Point2> pts(n);
    const bool grid = rng.below(3) == 0;  // small integer grids force ties
    for (auto& p : pts) {
      if (grid) {
        p = {static_cast<double>(rng.below(4)), static_cast<double>(rng.below(4))};
      } else {
        p = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
      }
    }
    if (labeling::count_distinct(pts) < 2) continue;
    ++instances;
    const double a = oracle::best_seed_pair_sse(pts);
    const double b = oracle::brute_force_sse_k2(pts);
    worst = std::max(worst, std::abs(a - b));
  }
  const std::vector<labeling::Point2> dbi_pts = {{0, 0}, {1, 0}, {10, 0}, {11, 0}};
  const std::vector<int> assign = {0, 0, 1, 1};
  const std::vector<labeling::Point2> centers = {{0.5, 0}, {10.5, 0}};
  const double dbi = labeling::davies_bouldin(dbi_pts, assign, centers);
  return check(worst <= 1e-9 && std::abs(dbi - 0.1) <= 1e-9,
               std::to_string(instances) + " instances, max |SSE diff| " + fmt(worst) +
                   "; DBI " + fmt(dbi, 12));
}

// 4 -------------------------------------------------------------------------
Verdict rcog_laws() {
  Rng rng(360);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    // Mix continuous values with exact multiples of 90 to hit the boundary.
    const double a = i % 4 == 0 ? 90.0 * static_cast<double>(rng.below(5)) : rng.uniform(0, 360);
    const double b = i % 4 == 0 ? 90.0 * static_cast<double>(rng.below(5)) : rng.uniform(0, 360);
    const double d = b - a;
    const double r = features::rcog(d);
    if (!(r > -180.0 && r <= 180.0)) ++violations;
    const double k = (d - r) / 360.0;
    if (std::abs(k - std::round(k)) > 1e-9) ++violations;
    if (r != 180.0 && features::rcog(-d) != -r) ++violations;
  }
  const bool examples = features::rcog(270) == -90 && features::rcog(-340) == 20 &&
                        features::rcog(45) == 45;
  return check(violations == 0 && examples,
               "10000 pairs, " + std::to_string(violations) + " violations; worked examples " +
                   (examples ? "ok" : "wrong"));
}

// 5 -------------------------------------------------------------------------
Verdict relabel_fixpoint() {
  using labeling::Label;
  Rng rng(5);
  std::size_t bad = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + rng.below(200);
    // Vary the switching rate so both fragmented and long-run inputs occur.
    const double flip = rng.uniform(0.02, 0.6);
    std::vector<Label> in(n);
    Label cur = rng.below(2) ? Label::fishing : Label::sailing;
    for (auto& l : in) {
      if (rng.uniform() < flip) cur = cur == Label::fishing ? Label::sailing : Label::fishing;
      l = cur;
    }
    const auto out = labeling::relabel_runs(in, 5);
    if (out.size() != n) {
      ++bad;
      continue;
    }
    std::vector<std::size_t> runs;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0 || out[i] != out[i - 1]) runs.push_back(0);
      ++runs.back();
    }
    const bool ok_runs = runs.size() == 1 ||
                         std::all_of(runs.begin(), runs.end(), [](std::size_t r) { return r >= 5; });
    if (!ok_runs) ++bad;
    if (labeling::relabel_runs(out, 5) != out) ++bad;
  }
  return check(bad == 0, "10000 sequences, " + std::to_string(bad) + " violations");
}

// 6 -------------------------------------------------------------------------
Verdict batch_stream_equivalence() {
  synthetic::Spec sp;
  sp.vessels = 100;
  sp.segments = 3;
  sp.seed = 606;
  const auto data = synthetic::trajectories(synthetic::generate(sp));

  model::ModelConfig cfg;
  cfg.w = 10;
  cfg.s = 32;
  std::vector<labeling::LabeledTrajectory> as_labeled;
  for (const auto& t : data) {
    labeling::LabeledTrajectory lt{t.mmsi, {}};
    for (const auto& m : t.messages) lt.rows.push_back({m, {}, 0, labeling::Label::sailing});
    as_labeled.push_back(std::move(lt));
  }
  const auto stats = train::NormStats::fit(as_labeled, 10, 1);
  const auto ck = std::make_shared<const Checkpoint>(
      Checkpoint{cfg, model::init_weights<float>(cfg, 66), stats, {}});

  const auto batch = train::make_windows(data, 10, 1);
  const auto logits = eval::predict_logits(*ck, batch);

  std::map<std::pair<std::int64_t, Timestamp>, float> online;
  stream::Engine engine(stream::Detector(ck), 0,
                        [&](const stream::Detection& d) { online[{d.mmsi, d.timestamp}] = d.logit; });
  stream::replay(data, std::nullopt, [&](const AisMessage& m) { engine.submit(m); });
  engine.finish();

  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto it = online.find({batch.mmsi[i], batch.end_time[i]});
    if (it == online.end() || std::memcmp(&it->second, &logits[i], sizeof(float)) != 0) ++mismatched;
  }
  const bool ok = mismatched == 0 && online.size() == batch.size();
  return check(ok, std::to_string(data.size()) + " trajectories, " +
                       std::to_string(batch.size()) + " windows, " +
                       std::to_string(online.size()) + " online detections, " +
                       std::to_string(mismatched) + " not bitwise equal");
}

// 7 -------------------------------------------------------------------------
Verdict synthetic_end_to_end() {
  synthetic::Spec sp;
  sp.vessels = 60;
  sp.seed = 7;
  const auto vessels = synthetic::generate(sp);

  labeling::LabelConfig lc;  // message windows, k = 8
  const auto labeled = labeling::label_dataset(synthetic::trajectories(vessels), lc);

  // Labels should track the generator's segment truth.
  std::size_t agree = 0, total = 0;
  std::map<std::int64_t, const synthetic::Vessel*> by_id;
  for (const auto& v : vessels) by_id[v.trajectory.mmsi] = &v;
  for (const auto& t : labeled.trajectories) {
    const auto& v = *by_id.at(t.mmsi);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const std::size_t j = v.trajectory.messages.size() - t.rows.size() + i;
      agree += (t.rows[i].label == labeling::Label::fishing) == v.truth[j];
      ++total;
    }
  }

  const auto prep = train::prepare(labeled.trajectories, {10, 6, 7}, 10, 2);
  model::ModelConfig mc;
  mc.cell = model::Cell::elman;
  mc.w = 10;
  mc.s = 32;
  train::TrainConfig tc;
  tc.max_epochs = 50;
  tc.stride = 2;
  const auto t0 = std::chrono::steady_clock::now();
  const auto fit = train::fit(tc, mc, prep.train, prep.val, prep.stats);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto test = train::make_windows(
      train::subset(labeled.trajectories, prep.splits.test), 10, 1);
  const auto rep = eval::evaluate(fit.checkpoint, test);
  const double f1 = rep.metrics.macro.f1;
  return check(f1 >= 0.95 && static_cast<int>(fit.history.size()) <= 50,
               "macro F1 " + fmt(f1, 4) + " on " + std::to_string(test.size()) +
                   " held-out windows (best epoch " + std::to_string(fit.best_epoch) + " of " +
                   std::to_string(fit.history.size()) + ", " + fmt(secs, 3) +
                   " s); label/truth agreement " + fmt(static_cast<double>(agree) / total, 4));
}

// 8 -------------------------------------------------------------------------
Verdict full_scale() {
  const char* env = std::getenv("FISHDET_MARINECADASTRE_CSV");
  if (!env || !*env) return {Outcome::skip, "FISHDET_MARINECADASTRE_CSV not set; no AIS extract"};
  std::vector<std::string> files;
  std::stringstream ss(env);
  for (std::string f; std::getline(ss, f, ',');) {
    if (!f.empty()) files.push_back(f);
  }
  const auto store = ingest::ingest_files(files, {});

  train::TrainConfig tc;
  const train::SplitSpec split;
  std::array<Checkpoint, 3> members;
  train::WindowSet o_test;
  double o_f1 = 0.0;
  const features::WindowKind kinds[] = {features::WindowKind::message, features::WindowKind::time,
                                        features::WindowKind::distance};
  for (std::size_t m = 0; m < 3; ++m) {
    labeling::LabelConfig lc;
    lc.window = features::WindowSpec::defaults(kinds[m]);
    lc.k = labeling::default_k(kinds[m]);
    const auto labeled = labeling::label_dataset(store.trajectories, lc);
    const auto prep = train::prepare(labeled.trajectories, split, 10, tc.stride);
    model::ModelConfig mc;
    mc.w = 10;
    mc.s = 64;
    members[m] = train::fit(tc, mc, prep.train, prep.val, prep.stats).checkpoint;
    if (m == 0) {
      o_test = prep.test;
      o_f1 = eval::evaluate(members[0], o_test).metrics.macro.f1;
    }
  }
  const ensemble::Ensemble ens(members, ensemble::Mode::hard);
  const auto er = ensemble::evaluate_ensemble(ens, o_test);
  const bool ok = std::abs(o_f1 - 0.8745) <= 0.05 && er.tn_rate >= 0.94;
  return check(ok, "Elman O macro F1 " + fmt(o_f1, 4) + " (band 0.8245-0.9245), hard ensemble TN rate " +
                       fmt(er.tn_rate, 4) + " (>= 0.94)");
}

// 9 -------------------------------------------------------------------------
Verdict metrics_correctness() {
  Rng rng(9);
  std::size_t bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = rng.below(300);
    const double p_pos = rng.uniform();
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform() < p_pos;
      truth[i] = rng.uniform() < p_pos;
    }
    const auto m = eval::metrics(eval::confusion(pred, truth));
    const eval::ClassMetrics* per_class[2] = {&m.sailing, &m.fishing};
    double macro_p = 0, macro_r = 0, macro_f = 0;
    for (int c = 0; c < 2; ++c) {
      const auto k = oracle::count_samples(pred, truth, c);
      const double p = oracle::safe_div(k.tp, k.tp + k.fp);
      const double r = oracle::safe_div(k.tp, k.tp + k.fn);
      const double f = oracle::safe_div(2 * p * r, p + r);
      macro_p += p / 2;
      macro_r += r / 2;
      macro_f += f / 2;
      const auto* got = per_class[c];
      if (got->precision != p || got->recall != r || got->f1 != f || got->support != k.tp + k.fn) ++bad;
    }
    if (m.macro.precision != macro_p || m.macro.recall != macro_r || m.macro.f1 != macro_f) ++bad;
  }
  return check(bad == 0, "1000 vectors, " + std::to_string(bad) + " mismatches");
}

}  // namespace

int main(int argc, char** argv) {
  const bool full = argc > 1 && std::strcmp(argv[1], "--full-scale") == 0;
  struct Criterion {
    int id;
    const char* title;
    std::function<Verdict()> run;
  };
  std::vector<Criterion> list;
  if (full) {
    list = {{8, "full-scale reproduction", full_scale}};
  } else {
    list = {{1, "parameter accounting", parameter_accounting},
            {2, "gradient correctness", gradient_correctness},
            {3, "k-means oracle and DBI", unsupervised_oracle},
            {4, "rcog laws", rcog_laws},
            {5, "relabel fixpoint", relabel_fixpoint},
            {6, "batch/stream equivalence", batch_stream_equivalence},
            {7, "synthetic end-to-end", synthetic_end_to_end},
            {8, "full-scale reproduction", full_scale},
            {9, "metrics correctness", metrics_correctness}};
  }
  int failed = 0, skipped = 0;
  for (const auto& c : list) {
    Verdict v{Outcome::fail, ""};
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %d %s: %s\n", name(v.outcome), c.id, c.title, v.detail.c_str());
    std::fflush(stdout);
    failed += v.outcome == Outcome::fail;
    skipped += v.outcome == Outcome::skip;
  }
  if (failed) return 1;
  if (full && skipped) return 77;
  return 0;
}
