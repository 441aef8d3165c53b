#include "fishdet/eval.hpp"

#include <sstream>
#include <stdexcept>

#include "fishdet/csv.hpp"
#include "fishdet/kernels.hpp"

namespace fishdet::eval {

void ConfusionMatrix::add(bool predicted_fishing, bool actual_fishing) {
  if (predicted_fishing) {
    actual_fishing ? ++tp : ++fp;
  } else {
    actual_fishing ? ++fn : ++tn;
  }
}

nlohmann::json ConfusionMatrix::to_json() const {
  return {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn}};
}

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> actual) {
  if (predicted.size() != actual.size()) throw std::invalid_argument("confusion: length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i) cm.add(predicted[i] != 0, actual[i] != 0);
  return cm;
}

ClassMetrics positive_class_metrics(const ConfusionMatrix& cm) {
  ClassMetrics m;
  m.support = cm.tp + cm.fn;
  if (cm.tp + cm.fp > 0) {
    m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  } else {
    m.degenerate = true;
  }
  if (cm.tp + cm.fn > 0) {
    m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  } else {
    m.degenerate = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.degenerate = true;
  }
  return m;
}

Metrics metrics(const ConfusionMatrix& cm) {
  Metrics out;
  out.fishing = positive_class_metrics(cm);
  out.sailing = positive_class_metrics(cm.swapped());
  out.macro.precision = (out.fishing.precision + out.sailing.precision) / 2.0;
  out.macro.recall = (out.fishing.recall + out.sailing.recall) / 2.0;
  out.macro.f1 = (out.fishing.f1 + out.sailing.f1) / 2.0;
  out.macro.support = cm.total();
  out.macro.degenerate = out.fishing.degenerate || out.sailing.degenerate;
  return out;
}

namespace {
nlohmann::json class_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"support", m.support}, {"degenerate", m.degenerate}};
}
}  // namespace

nlohmann::json EvalReport::to_json() const {
  return {{"sailing", class_json(metrics.sailing)},
          {"fishing", class_json(metrics.fishing)},
          {"macro", class_json(metrics.macro)},
          {"confusion", cm.to_json()},
          {"params", params},
          {"config", config.to_json()},
          {"feature", feature}};
}

std::vector<float> predict_logits(const Checkpoint& ck, const train::WindowSet& raw) {
  if (raw.window() != static_cast<std::size_t>(ck.config.w)) {
    throw ConfigError("window length " + std::to_string(raw.window()) +
                      " does not match checkpoint w=" + std::to_string(ck.config.w));
  }
  return kernels::infer_batch(ck.config, ck.weights, ck.norm.normalized(raw.x));
}

EvalReport evaluate(const Checkpoint& ck, const train::WindowSet& test, const std::string& feature) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  if (test.y.size() != test.size()) throw std::invalid_argument("evaluate: test windows lack labels");
  const auto logits = predict_logits(ck, test);
  EvalReport r;
  for (std::size_t i = 0; i < logits.size(); ++i) r.cm.add(is_fishing(logits[i]), test.y[i] > 0.5f);
  r.metrics = metrics(r.cm);
  r.params = model::count_params(ck.config).total;
  r.config = ck.config;
  r.feature = feature;
  return r;
}

std::vector<GridRow> run_grid(const std::vector<GridDataset>& datasets, const GridSpec& spec) {
  struct Job {
    std::size_t dataset;
    model::ModelConfig config;
  };
  std::vector<Job> jobs;
  for (std::size_t d = 0; d < datasets.size(); ++d)
    for (auto cell : spec.cells)
      for (int w : spec.w_values)
        for (int s : spec.s_values) {
          model::ModelConfig mc;
          mc.cell = cell;
          mc.w = w;
          mc.s = s;
          mc.dropout_rate = spec.dropout_rate;
          mc.seed = spec.train.seed;
          jobs.push_back({d, mc});
        }

  std::vector<GridRow> rows(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, spec.parallel))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& job = jobs[i];
    auto& row = rows[i];
    row.feature = datasets[job.dataset].feature;
    row.config = job.config;
    try {
      row.params = model::count_params(job.config).total;
      auto data = train::prepare(datasets[job.dataset].data, spec.split,
                                 static_cast<std::size_t>(job.config.w), spec.train.stride);
      auto fitted = train::fit(spec.train, job.config, data.train, data.val, data.stats);
      row.best_epoch = fitted.best_epoch;
      row.report = evaluate(fitted.checkpoint, data.test, row.feature);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  }
  return rows;
}

std::string grid_csv_header() {
  return "feature,cell,w,s,sailing_precision,sailing_recall,sailing_f1,sailing_support,"
         "fishing_precision,fishing_recall,fishing_f1,fishing_support,macro_precision,"
         "macro_recall,macro_f1,support,params,best_epoch,error";
}

std::string grid_csv_row(const GridRow& row) {
  std::ostringstream os;
  os << row.feature << ',' << model::to_string(row.config.cell) << ',' << row.config.w << ','
     << row.config.s << ',';
  if (row.report) {
    const auto& m = row.report->metrics;
    for (const auto* c : {&m.sailing, &m.fishing}) {
      os << csv::format_fixed(c->precision, 6) << ',' << csv::format_fixed(c->recall, 6) << ','
         << csv::format_fixed(c->f1, 6) << ',' << c->support << ',';
    }
    os << csv::format_fixed(m.macro.precision, 6) << ',' << csv::format_fixed(m.macro.recall, 6)
       << ',' << csv::format_fixed(m.macro.f1, 6) << ',' << m.macro.support << ',';
  } else {
    os << ",,,,,,,,,,,,";
  }
  std::string err = row.error;
  for (auto& ch : err)
    if (ch == ',' || ch == '\n') ch = ';';
  os << row.params << ',' << row.best_epoch << ',' << err;
  return os.str();
}

nlohmann::json grid_json(const std::vector<GridRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"feature", r.feature},
                        {"config", r.config.to_json()},
                        {"params", r.params},
                        {"best_epoch", r.best_epoch}};
    if (r.report) j["report"] = r.report->to_json();
    if (!r.error.empty()) j["error"] = r.error;
    out.push_back(j);
  }
  return out;
}

}  // namespace fishdet::eval
