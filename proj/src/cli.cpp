#include "fishdet/cli.hpp"

#include <omp.h>

#include <atomic>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fishdet/bench.hpp"
#include "fishdet/checkpoint.hpp"
#include "fishdet/csv.hpp"
#include "fishdet/ensemble.hpp"
#include "fishdet/errors.hpp"
#include "fishdet/eval.hpp"
#include "fishdet/features.hpp"
#include "fishdet/ingest.hpp"
#include "fishdet/labeling.hpp"
#include "fishdet/stream.hpp"
#include "fishdet/synthetic.hpp"
#include "fishdet/train.hpp"

namespace fishdet::cli {

namespace {

using nlohmann::json;

struct Globals {
  int threads = 0;
  bool quiet = false;
};

void log(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << '\n';
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

bool is_plain_number(const std::string& v) {
  if (v.empty()) return false;
  char* end = nullptr;
  std::strtod(v.c_str(), &end);
  return end == v.c_str() + v.size();
}

std::string toml_scalar(const std::string& v) {
  if (v == "true" || v == "false" || is_plain_number(v)) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void append_options(std::ostringstream& os, const CLI::App& app) {
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
    const std::string& key = opt->get_lnames().front();
    if (key == "help" || key == "config") continue;
    std::vector<std::string> values;
    if (opt->get_type_size() == 0) {
      values.push_back(opt->count() > 0 ? "true" : "false");
    } else if (opt->count() > 0) {
      values = opt->results();
    } else {
      std::string d = opt->get_default_str();
      if (d.size() >= 2 && d.front() == '[' && d.back() == ']') {
        std::stringstream ss(d.substr(1, d.size() - 2));
        for (std::string item; std::getline(ss, item, ',');) values.push_back(item);
      } else if (!d.empty()) {
        values.push_back(d);
      }
    }
    if (values.empty() || (values.size() == 1 && values[0].empty())) continue;
    os << key << " = ";
    if (opt->get_items_expected_max() > 1) {
      os << '[';
      for (std::size_t i = 0; i < values.size(); ++i) os << (i ? ", " : "") << toml_scalar(values[i]);
      os << ']';
    } else {
      os << toml_scalar(values.back());
    }
    os << '\n';
  }
}

// Effective configuration of this invocation as TOML: global options, then
// the invoked subcommand's table. Feeding it back through --config reproduces
// the run.
std::string run_config(const CLI::App& app) {
  std::ostringstream os;
  append_options(os, app);
  for (const CLI::App* sub : app.get_subcommands()) {
    os << '\n' << '[' << sub->get_name() << "]\n";
    append_options(os, *sub);
  }
  return os.str();
}

// CSV artifacts carry their effective configuration in a sidecar file.
void write_meta(const std::string& path, const std::string& command, const CLI::App& root,
                json extra = json::object()) {
  json meta = {{"tool", "fishdet"},
               {"command", command},
               {"config_toml", run_config(root)}};
  for (auto& [k, v] : extra.items()) meta[k] = v;
  write_json(path + ".meta.json", meta);
}

void require_readable(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
}

// Window flags shared by features, dbi-scan and label.
struct WindowOptions {
  std::string kind = "message";
  double size = 0.0;  // 0 = default for the kind

  features::WindowSpec spec() const {
    auto s = features::WindowSpec::defaults(features::parse_window_kind(kind));
    if (size > 0.0) s.size = size;
    s.validate();
    return s;
  }
  void add(CLI::App* cmd) {
    cmd->add_option("--window-kind", kind, "message | time | distance (or O/T/D)")
        ->capture_default_str();
    cmd->add_option("--window-size", size,
                    "messages, minutes or meters; 0 selects 10 / 10 / 5000")
        ->capture_default_str();
  }
};

struct SplitOptions {
  train::SplitSpec spec;
  void add(CLI::App* cmd) {
    cmd->add_option("--n-test", spec.n_test, "test vessels")->capture_default_str();
    cmd->add_option("--n-val", spec.n_val, "validation vessels")->capture_default_str();
    cmd->add_option("--split-seed", spec.seed, "vessel split seed")->capture_default_str();
  }
};

struct TrainOptions {
  train::TrainConfig cfg;
  double dropout = 0.25;
  void add(CLI::App* cmd) {
    cmd->add_option("--lr", cfg.lr, "initial learning rate")->capture_default_str();
    cmd->add_option("--batch", cfg.batch, "minibatch size")->capture_default_str();
    cmd->add_option("--max-epochs", cfg.max_epochs)->capture_default_str();
    cmd->add_option("--early-stop-patience", cfg.early_stop_patience)->capture_default_str();
    cmd->add_option("--scheduler-patience", cfg.scheduler_patience)->capture_default_str();
    cmd->add_option("--scheduler-factor", cfg.scheduler_factor)->capture_default_str();
    cmd->add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
    cmd->add_option("--clip-norm", cfg.clip_norm)->capture_default_str();
    cmd->add_option("--center-weight", cfg.loss.center, "Center Loss weight")->capture_default_str();
    cmd->add_option("--bce-weight", cfg.loss.bce, "BCE weight")->capture_default_str();
    cmd->add_option("--stride", cfg.stride, "window stride")->capture_default_str();
    cmd->add_option("--dropout", dropout)->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "initialization and shuffling seed")->capture_default_str();
  }
};

std::vector<labeling::LabeledTrajectory> load_labeled(const std::string& path) {
  require_readable(path);
  return labeling::read_labeled_csv(path);
}

// Windows of one split of a labeled file.
train::WindowSet split_windows(const std::vector<labeling::LabeledTrajectory>& data,
                               const train::SplitSpec& spec, const std::string& which,
                               std::size_t w, std::size_t stride) {
  if (which == "all") return train::make_windows(data, w, stride);
  std::vector<std::int64_t> ids;
  for (const auto& t : data) ids.push_back(t.mmsi);
  const auto s = train::split(ids, spec);
  const auto& chosen = which == "test" ? s.test : which == "val" ? s.val : s.train;
  return train::make_windows(train::subset(data, chosen), w, stride);
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"fishdet: AIS fishing-activity detection with recurrent networks"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML configuration file; flags override it");
  Globals g;
  app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)")
      ->capture_default_str();
  app.add_flag("--quiet", g.quiet, "suppress progress on stderr");

  std::function<int()> action;

  // ingest ------------------------------------------------------------------
  auto* ingest_cmd = app.add_subcommand("ingest", "parse, clean and assemble AIS CSV files");
  std::vector<std::string> ingest_inputs;
  std::string ingest_output, ingest_report;
  ingest::CsvSchema schema;
  ingest_cmd->add_option("--input", ingest_inputs, "AIS CSV files")->required();
  ingest_cmd->add_option("--output", ingest_output, "trajectory store CSV")->required();
  ingest_cmd->add_option("--report", ingest_report, "ingest report JSON");
  ingest_cmd->add_option("--col-mmsi", schema.mmsi)->capture_default_str();
  ingest_cmd->add_option("--col-time", schema.timestamp)->capture_default_str();
  ingest_cmd->add_option("--col-lat", schema.lat)->capture_default_str();
  ingest_cmd->add_option("--col-lon", schema.lon)->capture_default_str();
  ingest_cmd->add_option("--col-sog", schema.sog)->capture_default_str();
  ingest_cmd->add_option("--col-cog", schema.cog)->capture_default_str();
  ingest_cmd->callback([&] {
    action = [&] {
      for (const auto& p : ingest_inputs) require_readable(p);
      auto res = ingest::ingest_files(ingest_inputs, schema);
      ingest::write_store(ingest_output, res.trajectories);
      write_meta(ingest_output, "ingest", app, {{"report", res.report.to_json()}});
      if (!ingest_report.empty()) write_json(ingest_report, res.report.to_json());
      std::cout << res.report.to_json().dump() << '\n';
      return kOk;
    };
  });

  // features ----------------------------------------------------------------
  auto* feat_cmd = app.add_subcommand("features", "compute accel/rcog window features");
  std::string feat_input, feat_output;
  WindowOptions feat_window;
  feat_cmd->add_option("--input", feat_input, "trajectory store CSV")->required();
  feat_cmd->add_option("--output", feat_output, "feature CSV")->required();
  feat_window.add(feat_cmd);
  feat_cmd->callback([&] {
    action = [&] {
      require_readable(feat_input);
      const auto spec = feat_window.spec();
      const auto store = ingest::read_store(feat_input);
      const auto set = features::featurize_all(store, spec);
      features::write_features_csv(feat_output, set.rows);
      write_meta(feat_output, "features", app,
                 {{"short_trajectories", set.short_trajectories}});
      return kOk;
    };
  });

  // dbi-scan ----------------------------------------------------------------
  auto* dbi_cmd = app.add_subcommand("dbi-scan", "Davies-Bouldin index over a range of k");
  std::string dbi_input, dbi_output;
  WindowOptions dbi_window;
  int k_min = 2, k_max = 20;
  std::uint64_t dbi_seed = 42;
  dbi_cmd->add_option("--input", dbi_input, "trajectory store CSV")->required();
  dbi_cmd->add_option("--output", dbi_output, "CSV with k,dbi,error");
  dbi_cmd->add_option("--k-min", k_min)->capture_default_str();
  dbi_cmd->add_option("--k-max", k_max)->capture_default_str();
  dbi_cmd->add_option("--seed", dbi_seed)->capture_default_str();
  dbi_window.add(dbi_cmd);
  dbi_cmd->callback([&] {
    action = [&] {
      require_readable(dbi_input);
      const auto set = features::featurize_all(ingest::read_store(dbi_input), dbi_window.spec());
      std::vector<labeling::Point2> pts;
      for (const auto& rows : set.rows)
        for (const auto& r : rows) pts.push_back({r.accel_ma, r.rcog_ms});
      const auto rows = labeling::dbi_scan(pts, k_min, k_max, dbi_seed);
      std::ostringstream os;
      os << "k,dbi,error\n";
      for (const auto& r : rows) {
        os << r.k << ',' << (r.dbi ? csv::format_double(*r.dbi) : "") << ',' << r.error << '\n';
      }
      if (dbi_output.empty()) {
        std::cout << os.str();
      } else {
        std::ofstream out(dbi_output);
        if (!out) throw IoError("cannot write " + dbi_output);
        out << os.str();
        write_meta(dbi_output, "dbi-scan", app);
      }
      return kOk;
    };
  });

  // label -------------------------------------------------------------------
  auto* label_cmd = app.add_subcommand("label", "unsupervised sailing/fishing labels");
  std::string label_input, label_output, label_model;
  WindowOptions label_window;
  int label_k = 0;
  std::uint64_t label_seed = 42;
  std::size_t min_run = labeling::kDefaultMinRun;
  label_cmd->add_option("--input", label_input, "trajectory store CSV")->required();
  label_cmd->add_option("--output", label_output, "labeled CSV")->required();
  label_cmd->add_option("--cluster-model", label_model, "k-means model JSON (default <output>.clusters.json)");
  label_cmd->add_option("--k", label_k, "clusters; 0 selects 8 (message/time) or 12 (distance)")
      ->capture_default_str();
  label_cmd->add_option("--seed", label_seed)->capture_default_str();
  label_cmd->add_option("--min-run", min_run, "shortest run kept by relabeling")
      ->capture_default_str();
  label_window.add(label_cmd);
  label_cmd->callback([&] {
    action = [&] {
      require_readable(label_input);
      labeling::LabelConfig cfg;
      cfg.window = label_window.spec();
      cfg.k = label_k > 0 ? label_k : labeling::default_k(cfg.window.kind);
      cfg.seed = label_seed;
      cfg.min_run = min_run;
      const auto ds = labeling::label_dataset(ingest::read_store(label_input), cfg);
      labeling::write_labeled_csv(label_output, ds.trajectories);
      json info = {{"k", cfg.k},
                   {"window_kind", features::to_string(cfg.window.kind)},
                   {"window_size", cfg.window.size},
                   {"cluster_model", ds.model.to_json()},
                   {"rows", ds.row_count()},
                   {"short_trajectories", ds.short_trajectories}};
      write_meta(label_output, "label", app, info);
      write_json(label_model.empty() ? label_output + ".clusters.json" : label_model,
                 ds.model.to_json());
      log(g, "labeled " + std::to_string(ds.row_count()) + " rows with k=" +
                 std::to_string(cfg.k) + ", DBI " + csv::format_double(ds.model.dbi));
      return kOk;
    };
  });

  // train -------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a recurrent classifier");
  std::string train_input, train_output, train_history, train_feature;
  std::string cell_name = "elman";
  int train_w = 10, train_s = 64;
  TrainOptions topts;
  SplitOptions train_split;
  train_cmd->add_option("--input,--features", train_input, "labeled CSV")->required();
  train_cmd->add_option("--output,--out", train_output, "checkpoint manifest path")->required();
  train_cmd->add_option("--history", train_history, "per-epoch JSON lines");
  train_cmd->add_option("--feature", train_feature, "tag stored in the checkpoint (O/T/D)");
  train_cmd->add_option("--cell", cell_name, "elman | gru | lstm")->capture_default_str();
  train_cmd->add_option("--w,--window", train_w, "window length")->capture_default_str();
  train_cmd->add_option("--s,--hidden", train_s, "hidden size")->capture_default_str();
  topts.add(train_cmd);
  train_split.add(train_cmd);
  train_cmd->callback([&] {
    action = [&] {
      model::ModelConfig mc;
      mc.cell = model::parse_cell(cell_name);
      mc.w = train_w;
      mc.s = train_s;
      mc.dropout_rate = topts.dropout;
      mc.seed = topts.cfg.seed;
      mc.validate();
      const auto data = train::prepare(load_labeled(train_input), train_split.spec,
                                       static_cast<std::size_t>(mc.w), topts.cfg.stride);
      log(g, "windows: train " + std::to_string(data.train.size()) + ", val " +
                 std::to_string(data.val.size()) + ", test " + std::to_string(data.test.size()));
      std::unique_ptr<std::ofstream> hist;
      if (!train_history.empty()) {
        hist = std::make_unique<std::ofstream>(train_history);
        if (!*hist) throw IoError("cannot write " + train_history);
      }
      auto on_epoch = [&](const train::EpochRecord& r) {
        log(g, "epoch " + std::to_string(r.epoch) + " loss " + csv::format_double(r.train_loss) +
                   " val_bce " + csv::format_double(r.val_bce) + " lr " +
                   csv::format_double(r.lr));
        if (hist) {
          *hist << r.to_json().dump() << '\n';
        }
      };
      auto finish = [&](Checkpoint& ck) {
        ck.metadata["feature"] = train_feature;
        ck.metadata["split"] = {{"n_test", train_split.spec.n_test},
                                {"n_val", train_split.spec.n_val},
                                {"seed", train_split.spec.seed}};
        ck.metadata["run_config"] = run_config(app);
        ck.save(train_output);
      };
      try {
        auto res = train::fit(topts.cfg, mc, data.train, data.val, data.stats, on_epoch);
        finish(res.checkpoint);
        log(g, "best epoch " + std::to_string(res.best_epoch));
      } catch (const train::TrainingAborted& e) {
        Checkpoint last = e.last_good();
        finish(last);
        throw;
      }
      return kOk;
    };
  });

  // evaluate ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on held-out vessels");
  std::string eval_ckpt, eval_input, eval_output, eval_csv, eval_which = "test";
  std::size_t eval_stride = 1;
  SplitOptions eval_split;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--input", eval_input, "labeled CSV")->required();
  eval_cmd->add_option("--output", eval_output, "report JSON (stdout when empty)");
  eval_cmd->add_option("--csv", eval_csv, "one-row CSV report");
  eval_cmd->add_option("--split", eval_which, "test | val | train | all")
      ->check(CLI::IsMember({"test", "val", "train", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--stride", eval_stride)->capture_default_str();
  eval_split.add(eval_cmd);
  eval_cmd->callback([&] {
    action = [&] {
      require_readable(eval_ckpt);
      const auto ck = Checkpoint::load(eval_ckpt);
      const auto windows = split_windows(load_labeled(eval_input), eval_split.spec, eval_which,
                                         static_cast<std::size_t>(ck.config.w), eval_stride);
      const auto feature = ck.metadata.value("feature", std::string());
      const auto report = eval::evaluate(ck, windows, feature);
      json j = report.to_json();
      j["split"] = eval_which;
      j["run_config"] = run_config(app);
      if (eval_output.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        write_json(eval_output, j);
      }
      if (!eval_csv.empty()) {
        eval::GridRow row;
        row.feature = feature;
        row.config = ck.config;
        row.params = report.params;
        row.report = report;
        std::ofstream out(eval_csv);
        if (!out) throw IoError("cannot write " + eval_csv);
        out << eval::grid_csv_header() << '\n' << eval::grid_csv_row(row) << '\n';
        write_meta(eval_csv, "evaluate", app);
      }
      return kOk;
    };
  });

  // grid --------------------------------------------------------------------
  auto* grid_cmd = app.add_subcommand("grid", "train and evaluate the benchmark grid");
  std::string grid_o, grid_t, grid_d, grid_store, grid_output, grid_json_path;
  std::uint64_t grid_label_seed = 42;
  std::vector<std::string> grid_cells{"elman"};
  eval::GridSpec gspec;
  TrainOptions grid_topts;
  SplitOptions grid_split;
  grid_cmd->add_option("--message", grid_o, "labeled CSV for message windows (O)");
  grid_cmd->add_option("--time", grid_t, "labeled CSV for time windows (T)");
  grid_cmd->add_option("--distance", grid_d, "labeled CSV for distance windows (D)");
  grid_cmd->add_option("--input", grid_store,
                       "trajectory store labeled with default message/time/distance windows "
                       "for any labeled CSV not given");
  grid_cmd->add_option("--label-seed", grid_label_seed, "k-means seed for --input")
      ->capture_default_str();
  grid_cmd->add_option("--cells", grid_cells, "elman gru lstm")->capture_default_str();
  grid_cmd->add_option("--w-values", gspec.w_values)->capture_default_str();
  grid_cmd->add_option("--s-values", gspec.s_values)->capture_default_str();
  grid_cmd->add_option("--parallel", gspec.parallel, "rows trained concurrently")
      ->capture_default_str();
  grid_cmd->add_option("--output", grid_output, "grid CSV (stdout when empty)");
  grid_cmd->add_option("--json", grid_json_path, "grid JSON");
  grid_topts.add(grid_cmd);
  grid_split.add(grid_cmd);
  grid_cmd->callback([&] {
    action = [&] {
      std::vector<eval::GridDataset> datasets;
      std::vector<Trajectory> store;
      if (!grid_store.empty()) {
        require_readable(grid_store);
        store = ingest::read_store(grid_store);
      }
      const std::pair<const char*, std::string*> sources[] = {
          {"O", &grid_o}, {"T", &grid_t}, {"D", &grid_d}};
      const features::WindowKind kinds[] = {features::WindowKind::message,
                                            features::WindowKind::time,
                                            features::WindowKind::distance};
      for (std::size_t i = 0; i < 3; ++i) {
        const auto& [tag, path] = sources[i];
        if (!path->empty()) {
          datasets.push_back({tag, load_labeled(*path)});
        } else if (!grid_store.empty()) {
          labeling::LabelConfig lc;
          lc.window = features::WindowSpec::defaults(kinds[i]);
          lc.k = labeling::default_k(kinds[i]);
          lc.seed = grid_label_seed;
          datasets.push_back({tag, labeling::label_dataset(store, lc).trajectories});
        }
      }
      if (datasets.empty()) throw CLI::ValidationError("grid needs --input, --message, --time or --distance");
      gspec.cells.clear();
      for (const auto& c : grid_cells) gspec.cells.push_back(model::parse_cell(c));
      gspec.train = grid_topts.cfg;
      gspec.dropout_rate = grid_topts.dropout;
      gspec.split = grid_split.spec;
      const auto rows = eval::run_grid(datasets, gspec);
      std::ostringstream os;
      os << eval::grid_csv_header() << '\n';
      for (const auto& r : rows) os << eval::grid_csv_row(r) << '\n';
      if (grid_output.empty()) {
        std::cout << os.str();
      } else {
        std::ofstream out(grid_output);
        if (!out) throw IoError("cannot write " + grid_output);
        out << os.str();
        write_meta(grid_output, "grid", app);
      }
      if (!grid_json_path.empty()) {
        write_json(grid_json_path, {{"rows", eval::grid_json(rows)},
                                    {"run_config", run_config(app)}});
      }
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.error.empty() ? 0 : 1;
      log(g, std::to_string(rows.size()) + " rows, " + std::to_string(failed) + " failed");
      return kOk;
    };
  });

  // ensemble ----------------------------------------------------------------
  auto* ens_cmd = app.add_subcommand("ensemble", "evaluate a three-model voting ensemble");
  std::vector<std::string> ens_members;
  std::string ens_mode = "hard", ens_input, ens_output, ens_which = "test";
  bool ens_post_sigmoid = false;
  std::size_t ens_stride = 1;
  SplitOptions ens_split;
  ens_cmd->add_option("--members", ens_members, "three checkpoints (O T D)")
      ->required()
      ->expected(3);
  ens_cmd->add_option("--mode", ens_mode, "soft (majority vote) | hard (mean logit)")
      ->check(CLI::IsMember({"soft", "hard"}))
      ->capture_default_str();
  ens_cmd->add_flag("--post-sigmoid", ens_post_sigmoid,
                    "hard mode averages member probabilities instead of logits");
  ens_cmd->add_option("--input", ens_input, "labeled CSV providing ground truth")->required();
  ens_cmd->add_option("--output", ens_output, "report JSON (stdout when empty)");
  ens_cmd->add_option("--split", ens_which)
      ->check(CLI::IsMember({"test", "val", "train", "all"}))
      ->capture_default_str();
  ens_cmd->add_option("--stride", ens_stride)->capture_default_str();
  ens_split.add(ens_cmd);
  ens_cmd->callback([&] {
    action = [&] {
      std::array<Checkpoint, 3> members;
      for (std::size_t i = 0; i < 3; ++i) {
        require_readable(ens_members[i]);
        members[i] = Checkpoint::load(ens_members[i]);
      }
      const ensemble::Ensemble ens(std::move(members), ensemble::parse_mode(ens_mode),
                                   ens_post_sigmoid);
      const auto windows = split_windows(load_labeled(ens_input), ens_split.spec, ens_which,
                                         static_cast<std::size_t>(ens.window()), ens_stride);
      json j = ensemble::evaluate_ensemble(ens, windows).to_json();
      j["post_sigmoid"] = ens_post_sigmoid;
      j["run_config"] = run_config(app);
      if (ens_output.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        write_json(ens_output, j);
      }
      return kOk;
    };
  });

  // stream ------------------------------------------------------------------
  auto* stream_cmd = app.add_subcommand("stream", "online per-message detection (NDJSON)");
  std::string stream_ckpt, stream_listen, stream_replay, stream_speedup = "max";
  std::vector<std::string> stream_ensemble;
  std::string stream_mode = "hard";
  std::size_t stream_workers = 0, stream_connections = 0;
  auto* ck_opt = stream_cmd->add_option("--checkpoint", stream_ckpt, "single model");
  auto* ens_opt =
      stream_cmd->add_option("--ensemble", stream_ensemble, "three checkpoints")->expected(3);
  ck_opt->excludes(ens_opt);
  stream_cmd->add_option("--mode", stream_mode, "ensemble mode")
      ->check(CLI::IsMember({"soft", "hard"}))
      ->capture_default_str();
  stream_cmd->add_option("--listen", stream_listen, "host:port TCP listener instead of stdin");
  stream_cmd->add_option("--max-connections", stream_connections, "0 = serve forever")
      ->capture_default_str();
  stream_cmd->add_option("--replay", stream_replay, "trajectory store to replay instead of stdin");
  stream_cmd->add_option("--speedup", stream_speedup, "'max' or a time-compression factor")
      ->capture_default_str();
  stream_cmd->add_option("--workers", stream_workers, "shard threads (0 = inline)")
      ->capture_default_str();
  stream_cmd->callback([&] {
    action = [&]() -> int {
      std::unique_ptr<stream::Detector> detector;
      if (!stream_ckpt.empty()) {
        require_readable(stream_ckpt);
        detector = std::make_unique<stream::Detector>(
            std::make_shared<const Checkpoint>(Checkpoint::load(stream_ckpt)));
      } else if (stream_ensemble.size() == 3) {
        std::array<Checkpoint, 3> members;
        for (std::size_t i = 0; i < 3; ++i) {
          require_readable(stream_ensemble[i]);
          members[i] = Checkpoint::load(stream_ensemble[i]);
        }
        detector = std::make_unique<stream::Detector>(std::make_shared<const ensemble::Ensemble>(
            std::move(members), ensemble::parse_mode(stream_mode)));
      } else {
        throw CLI::ValidationError("stream needs --checkpoint or --ensemble");
      }
      const auto speedup = stream::parse_speedup(stream_speedup);
      stream::Engine engine(*detector, stream_workers, [](const stream::Detection& d) {
        std::cout << d.to_json().dump() << '\n';
      });
      if (!stream_replay.empty()) {
        require_readable(stream_replay);
        stream::replay(ingest::read_store(stream_replay), speedup,
                       [&](const AisMessage& m) { engine.submit(m); });
      } else if (!stream_listen.empty()) {
        const auto [host, port] = stream::parse_endpoint(stream_listen);
        stream::TcpListener listener(host, port);
        log(g, "listening on " + host + ":" + std::to_string(listener.port()));
        listener.serve([&](std::string_view line) { engine.submit_line(line); },
                       stream_connections);
      } else {
        stream::pump(std::cin, engine);
      }
      engine.finish();
      std::cout.flush();
      log(g, engine.stats().to_json().dump());
      return kOk;
    };
  });

  // bench -------------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "time kernels and stream throughput");
  bench::Config bcfg;
  std::string bench_cell = "elman", bench_output;
  bench_cmd->add_option("--cell", bench_cell)->capture_default_str();
  bench_cmd->add_option("--w", bcfg.w)->capture_default_str();
  bench_cmd->add_option("--s", bcfg.s)->capture_default_str();
  bench_cmd->add_option("--windows", bcfg.windows)->capture_default_str();
  bench_cmd->add_option("--points", bcfg.points)->capture_default_str();
  bench_cmd->add_option("--vessels", bcfg.vessels)->capture_default_str();
  bench_cmd->add_option("--repeats", bcfg.repeats)->capture_default_str();
  bench_cmd->add_option("--output", bench_output, "JSON (stdout when empty)");
  bench_cmd->callback([&] {
    action = [&] {
      bcfg.cell = model::parse_cell(bench_cell);
      const auto j = bench::to_json(bcfg, bench::run(bcfg));
      if (bench_output.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        write_json(bench_output, j);
      }
      return kOk;
    };
  });

  // synth -------------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic trajectory store");
  synthetic::Spec sspec;
  std::string synth_output;
  synth_cmd->add_option("--output", synth_output, "trajectory store CSV")->required();
  synth_cmd->add_option("--vessels", sspec.vessels)->capture_default_str();
  synth_cmd->add_option("--segments", sspec.segments)->capture_default_str();
  synth_cmd->add_option("--seed", sspec.seed)->capture_default_str();
  synth_cmd->callback([&] {
    action = [&] {
      ingest::write_store(synth_output, synthetic::trajectories(synthetic::generate(sspec)));
      write_meta(synth_output, "synth", app);
      return kOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  if (g.threads > 0) omp_set_num_threads(g.threads);

  try {
    return action ? action() : kUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << '\n';
    return kNumericFault;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kDataError;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace fishdet::cli
