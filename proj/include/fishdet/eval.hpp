#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fishdet/checkpoint.hpp"
#include "fishdet/features.hpp"
#include "fishdet/labeling.hpp"
#include "fishdet/model.hpp"
#include "fishdet/train.hpp"
#include "fishdet/windows.hpp"

namespace fishdet::eval {

/// Binary confusion counts with fishing as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  void add(bool predicted_fishing, bool actual_fishing);
  /// The same matrix with sailing as the positive class.
  ConfusionMatrix swapped() const { return {tn, fn, fp, tp}; }
  nlohmann::json to_json() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> actual);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool degenerate = false;  // some denominator was zero and reported as 0
};

struct Metrics {
  ClassMetrics sailing;
  ClassMetrics fishing;
  ClassMetrics macro;  // unweighted means; support = total
};

/// Precision, recall and F1 for the positive class of `cm`.
ClassMetrics positive_class_metrics(const ConfusionMatrix& cm);
Metrics metrics(const ConfusionMatrix& cm);

/// Sigmoid(logit) >= 0.5, i.e. logit >= 0, means fishing.
inline bool is_fishing(float logit) { return logit >= 0.0f; }

struct EvalReport {
  Metrics metrics;
  ConfusionMatrix cm;
  std::size_t params = 0;
  model::ModelConfig config;
  std::string feature;  // O / T / D or free text

  nlohmann::json to_json() const;
};

/// Scores raw windows with the checkpoint (normalized with its own stats).
/// Throws std::invalid_argument on an empty set.
EvalReport evaluate(const Checkpoint& ck, const train::WindowSet& test,
                    const std::string& feature = "");

/// Per-window logits for raw windows.
std::vector<float> predict_logits(const Checkpoint& ck, const train::WindowSet& raw);

/// Benchmark grid: every (feature, cell, w, s) combination.
struct GridSpec {
  std::vector<model::Cell> cells{model::Cell::elman};
  std::vector<int> w_values{5, 10, 15};
  std::vector<int> s_values{32, 64, 128};
  train::SplitSpec split;
  train::TrainConfig train;
  double dropout_rate = 0.25;
  int parallel = 1;
};

struct GridDataset {
  std::string feature;  // "O", "T" or "D"
  std::vector<labeling::LabeledTrajectory> data;
};

struct GridRow {
  std::string feature;
  model::ModelConfig config;
  std::size_t params = 0;
  std::optional<EvalReport> report;
  std::string error;
  int best_epoch = 0;
};

/// Trains and evaluates every (dataset, cell, w, s) combination with shared
/// seeds. Failures are kept per row.
std::vector<GridRow> run_grid(const std::vector<GridDataset>& datasets, const GridSpec& spec);

std::string grid_csv_header();
std::string grid_csv_row(const GridRow& row);
nlohmann::json grid_json(const std::vector<GridRow>& rows);

}  // namespace fishdet::eval
