#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fishdet/features.hpp"
#include "fishdet/ingest.hpp"

namespace fishdet::labeling {

/// A point in the (accel_ma, rcog_ms) feature plane.
using Point2 = std::array<double, 2>;

enum class Label : std::uint8_t { sailing = 0, fishing = 1 };

std::string_view to_string(Label l);
Label parse_label(std::string_view s);

/// Per-feature z-score. A zero-variance feature keeps scale 1 (centering only).
struct Scaler {
  Point2 mean{0.0, 0.0};
  Point2 scale{1.0, 1.0};

  static Scaler fit(std::span<const Point2> raw);
  Point2 apply(const Point2& raw) const;
  Point2 invert(const Point2& z) const;
};

struct ClusterModel {
  int k = 0;
  std::vector<Point2> centroids;  // standardized units
  Scaler scaler;
  double dbi = 0.0;
  double sse = 0.0;  // standardized units
  int iterations = 0;

  std::vector<Point2> raw_centroids() const;
  /// Nearest centroid for a raw feature point.
  int assign(const Point2& raw) const;

  nlohmann::json to_json() const;
  static ClusterModel from_json(const nlohmann::json& j);
};

double squared_distance(const Point2& a, const Point2& b);

/// Sum of squared distances of each point to its assigned centroid.
double sse(std::span<const Point2> points, std::span<const int> assignment,
           std::span<const Point2> centroids);

struct LloydResult {
  std::vector<Point2> centroids;
  std::vector<int> assignment;
  std::vector<double> sse_history;  // one entry per centroid update
  double sse = 0.0;
  int iterations = 0;
};

/// Lloyd iterations from the given initial centroids until the assignment
/// stops changing or `max_iter` updates. An empty cluster takes the point
/// farthest from its current centroid.
LloydResult lloyd(std::span<const Point2> points, std::vector<Point2> initial, int max_iter = 300);

/// Single-point refinement: moves any point whose transfer to another cluster
/// lowers the exact SSE (accounting for both centroid shifts). Returns the
/// number of moves; a refined result is also a Lloyd fixpoint.
int refine_single_moves(std::span<const Point2> points, LloydResult& r, int max_passes = 300);

/// Lloyd followed by single-point refinement, repeated until neither changes
/// the partition. This is the k-means used by fit_kmeans.
LloydResult kmeans(std::span<const Point2> points, std::vector<Point2> initial, int max_iter = 300);

/// k-means++ seeding. Requires at least k distinct points.
std::vector<Point2> kmeanspp_init(std::span<const Point2> points, int k, std::uint64_t seed);

std::size_t count_distinct(std::span<const Point2> points);

struct KMeansFit {
  ClusterModel model;
  std::vector<int> assignment;
  std::vector<double> sse_history;
};

/// Standardizes `raw`, seeds with k-means++, runs Lloyd. Throws
/// std::invalid_argument when rows < k or fewer than k distinct points.
KMeansFit fit_kmeans(std::span<const Point2> raw, int k, std::uint64_t seed);

/// Davies-Bouldin index (Euclidean, in the space of `points`).
double davies_bouldin(std::span<const Point2> points, std::span<const int> assignment,
                      std::span<const Point2> centroids);

struct DbiRow {
  int k = 0;
  std::optional<double> dbi;
  std::string error;
};

/// One fit per k in [k_lo, k_hi], sharing `seed`. Fit failures are recorded in
/// the row and the scan continues.
std::vector<DbiRow> dbi_scan(std::span<const Point2> raw, int k_lo, int k_hi, std::uint64_t seed);

struct ClusterLabels {
  int sailing_cluster = 0;
  std::vector<Label> labels;
};

/// Most populous cluster -> sailing (lowest id on ties), all others -> fishing.
ClusterLabels clusters_to_labels(std::span<const int> assignment, int k);

/// Flips maximal runs shorter than `min_run`, shortest first (leftmost on
/// ties), until every run reaches `min_run` or a single run is left.
std::vector<Label> relabel_runs(std::span<const Label> labels, std::size_t min_run);

int default_k(features::WindowKind kind);  // 8 for message/time, 12 for distance
inline constexpr std::size_t kDefaultMinRun = 5;

struct LabeledRow {
  AisMessage message;
  features::FeatureRow feature;
  int cluster_id = 0;
  Label label = Label::sailing;
};

struct LabeledTrajectory {
  std::int64_t mmsi = 0;
  std::vector<LabeledRow> rows;
};

struct LabelConfig {
  features::WindowSpec window;
  int k = 8;
  std::uint64_t seed = 42;
  std::size_t min_run = kDefaultMinRun;
};

struct LabeledDataset {
  std::vector<LabeledTrajectory> trajectories;
  ClusterModel model;
  std::size_t short_trajectories = 0;

  std::size_t row_count() const;
};

/// featurize -> standardize -> k-means -> majority rule -> per-trajectory run
/// relabeling.
LabeledDataset label_dataset(const std::vector<Trajectory>& trajectories, const LabelConfig& cfg);

void write_labeled_csv(const std::string& path, const std::vector<LabeledTrajectory>& data);
std::vector<LabeledTrajectory> read_labeled_csv(const std::string& path);

}  // namespace fishdet::labeling
