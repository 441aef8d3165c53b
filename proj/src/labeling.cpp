#include "fishdet/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "fishdet/csv.hpp"
#include "fishdet/errors.hpp"
#include "fishdet/kernels.hpp"
#include "fishdet/rng.hpp"

namespace fishdet::labeling {

std::string_view to_string(Label l) { return l == Label::fishing ? "fishing" : "sailing"; }

Label parse_label(std::string_view s) {
  if (s == "fishing" || s == "1") return Label::fishing;
  if (s == "sailing" || s == "0") return Label::sailing;
  throw std::invalid_argument("unknown label '" + std::string(s) + "'");
}

Scaler Scaler::fit(std::span<const Point2> raw) {
  if (raw.empty()) throw std::invalid_argument("cannot fit a scaler on zero rows");
  Scaler sc;
  for (int d = 0; d < 2; ++d) {
    double sum = 0.0;
    for (const auto& p : raw) sum += p[d];
    const double mean = sum / static_cast<double>(raw.size());
    double ss = 0.0;
    for (const auto& p : raw) ss += (p[d] - mean) * (p[d] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(raw.size()));
    sc.mean[d] = mean;
    sc.scale[d] = sd > 0.0 ? sd : 1.0;
  }
  return sc;
}

Point2 Scaler::apply(const Point2& raw) const {
  return {(raw[0] - mean[0]) / scale[0], (raw[1] - mean[1]) / scale[1]};
}

Point2 Scaler::invert(const Point2& z) const {
  return {z[0] * scale[0] + mean[0], z[1] * scale[1] + mean[1]};
}

std::vector<Point2> ClusterModel::raw_centroids() const {
  std::vector<Point2> out;
  out.reserve(centroids.size());
  for (const auto& c : centroids) out.push_back(scaler.invert(c));
  return out;
}

int ClusterModel::assign(const Point2& raw) const {
  const Point2 z = scaler.apply(raw);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(z, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

nlohmann::json ClusterModel::to_json() const {
  nlohmann::json cents = nlohmann::json::array();
  for (const auto& c : centroids) cents.push_back({c[0], c[1]});
  nlohmann::json raw = nlohmann::json::array();
  for (const auto& c : raw_centroids()) raw.push_back({c[0], c[1]});
  return {{"k", k},
          {"features", {"accel_ma", "rcog_ms"}},
          {"centroids_standardized", cents},
          {"centroids_raw", raw},
          {"scaler", {{"mean", {scaler.mean[0], scaler.mean[1]}},
                      {"scale", {scaler.scale[0], scaler.scale[1]}}}},
          {"dbi", dbi},
          {"sse", sse},
          {"iterations", iterations}};
}

ClusterModel ClusterModel::from_json(const nlohmann::json& j) {
  ClusterModel m;
  m.k = j.at("k").get<int>();
  for (const auto& c : j.at("centroids_standardized")) m.centroids.push_back({c[0], c[1]});
  const auto& sc = j.at("scaler");
  m.scaler.mean = {sc.at("mean")[0], sc.at("mean")[1]};
  m.scaler.scale = {sc.at("scale")[0], sc.at("scale")[1]};
  m.dbi = j.value("dbi", 0.0);
  m.sse = j.value("sse", 0.0);
  m.iterations = j.value("iterations", 0);
  return m;
}

double squared_distance(const Point2& a, const Point2& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

double sse(std::span<const Point2> points, std::span<const int> assignment,
           std::span<const Point2> centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    total += squared_distance(points[i], centroids[static_cast<std::size_t>(assignment[i])]);
  }
  return total;
}

namespace {

std::vector<Point2> cluster_means(std::span<const Point2> points, std::span<const int> assignment,
                                  const std::vector<Point2>& previous) {
  const std::size_t k = previous.size();
  std::vector<Point2> sums(k, Point2{0.0, 0.0});
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = static_cast<std::size_t>(assignment[i]);
    sums[c][0] += points[i][0];
    sums[c][1] += points[i][1];
    ++counts[c];
  }
  std::vector<Point2> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    out[c] = counts[c] ? Point2{sums[c][0] / static_cast<double>(counts[c]),
                                sums[c][1] / static_cast<double>(counts[c])}
                       : previous[c];
  }
  return out;
}

// Moves the point farthest from its centroid into each empty cluster. Donor
// clusters keep at least one member.
void repair_empty(std::span<const Point2> points, std::vector<int>& assignment,
                  std::vector<Point2>& centroids) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> counts(k, 0);
  for (int a : assignment) ++counts[static_cast<std::size_t>(a)];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = SIZE_MAX;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto own = static_cast<std::size_t>(assignment[i]);
      if (counts[own] < 2) continue;
      const double d = squared_distance(points[i], centroids[own]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == SIZE_MAX) break;
    --counts[static_cast<std::size_t>(assignment[far])];
    assignment[far] = static_cast<int>(c);
    counts[c] = 1;
    centroids[c] = points[far];
  }
}

}  // namespace

LloydResult lloyd(std::span<const Point2> points, std::vector<Point2> initial, int max_iter) {
  if (initial.empty()) throw std::invalid_argument("lloyd: no initial centroids");
  if (points.size() < initial.size()) throw std::invalid_argument("lloyd: fewer points than clusters");
  LloydResult r;
  r.centroids = std::move(initial);
  r.assignment.assign(points.size(), -1);
  kernels::assign_nearest(points, r.centroids, r.assignment);
  for (int it = 0; it < max_iter; ++it) {
    repair_empty(points, r.assignment, r.centroids);
    r.centroids = cluster_means(points, r.assignment, r.centroids);
    r.sse_history.push_back(sse(points, r.assignment, r.centroids));
    ++r.iterations;
    if (kernels::assign_nearest(points, r.centroids, r.assignment) == 0) break;
    if (it + 1 == max_iter) {
      // Out of budget: keep centroids consistent with the final assignment.
      repair_empty(points, r.assignment, r.centroids);
      r.centroids = cluster_means(points, r.assignment, r.centroids);
      r.sse_history.push_back(sse(points, r.assignment, r.centroids));
    }
  }
  r.sse = r.sse_history.back();
  return r;
}

int refine_single_moves(std::span<const Point2> points, LloydResult& r, int max_passes) {
  const std::size_t k = r.centroids.size();
  std::vector<std::size_t> counts(k, 0);
  std::vector<Point2> sums(k, Point2{0.0, 0.0});
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = static_cast<std::size_t>(r.assignment[i]);
    ++counts[c];
    sums[c][0] += points[i][0];
    sums[c][1] += points[i][1];
  }
  auto mean = [&](std::size_t c) {
    const double n = static_cast<double>(counts[c]);
    return Point2{sums[c][0] / n, sums[c][1] / n};
  };
  int moves = 0;
  for (int pass = 0; pass < max_passes; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto a = static_cast<std::size_t>(r.assignment[i]);
      if (counts[a] <= 1) continue;
      // Exact SSE change of moving point i from a to b is
      //   n_b/(n_b+1) |x-c_b|^2 - n_a/(n_a-1) |x-c_a|^2.
      const double na = static_cast<double>(counts[a]);
      const double stay = squared_distance(points[i], mean(a)) * na / (na - 1.0);
      std::size_t best = a;
      double best_cost = stay * (1.0 - 1e-12);
      for (std::size_t b = 0; b < k; ++b) {
        if (b == a) continue;
        const double nb = static_cast<double>(counts[b]);
        const double cost = squared_distance(points[i], mean(b)) * nb / (nb + 1.0);
        if (cost < best_cost) {
          best = b;
          best_cost = cost;
        }
      }
      if (best == a) continue;
      --counts[a];
      sums[a][0] -= points[i][0];
      sums[a][1] -= points[i][1];
      ++counts[best];
      sums[best][0] += points[i][0];
      sums[best][1] += points[i][1];
      r.assignment[i] = static_cast<int>(best);
      moved = true;
      ++moves;
    }
    if (!moved) break;
  }
  if (moves > 0) {
    r.centroids = cluster_means(points, r.assignment, r.centroids);
    r.sse_history.push_back(sse(points, r.assignment, r.centroids));
    r.sse = r.sse_history.back();
  }
  return moves;
}

LloydResult kmeans(std::span<const Point2> points, std::vector<Point2> initial, int max_iter) {
  auto r = lloyd(points, std::move(initial), max_iter);
  // A refined partition can expose new nearest-centroid moves; alternate
  // until both steps are stable.
  for (int round = 0; round < max_iter; ++round) {
    if (refine_single_moves(points, r, max_iter) == 0) break;
    auto again = lloyd(points, r.centroids, max_iter);
    r.assignment = std::move(again.assignment);
    r.centroids = std::move(again.centroids);
    r.sse_history.insert(r.sse_history.end(), again.sse_history.begin(), again.sse_history.end());
    r.iterations += again.iterations;
    r.sse = r.sse_history.back();
  }
  return r;
}

std::size_t count_distinct(std::span<const Point2> points) {
  std::vector<Point2> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

std::vector<Point2> kmeanspp_init(std::span<const Point2> points, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  Rng rng(seed);
  std::vector<Point2> cents;
  cents.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], cents[0]);
  while (cents.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (double d : d2) total += d;
    if (!(total > 0.0)) throw std::invalid_argument("k-means++: fewer distinct points than k");
    const double target = rng.uniform() * total;
    double run = 0.0;
    std::size_t pick = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      run += d2[i];
      if (d2[i] > 0.0 && run > target) {
        pick = i;
        break;
      }
    }
    if (pick == points.size()) {
      // Round-off at the tail: last point with positive weight.
      for (std::size_t i = points.size(); i-- > 0;) {
        if (d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    cents.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], cents.back()));
    }
  }
  return cents;
}

KMeansFit fit_kmeans(std::span<const Point2> raw, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (raw.size() < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("k-means: " + std::to_string(raw.size()) + " rows < k=" +
                                std::to_string(k));
  }
  for (const auto& p : raw) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) {
      throw std::invalid_argument("k-means: non-finite feature value");
    }
  }
  KMeansFit fit;
  fit.model.scaler = Scaler::fit(raw);
  std::vector<Point2> z(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) z[i] = fit.model.scaler.apply(raw[i]);
  if (count_distinct(z) < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("k-means: fewer than k=" + std::to_string(k) +
                                " distinct points (zero variance?)");
  }
  auto res = kmeans(z, kmeanspp_init(z, k, seed));
  fit.model.k = k;
  fit.model.centroids = std::move(res.centroids);
  fit.model.sse = res.sse;
  fit.model.iterations = res.iterations;
  fit.assignment = std::move(res.assignment);
  fit.sse_history = std::move(res.sse_history);
  fit.model.dbi = k >= 2 ? davies_bouldin(z, fit.assignment, fit.model.centroids) : 0.0;
  return fit;
}

double davies_bouldin(std::span<const Point2> points, std::span<const int> assignment,
                      std::span<const Point2> centroids) {
  const std::size_t k = centroids.size();
  if (k < 2) throw std::invalid_argument("Davies-Bouldin needs at least 2 clusters");
  std::vector<double> spread(k, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = static_cast<std::size_t>(assignment[i]);
    spread[c] += std::sqrt(squared_distance(points[i], centroids[c]));
    ++counts[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument("Davies-Bouldin: cluster " + std::to_string(c) + " is empty");
    }
    spread[c] /= static_cast<double>(counts[c]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double m = std::sqrt(squared_distance(centroids[i], centroids[j]));
      if (m == 0.0) throw std::invalid_argument("Davies-Bouldin: coincident centroids");
      worst = std::max(worst, (spread[i] + spread[j]) / m);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

std::vector<DbiRow> dbi_scan(std::span<const Point2> raw, int k_lo, int k_hi, std::uint64_t seed) {
  if (k_lo < 2 || k_hi < k_lo) throw std::invalid_argument("dbi_scan: need 2 <= k_lo <= k_hi");
  std::vector<DbiRow> rows(static_cast<std::size_t>(k_hi - k_lo + 1));
  const auto n = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& row = rows[i];
    row.k = k_lo + static_cast<int>(i);
    try {
      if (static_cast<std::size_t>(row.k) >= raw.size()) {
        throw std::invalid_argument("k=" + std::to_string(row.k) + " must be < rows=" +
                                    std::to_string(raw.size()));
      }
      row.dbi = fit_kmeans(raw, row.k, seed).model.dbi;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  }
  return rows;
}

ClusterLabels clusters_to_labels(std::span<const int> assignment, int k) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (int a : assignment) {
    if (a < 0 || a >= k) throw std::invalid_argument("cluster id out of range");
    ++counts[static_cast<std::size_t>(a)];
  }
  ClusterLabels out;
  out.sailing_cluster =
      static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  out.labels.reserve(assignment.size());
  for (int a : assignment) {
    out.labels.push_back(a == out.sailing_cluster ? Label::sailing : Label::fishing);
  }
  return out;
}

std::vector<Label> relabel_runs(std::span<const Label> labels, std::size_t min_run) {
  if (min_run < 1) throw std::invalid_argument("min_run must be >= 1");
  std::vector<Label> out(labels.begin(), labels.end());
  if (out.empty()) return out;

  struct Run {
    std::size_t start;
    std::size_t len;
    Label label;
    std::size_t prev;
    std::size_t next;
  };
  constexpr std::size_t none = SIZE_MAX;
  std::vector<Run> runs;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (runs.empty() || runs.back().label != out[i]) {
      runs.push_back({i, 1, out[i], runs.empty() ? none : runs.size() - 1, none});
      if (runs.size() > 1) runs[runs.size() - 2].next = runs.size() - 1;
    } else {
      ++runs.back().len;
    }
  }
  std::size_t alive = runs.size();
  // Short runs ordered by (length, start).
  std::set<std::pair<std::size_t, std::size_t>> queue;
  auto key = [&](std::size_t r) { return std::make_pair(runs[r].len, runs[r].start); };
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].len < min_run) queue.insert(key(r));
  }
  std::vector<std::size_t> run_at(out.size(), none);
  for (std::size_t r = 0; r < runs.size(); ++r) run_at[runs[r].start] = r;

  while (alive > 1 && !queue.empty()) {
    const auto [len, start] = *queue.begin();
    queue.erase(queue.begin());
    const std::size_t r = run_at[start];
    Run& run = runs[r];
    run.label = run.label == Label::sailing ? Label::fishing : Label::sailing;
    // Merge with neighbours, which now share the flipped label.
    std::size_t head = r;
    if (run.prev != none) {
      Run& p = runs[run.prev];
      if (p.len < min_run) queue.erase(key(run.prev));
      p.len += run.len;
      p.next = run.next;
      if (run.next != none) runs[run.next].prev = run.prev;
      run_at[run.start] = none;
      head = run.prev;
      --alive;
    }
    Run& h = runs[head];
    if (h.next != none) {
      Run& n = runs[h.next];
      if (n.len < min_run) queue.erase(key(h.next));
      run_at[n.start] = none;
      h.len += n.len;
      const std::size_t after = n.next;
      h.next = after;
      if (after != none) runs[after].prev = head;
      --alive;
    }
    if (h.len < min_run) queue.insert(key(head));
  }
  for (const auto& run : runs) {
    if (run_at[run.start] == none) continue;
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(run.start),
              out.begin() + static_cast<std::ptrdiff_t>(run.start + run.len), run.label);
  }
  return out;
}

int default_k(features::WindowKind kind) {
  return kind == features::WindowKind::distance ? 12 : 8;
}

std::size_t LabeledDataset::row_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.rows.size();
  return n;
}

LabeledDataset label_dataset(const std::vector<Trajectory>& trajectories, const LabelConfig& cfg) {
  auto feats = features::featurize_all(trajectories, cfg.window);
  std::vector<Point2> raw;
  for (const auto& rows : feats.rows)
    for (const auto& r : rows) raw.push_back({r.accel_ma, r.rcog_ms});

  auto fit = fit_kmeans(raw, cfg.k, cfg.seed);
  auto mapped = clusters_to_labels(fit.assignment, cfg.k);

  LabeledDataset out;
  out.model = fit.model;
  out.short_trajectories = feats.short_trajectories;
  std::size_t offset = 0;
  for (std::size_t t = 0; t < trajectories.size(); ++t) {
    const auto& rows = feats.rows[t];
    if (rows.empty()) continue;
    LabeledTrajectory lt;
    lt.mmsi = trajectories[t].mmsi;
    std::vector<Label> seq(mapped.labels.begin() + static_cast<std::ptrdiff_t>(offset),
                           mapped.labels.begin() + static_cast<std::ptrdiff_t>(offset + rows.size()));
    seq = relabel_runs(seq, cfg.min_run);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      lt.rows.push_back({trajectories[t].messages[i + 1], rows[i], fit.assignment[offset + i], seq[i]});
    }
    offset += rows.size();
    out.trajectories.push_back(std::move(lt));
  }
  return out;
}

void write_labeled_csv(const std::string& path, const std::vector<LabeledTrajectory>& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "mmsi,timestamp,lat,lon,sog,cog,accel,rcog,accel_ma,rcog_ms,cluster_id,label\n";
  for (const auto& t : data) {
    for (const auto& r : t.rows) {
      const auto& m = r.message;
      const auto& f = r.feature;
      out << m.mmsi << ',' << format_timestamp(m.timestamp) << ',' << csv::format_fixed(m.lat, 4)
          << ',' << csv::format_fixed(m.lon, 4) << ',' << csv::format_double(m.sog) << ','
          << csv::format_double(m.cog) << ',' << csv::format_double(f.accel) << ','
          << csv::format_double(f.rcog) << ',' << csv::format_double(f.accel_ma) << ','
          << csv::format_double(f.rcog_ms) << ',' << r.cluster_id << ',' << to_string(r.label)
          << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<LabeledTrajectory> read_labeled_csv(const std::string& path) {
  csv::Reader reader(path);
  const std::array<std::size_t, 12> col = {
      reader.require("mmsi"),  reader.require("timestamp"), reader.require("lat"),
      reader.require("lon"),   reader.require("sog"),       reader.require("cog"),
      reader.require("accel"), reader.require("rcog"),      reader.require("accel_ma"),
      reader.require("rcog_ms"), reader.require("cluster_id"), reader.require("label")};
  std::vector<LabeledTrajectory> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    auto bad = [&]() {
      return IoError(path + ":" + std::to_string(reader.line_number()) + ": malformed labeled row");
    };
    if (f.size() < 12) throw bad();
    LabeledRow row;
    auto mmsi = csv::parse_int(f[col[0]]);
    auto ts = try_parse_timestamp(f[col[1]]);
    std::array<std::optional<double>, 8> nums;
    for (std::size_t i = 0; i < 8; ++i) nums[i] = csv::parse_double(f[col[i + 2]]);
    auto cluster = csv::parse_int(f[col[10]]);
    if (!mmsi || !ts || !cluster || std::any_of(nums.begin(), nums.end(), [](auto& o) { return !o; })) {
      throw bad();
    }
    row.message = {*mmsi, *ts, *nums[0], *nums[1], *nums[2], *nums[3]};
    row.feature = {*mmsi, *ts, *nums[4], *nums[5], *nums[6], *nums[7]};
    row.cluster_id = static_cast<int>(*cluster);
    try {
      row.label = parse_label(f[col[11]]);
    } catch (const std::invalid_argument&) {
      throw bad();
    }
    if (out.empty() || out.back().mmsi != *mmsi) {
      out.push_back({*mmsi, {}});
    }
    auto& rows = out.back().rows;
    if (!rows.empty() && rows.back().message.timestamp >= *ts) {
      throw IoError(path + ": rows must be sorted by (mmsi, timestamp)");
    }
    rows.push_back(row);
  }
  return out;
}

}  // namespace fishdet::labeling
