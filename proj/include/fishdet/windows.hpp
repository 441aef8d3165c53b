#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fishdet/ingest.hpp"
#include "fishdet/labeling.hpp"
#include "fishdet/tensor.hpp"

namespace fishdet::train {

/// Model input attributes, in tensor order.
enum Attr : std::size_t { kLat = 0, kLon = 1, kCog = 2, kSog = 3 };
inline constexpr std::array<const char*, 4> kAttrNames = {"lat", "lon", "cog", "sog"};

/// Fixed-length windows cut from trajectories. `x` holds raw attribute values;
/// normalization happens at the model boundary.
struct WindowSet {
  nn::Tensor<float> x;            // [b, w, 4]
  std::vector<float> y;           // label of the last message (1 = fishing)
  std::vector<std::int64_t> mmsi;
  std::vector<Timestamp> end_time;

  std::size_t size() const { return mmsi.size(); }
  std::size_t window() const { return x.shape.size() == 3 ? x.shape[1] : 0; }
  std::size_t positives() const;
};

/// Sliding windows at offsets 0, stride, 2*stride, ... per trajectory; a tail
/// shorter than w is dropped and windows never span trajectories.
WindowSet make_windows(const std::vector<labeling::LabeledTrajectory>& data, std::size_t w,
                       std::size_t stride);
/// Same windowing over unlabeled trajectories (y stays empty).
WindowSet make_windows(const std::vector<Trajectory>& data, std::size_t w, std::size_t stride);

/// Row subset of a window set.
WindowSet select(const WindowSet& set, std::span<const std::size_t> rows);

struct AttrStats {
  double mean = 0.0;
  double std = 1.0;  // population
  double min = 0.0;
  double max = 1.0;
};

/// Per-attribute statistics of the training data. Applying them is z-score
/// followed by min-max over the training z-range.
struct NormStats {
  std::array<AttrStats, 4> attrs;

  /// Statistics over every message covered by at least one window.
  static NormStats fit(const std::vector<labeling::LabeledTrajectory>& data, std::size_t w,
                       std::size_t stride);
  static NormStats fit(std::span<const std::array<double, 4>> rows);

  void validate() const;  // throws ConfigError on std == 0 or min >= max
  double apply(std::size_t attr, double x) const;
  /// Normalizes a [b, w, 4] tensor (or a flat multiple of 4) in place.
  void apply(std::span<float> values) const;
  nn::Tensor<float> normalized(const nn::Tensor<float>& x) const;

  /// FNV-1a over the bit patterns of all 16 numbers.
  std::uint64_t hash() const;
  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json& j);
};

}  // namespace fishdet::train
