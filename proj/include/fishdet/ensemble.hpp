#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "fishdet/checkpoint.hpp"
#include "fishdet/eval.hpp"
#include "fishdet/kernels.hpp"
#include "fishdet/windows.hpp"

namespace fishdet::ensemble {

// "soft" is a majority of thresholded member votes; "hard" thresholds
// sigmoid(mean member logit).
enum class Mode { soft, hard };

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);  // throws std::invalid_argument

struct Prediction {
  bool fishing = false;
  double probability = 0.0;
  std::array<double, 3> members{};  // sigmoid of each member logit
};

class Ensemble {
 public:
  /// Throws ConfigError unless all three members share w and v.
  Ensemble(std::array<Checkpoint, 3> members, Mode mode, bool average_probabilities = false);

  Mode mode() const { return mode_; }
  int window() const { return members_[0].config.w; }
  const std::array<Checkpoint, 3>& members() const { return members_; }
  std::size_t param_count() const;

  /// Combination rule on precomputed member logits.
  Prediction combine(std::span<const float, 3> logits) const;

  /// Logit of one member for one raw window of w * 4 values.
  float member_logit(std::size_t m, std::span<const float> raw_window,
                     kernels::InferenceScratch& scratch) const;

  /// Each member normalizes the raw window with its own statistics.
  Prediction predict(std::span<const float> raw_window) const;
  std::vector<Prediction> predict(const train::WindowSet& raw) const;

 private:
  std::array<Checkpoint, 3> members_;
  Mode mode_;
  bool average_probabilities_;
};

/// Confusion counts plus rates normalized per actual class.
struct EnsembleReport {
  eval::ConfusionMatrix cm;
  eval::Metrics metrics;
  double tn_rate = 0.0, fp_rate = 0.0;  // over actual sailing
  double tp_rate = 0.0, fn_rate = 0.0;  // over actual fishing
  std::size_t params = 0;
  Mode mode = Mode::hard;

  nlohmann::json to_json() const;
};

EnsembleReport evaluate_ensemble(const Ensemble& e, const train::WindowSet& test);

}  // namespace fishdet::ensemble
