#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "fishdet/checkpoint.hpp"
#include "fishdet/errors.hpp"
#include "fishdet/labeling.hpp"
#include "fishdet/model.hpp"
#include "fishdet/windows.hpp"

namespace fishdet::train {

// ---------------------------------------------------------------------------
// Vessel splits

struct SplitSpec {
  std::size_t n_test = 50;
  std::size_t n_val = 15;
  std::uint64_t seed = 42;
};

struct Splits {
  std::vector<std::int64_t> train, val, test;  // MMSIs, each sorted
};

/// Seeded sampling without replacement over distinct vessel ids. Needs at
/// least n_test + n_val + 1 vessels.
Splits split(std::span<const std::int64_t> vessels, const SplitSpec& spec);

template <typename Traj>
std::vector<Traj> subset(const std::vector<Traj>& data, std::span<const std::int64_t> ids) {
  std::vector<Traj> out;
  for (const auto& t : data) {
    if (std::binary_search(ids.begin(), ids.end(), t.mmsi)) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objective

struct LossWeights {
  double center = 0.75;
  double bce = 0.15;
};

template <typename T>
struct LossTerms {
  nn::Var total;
  nn::Var bce;
  nn::Var center;
};

/// total = w.center * CL + w.bce * BCE with
/// CL = mean_b 0.5 * ||embedding_b - centers[y_b]||^2 and BCE from logits.
template <typename T>
LossTerms<T> loss(nn::Tape<T>& tape, nn::Var logits, nn::Var embedding, std::span<const T> y,
                  nn::Var centers, const LossWeights& w);

// ---------------------------------------------------------------------------
// Optimization

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
class AdamW {
 public:
  AdamW(std::vector<nn::Parameter<float>*> params, AdamWConfig cfg);

  void step();
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::uint64_t steps() const { return t_; }

 private:
  std::vector<nn::Parameter<float>*> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

double global_grad_norm(std::span<nn::Parameter<float>* const> params);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(std::span<nn::Parameter<float>* const> params, double max_norm);

/// Multiplies the learning rate by `factor` once the metric has failed to
/// improve for `patience` consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, int patience) : factor_(factor), patience_(patience) {}

  /// Returns the (possibly reduced) learning rate.
  double step(double metric, double lr);

 private:
  double factor_;
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records one epoch (1-based); returns true when it is a new best.
  bool update(int epoch, double metric);
  bool should_stop() const { return bad_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int bad_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  double lr = 1e-3;
  double clip_norm = 1.0;
  LossWeights loss;
  double weight_decay = 0.01;
  std::size_t batch = 128;
  double scheduler_factor = 0.5;
  int scheduler_patience = 5;
  int early_stop_patience = 10;
  int max_epochs = 200;
  std::size_t stride = 1;
  std::uint64_t seed = 42;

  nlohmann::json to_json() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_bce = 0.0;
  double val_bce = 0.0;
  double lr = 0.0;

  nlohmann::json to_json() const;
};

struct FitResult {
  Checkpoint checkpoint;  // best validation-BCE epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

/// Thrown when the loss turns non-finite. Carries the best checkpoint so far
/// (initial weights if no epoch completed).
class TrainingAborted : public NumericFault {
 public:
  TrainingAborted(const std::string& what, Checkpoint last_good)
      : NumericFault(what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const { return last_good_; }

 private:
  Checkpoint last_good_;
};

/// Mean BCE of the model on raw windows, inference mode.
double validation_bce(const Checkpoint& ck, const WindowSet& raw);

/// Trains on raw `train` windows (normalized with `stats`), selecting the
/// epoch with the lowest validation BCE. `on_epoch` sees each record as it
/// completes.
FitResult fit(const TrainConfig& cfg, const model::ModelConfig& mcfg, const WindowSet& train,
              const WindowSet& val, const NormStats& stats,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Splits, windows and normalization statistics for one labeled dataset.
struct PreparedData {
  Splits splits;
  WindowSet train, val, test;
  NormStats stats;
};

PreparedData prepare(const std::vector<labeling::LabeledTrajectory>& data, const SplitSpec& spec,
                     std::size_t w, std::size_t stride);

}  // namespace fishdet::train
