#pragma once

// Data-parallel hot loops. Each OpenMP kernel has a serial twin with the same
// arithmetic; tests compare them and fishdet_bench times them.

#include <span>
#include <vector>

#include "fishdet/labeling.hpp"
#include "fishdet/model.hpp"

namespace fishdet::kernels {

/// Nearest-centroid assignment (lowest index on ties). Writes `assignment`
/// and returns how many entries changed.
std::size_t assign_nearest(std::span<const labeling::Point2> points,
                           std::span<const labeling::Point2> centroids, std::span<int> assignment);
std::size_t assign_nearest_serial(std::span<const labeling::Point2> points,
                                  std::span<const labeling::Point2> centroids,
                                  std::span<int> assignment);

/// Reusable buffers for single-window inference.
struct InferenceScratch {
  std::vector<float> h, c, h_next, c_next, gi, gh, e, a;
  std::vector<double> acc;
};

/// Tape-free, dropout-free forward pass over one normalized window of
/// `w * v` values (time-major). Reproduces the tape arithmetic step for step,
/// so results match forward(..., training=false) bit for bit. When
/// `embedding` is non-empty it receives the s decoder features.
float infer_window(const model::ModelConfig& cfg, const model::ModelWeights<float>& weights,
                   std::span<const float> window, InferenceScratch& scratch,
                   std::span<float> embedding = {});

/// Logits for x = [b, w, v]; windows are independent, so the result does not
/// depend on batch composition or thread count.
std::vector<float> infer_batch(const model::ModelConfig& cfg,
                               const model::ModelWeights<float>& weights,
                               const nn::Tensor<float>& x);
std::vector<float> infer_batch_serial(const model::ModelConfig& cfg,
                                      const model::ModelWeights<float>& weights,
                                      const nn::Tensor<float>& x);

/// Reference path: the autodiff tape with training=false.
std::vector<float> infer_batch_tape(const model::ModelConfig& cfg,
                                    model::ModelWeights<float>& weights,
                                    const nn::Tensor<float>& x);

}  // namespace fishdet::kernels
