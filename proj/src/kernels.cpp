#include "fishdet/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace fishdet::kernels {

namespace {

inline std::size_t nearest(const labeling::Point2& p, std::span<const labeling::Point2> cents) {
  std::size_t best = 0;
  double best_d = labeling::squared_distance(p, cents[0]);
  for (std::size_t c = 1; c < cents.size(); ++c) {
    const double d = labeling::squared_distance(p, cents[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void check_assign_args(std::span<const labeling::Point2> points,
                       std::span<const labeling::Point2> centroids, std::span<int> assignment) {
  if (centroids.empty()) throw std::invalid_argument("assign_nearest: no centroids");
  if (assignment.size() != points.size()) {
    throw std::invalid_argument("assign_nearest: assignment size mismatch");
  }
}

// out[j] = float(sum_p in[p] * m[p, j]) + bias[j], matching Tape::matmul
// followed by Tape::add_row.
void affine(std::span<const float> in, const nn::Tensor<float>& m, const nn::Tensor<float>& bias,
            std::vector<float>& out, std::vector<double>& acc) {
  const std::size_t k = m.shape[0];
  const std::size_t n = m.shape[1];
  acc.assign(n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double x = in[p];
    const float* row = m.data.data() + p * n;
    for (std::size_t j = 0; j < n; ++j) acc[j] += x * static_cast<double>(row[j]);
  }
  out.resize(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<float>(acc[j]) + bias.data[j];
}

void check_window(const model::ModelConfig& cfg, std::size_t n) {
  if (n != static_cast<std::size_t>(cfg.w * cfg.v)) {
    throw std::invalid_argument("infer_window: expected " + std::to_string(cfg.w * cfg.v) +
                                " values, got " + std::to_string(n));
  }
}

}  // namespace

std::size_t assign_nearest(std::span<const labeling::Point2> points,
                           std::span<const labeling::Point2> centroids, std::span<int> assignment) {
  check_assign_args(points, centroids, assignment);
  const auto n = static_cast<std::ptrdiff_t>(points.size());
  std::size_t changed = 0;
#pragma omp parallel for schedule(static) reduction(+ : changed)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(nearest(points[i], centroids));
    if (assignment[i] != c) {
      assignment[i] = c;
      ++changed;
    }
  }
  return changed;
}

std::size_t assign_nearest_serial(std::span<const labeling::Point2> points,
                                  std::span<const labeling::Point2> centroids,
                                  std::span<int> assignment) {
  check_assign_args(points, centroids, assignment);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int c = static_cast<int>(nearest(points[i], centroids));
    if (assignment[i] != c) {
      assignment[i] = c;
      ++changed;
    }
  }
  return changed;
}

float infer_window(const model::ModelConfig& cfg, const model::ModelWeights<float>& weights,
                   std::span<const float> window, InferenceScratch& sc,
                   std::span<float> embedding) {
  check_window(cfg, window.size());
  const std::size_t s = static_cast<std::size_t>(cfg.s);
  const std::size_t v = static_cast<std::size_t>(cfg.v);
  const std::size_t w = static_cast<std::size_t>(cfg.w);

  // h/c hold the three layer states back to back.
  sc.h.assign(model::kLayers * s, 0.0f);
  sc.c.assign(model::kLayers * s, 0.0f);
  sc.e.assign(s, 0.0f);

  for (std::size_t t = 0; t < w; ++t) {
    std::span<const float> input = window.subspan(t * v, v);
    for (int l = 0; l < model::kLayers; ++l) {
      const auto& lw = weights.layers[l];
      float* h = sc.h.data() + l * s;
      float* c = sc.c.data() + l * s;
      affine(input, lw.w_ih.value, lw.b_ih.value, sc.gi, sc.acc);
      affine(std::span<const float>(h, s), lw.w_hh.value, lw.b_hh.value, sc.gh, sc.acc);
      switch (cfg.cell) {
        case model::Cell::elman:
          for (std::size_t j = 0; j < s; ++j) h[j] = std::tanh(sc.gi[j] + sc.gh[j]);
          break;
        case model::Cell::gru:
          for (std::size_t j = 0; j < s; ++j) {
            const float r = nn::sigmoid_scalar(sc.gi[j] + sc.gh[j]);
            const float z = nn::sigmoid_scalar(sc.gi[s + j] + sc.gh[s + j]);
            const float n = std::tanh(sc.gi[2 * s + j] + r * sc.gh[2 * s + j]);
            h[j] = n + z * (h[j] - n);
          }
          break;
        case model::Cell::lstm:
          for (std::size_t j = 0; j < s; ++j) {
            const float i = nn::sigmoid_scalar(sc.gi[j] + sc.gh[j]);
            const float f = nn::sigmoid_scalar(sc.gi[s + j] + sc.gh[s + j]);
            const float g = std::tanh(sc.gi[2 * s + j] + sc.gh[2 * s + j]);
            const float o = nn::sigmoid_scalar(sc.gi[3 * s + j] + sc.gh[3 * s + j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * std::tanh(c[j]);
          }
          break;
      }
      input = std::span<const float>(h, s);
    }
    const float* top = sc.h.data() + 2 * s;
    const float* wh = weights.w_h.value.data.data() + t * s;
    if (t == 0) {
      for (std::size_t j = 0; j < s; ++j) sc.e[j] = top[j] * wh[j];
    } else {
      for (std::size_t j = 0; j < s; ++j) sc.e[j] = sc.e[j] + top[j] * wh[j];
    }
  }

  double logit = 0.0;
  for (std::size_t j = 0; j < s; ++j) {
    const float e = sc.e[j] + weights.b_h.value.data[j];
    const float g = e * weights.w_v.value.data[j];
    const float a = g > 0.0f ? g : 0.0f;
    if (!embedding.empty()) embedding[j] = a;
    logit += static_cast<double>(a) * static_cast<double>(weights.w_w.value.data[j]);
  }
  return static_cast<float>(logit);
}

namespace {
void check_batch(const model::ModelConfig& cfg, const nn::Tensor<float>& x) {
  if (x.shape.size() != 3 || x.shape[1] != static_cast<std::size_t>(cfg.w) ||
      x.shape[2] != static_cast<std::size_t>(cfg.v)) {
    throw std::invalid_argument("infer_batch: input " + nn::shape_string(x.shape) +
                                " does not match the model window");
  }
}
}  // namespace

std::vector<float> infer_batch(const model::ModelConfig& cfg,
                               const model::ModelWeights<float>& weights,
                               const nn::Tensor<float>& x) {
  check_batch(cfg, x);
  const std::size_t stride = x.shape[1] * x.shape[2];
  const auto b = static_cast<std::ptrdiff_t>(x.shape[0]);
  std::vector<float> out(x.shape[0]);
#pragma omp parallel
  {
    InferenceScratch scratch;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < b; ++i) {
      out[i] = infer_window(cfg, weights,
                            std::span<const float>(x.data.data() + i * stride, stride), scratch);
    }
  }
  return out;
}

std::vector<float> infer_batch_serial(const model::ModelConfig& cfg,
                                      const model::ModelWeights<float>& weights,
                                      const nn::Tensor<float>& x) {
  check_batch(cfg, x);
  const std::size_t stride = x.shape[1] * x.shape[2];
  std::vector<float> out(x.shape[0]);
  InferenceScratch scratch;
  for (std::size_t i = 0; i < x.shape[0]; ++i) {
    out[i] = infer_window(cfg, weights,
                          std::span<const float>(x.data.data() + i * stride, stride), scratch);
  }
  return out;
}

std::vector<float> infer_batch_tape(const model::ModelConfig& cfg,
                                    model::ModelWeights<float>& weights,
                                    const nn::Tensor<float>& x) {
  nn::Tape<float> tape;
  Rng rng(0);
  auto out = model::forward(tape, cfg, weights, x, false, rng);
  return tape.value(out.logits).data;
}

}  // namespace fishdet::kernels
