#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fishdet/tensor.hpp"

namespace fishdet::model {

enum class Cell { elman, gru, lstm };

std::string_view to_string(Cell c);
Cell parse_cell(std::string_view s);  // throws std::invalid_argument

/// Gate blocks per recurrent weight matrix: 1 (Elman), 3 (GRU), 4 (LSTM).
int gate_count(Cell c);

inline constexpr int kLayers = 3;
inline constexpr int kInputs = 4;  // lat, lon, cog, sog

struct ModelConfig {
  Cell cell = Cell::elman;
  int w = 10;  // window length in messages
  int v = kInputs;
  int s = 64;  // hidden size
  double dropout_rate = 0.25;
  std::uint64_t seed = 42;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Parameter accounting. `total` = recurrent + decoder + aux, where aux is
/// a constant 8 on top of the tensors.
struct ParamCount {
  std::size_t recurrent = 0;
  std::size_t decoder = 0;
  std::size_t aux = 0;
  std::size_t total = 0;
};

ParamCount count_params(const ModelConfig& cfg);

template <typename T>
struct LayerWeights {
  nn::Parameter<T> w_ih;  // [in, g*s]
  nn::Parameter<T> w_hh;  // [s, g*s]
  nn::Parameter<T> b_ih;  // [g*s]
  nn::Parameter<T> b_hh;  // [g*s]
};

/// Full learnable state: three recurrent layers, the decoder and the two
/// Center-Loss class centers (s-dimensional, one per class).
template <typename T>
struct ModelWeights {
  std::array<LayerWeights<T>, kLayers> layers;
  nn::Parameter<T> w_h;      // [w, s] temporal contraction
  nn::Parameter<T> b_h;      // [s]
  nn::Parameter<T> w_v;      // [s]
  nn::Parameter<T> w_w;      // [s]
  nn::Parameter<T> centers;  // [2, s]

  /// Stable order used for checkpoints and optimizer state.
  std::vector<nn::Parameter<T>*> parameters();
  std::vector<const nn::Parameter<T>*> parameters() const;

  /// Learnable scalars excluding the loss centers.
  std::size_t network_size() const;

  void zero_grad();

  template <typename U>
  ModelWeights<U> cast() const;
};

/// Uniform(-1/sqrt(s), 1/sqrt(s)) for every weight and bias; centers zero.
template <typename T>
ModelWeights<T> init_weights(const ModelConfig& cfg, std::uint64_t seed);

/// Zero-filled weights with the right shapes and names.
template <typename T>
ModelWeights<T> zero_weights(const ModelConfig& cfg);

template <typename T>
struct ForwardOutput {
  nn::Var logits;     // [b]
  nn::Var embedding;  // [b, s], post-ReLU decoder features
};

/// Records the model on `tape`. x is [b, w, v], already normalized. Dropout
/// is applied to the layer-1 input and to the layer-1 output feeding layer 2,
/// only when `training`.
template <typename T>
ForwardOutput<T> forward(nn::Tape<T>& tape, const ModelConfig& cfg, ModelWeights<T>& weights,
                         const nn::Tensor<T>& x, bool training, Rng& rng);

extern template struct ModelWeights<float>;
extern template struct ModelWeights<double>;

template <typename T>
template <typename U>
ModelWeights<U> ModelWeights<T>::cast() const {
  ModelWeights<U> out;
  auto conv = [](const nn::Parameter<T>& p) { return nn::Parameter<U>(p.name, p.value.template cast<U>()); };
  for (int l = 0; l < kLayers; ++l) {
    out.layers[l].w_ih = conv(layers[l].w_ih);
    out.layers[l].w_hh = conv(layers[l].w_hh);
    out.layers[l].b_ih = conv(layers[l].b_ih);
    out.layers[l].b_hh = conv(layers[l].b_hh);
  }
  out.w_h = conv(w_h);
  out.b_h = conv(b_h);
  out.w_v = conv(w_v);
  out.w_w = conv(w_w);
  out.centers = conv(centers);
  return out;
}

}  // namespace fishdet::model
