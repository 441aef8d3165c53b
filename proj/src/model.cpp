#include "fishdet/model.hpp"

#include <cmath>
#include <stdexcept>

namespace fishdet::model {

std::string_view to_string(Cell c) {
  switch (c) {
    case Cell::elman: return "elman";
    case Cell::gru: return "gru";
    case Cell::lstm: return "lstm";
  }
  return "?";
}

Cell parse_cell(std::string_view s) {
  if (s == "elman" || s == "rnn") return Cell::elman;
  if (s == "gru") return Cell::gru;
  if (s == "lstm") return Cell::lstm;
  throw std::invalid_argument("unknown cell '" + std::string(s) + "'");
}

int gate_count(Cell c) {
  switch (c) {
    case Cell::elman: return 1;
    case Cell::gru: return 3;
    case Cell::lstm: return 4;
  }
  return 1;
}

void ModelConfig::validate() const {
  if (w < 2) throw std::invalid_argument("window length w must be >= 2");
  if (s < 1) throw std::invalid_argument("hidden size s must be >= 1");
  if (v != kInputs) throw std::invalid_argument("input width v must be 4");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"cell", to_string(cell)}, {"layers", kLayers}, {"w", w}, {"v", v},
          {"s", s}, {"dropout_rate", dropout_rate}, {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.cell = parse_cell(j.at("cell").get<std::string>());
  c.w = j.at("w").get<int>();
  c.v = j.value("v", kInputs);
  c.s = j.at("s").get<int>();
  c.dropout_rate = j.value("dropout_rate", 0.25);
  c.seed = j.value("seed", std::uint64_t{42});
  c.validate();
  return c;
}

ParamCount count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t s = static_cast<std::size_t>(cfg.s);
  const std::size_t g = static_cast<std::size_t>(gate_count(cfg.cell));
  ParamCount out;
  for (int l = 0; l < kLayers; ++l) {
    const std::size_t in = l == 0 ? static_cast<std::size_t>(cfg.v) : s;
    out.recurrent += g * (in * s + s * s + 2 * s);
  }
  out.decoder = static_cast<std::size_t>(cfg.w) * s + 3 * s;
  out.aux = 8;
  out.total = out.recurrent + out.decoder + out.aux;
  return out;
}

template <typename T>
std::vector<nn::Parameter<T>*> ModelWeights<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  for (auto& l : layers) {
    out.push_back(&l.w_ih);
    out.push_back(&l.w_hh);
    out.push_back(&l.b_ih);
    out.push_back(&l.b_hh);
  }
  for (auto* p : {&w_h, &b_h, &w_v, &w_w, &centers}) out.push_back(p);
  return out;
}

template <typename T>
std::vector<const nn::Parameter<T>*> ModelWeights<T>::parameters() const {
  auto mut = const_cast<ModelWeights<T>*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t ModelWeights<T>::network_size() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.numel();
  return n - centers.value.numel();
}

template <typename T>
void ModelWeights<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
ModelWeights<T> zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t s = static_cast<std::size_t>(cfg.s);
  const std::size_t gs = s * static_cast<std::size_t>(gate_count(cfg.cell));
  ModelWeights<T> w;
  for (int l = 0; l < kLayers; ++l) {
    const std::size_t in = l == 0 ? static_cast<std::size_t>(cfg.v) : s;
    const std::string pre = "rnn.l" + std::to_string(l + 1) + ".";
    w.layers[l].w_ih = {pre + "w_ih", nn::Tensor<T>({in, gs})};
    w.layers[l].w_hh = {pre + "w_hh", nn::Tensor<T>({s, gs})};
    w.layers[l].b_ih = {pre + "b_ih", nn::Tensor<T>({gs})};
    w.layers[l].b_hh = {pre + "b_hh", nn::Tensor<T>({gs})};
  }
  w.w_h = {"decoder.w_h", nn::Tensor<T>({static_cast<std::size_t>(cfg.w), s})};
  w.b_h = {"decoder.b_h", nn::Tensor<T>({s})};
  w.w_v = {"decoder.w_v", nn::Tensor<T>({s})};
  w.w_w = {"decoder.w_w", nn::Tensor<T>({s})};
  w.centers = {"loss.centers", nn::Tensor<T>({2, s})};
  return w;
}

template <typename T>
ModelWeights<T> init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  auto w = zero_weights<T>(cfg);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.s));
  for (auto* p : w.parameters()) {
    if (p == &w.centers) continue;
    for (auto& x : p->value.data) {
      // Open interval; resample draws that round onto an endpoint.
      do {
        x = static_cast<T>(rng.uniform(-bound, bound));
      } while (!(std::abs(static_cast<double>(x)) < bound));
    }
  }
  return w;
}

namespace {

template <typename T>
struct CellState {
  nn::Var h;
  nn::Var c;  // LSTM only
};

template <typename T>
CellState<T> cell_step(nn::Tape<T>& tape, Cell cell, int s, const std::array<nn::Var, 4>& p, nn::Var input, const CellState<T>& prev) {
  const std::size_t S = static_cast<std::size_t>(s);
  nn::Var gi = tape.add_row(tape.matmul(input, p[0]), p[2]);
  nn::Var gh = tape.add_row(tape.matmul(prev.h, p[1]), p[3]);
  switch (cell) {
    case Cell::elman:
      return {tape.tanh(tape.add(gi, gh)), {}};
    case Cell::gru: {
      nn::Var r = tape.sigmoid(tape.add(tape.slice_cols(gi, 0, S), tape.slice_cols(gh, 0, S)));
      nn::Var z = tape.sigmoid(tape.add(tape.slice_cols(gi, S, S), tape.slice_cols(gh, S, S)));
      nn::Var n = tape.tanh(
          tape.add(tape.slice_cols(gi, 2 * S, S), tape.mul(r, tape.slice_cols(gh, 2 * S, S))));
      // h' = (1 - z) * n + z * h = n + z * (h - n)
      nn::Var h = tape.add(n, tape.mul(z, tape.sub(prev.h, n)));
      return {h, {}};
    }
    case Cell::lstm: {
      nn::Var gates = tape.add(gi, gh);
      nn::Var i = tape.sigmoid(tape.slice_cols(gates, 0, S));
      nn::Var f = tape.sigmoid(tape.slice_cols(gates, S, S));
      nn::Var g = tape.tanh(tape.slice_cols(gates, 2 * S, S));
      nn::Var o = tape.sigmoid(tape.slice_cols(gates, 3 * S, S));
      nn::Var c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
      nn::Var h = tape.mul(o, tape.tanh(c));
      return {h, c};
    }
  }
  return prev;
}

}  // namespace

template <typename T>
ForwardOutput<T> forward(nn::Tape<T>& tape, const ModelConfig& cfg, ModelWeights<T>& weights,
                         const nn::Tensor<T>& x, bool training, Rng& rng) {
  cfg.validate();
  if (x.shape.size() != 3 || x.shape[1] != static_cast<std::size_t>(cfg.w) ||
      x.shape[2] != static_cast<std::size_t>(cfg.v) || x.shape[0] == 0) {
    throw std::invalid_argument("forward: input " + nn::shape_string(x.shape) +
                                " does not match [b," + std::to_string(cfg.w) + "," +
                                std::to_string(cfg.v) + "]");
  }
  const std::size_t b = x.shape[0];
  const std::size_t w = x.shape[1];
  const std::size_t v = x.shape[2];
  const std::size_t s = static_cast<std::size_t>(cfg.s);

  std::array<std::array<nn::Var, 4>, kLayers> p;
  for (int l = 0; l < kLayers; ++l) {
    auto& lw = weights.layers[l];
    p[l] = {tape.param(lw.w_ih), tape.param(lw.w_hh), tape.param(lw.b_ih), tape.param(lw.b_hh)};
  }

  const nn::Var zeros = tape.constant(nn::Tensor<T>({b, s}));
  std::array<CellState<T>, kLayers> state;
  for (auto& st : state) st = {zeros, zeros};

  std::vector<nn::Var> top(w);
  for (std::size_t t = 0; t < w; ++t) {
    nn::Tensor<T> xt({b, v});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t a = 0; a < v; ++a) xt.data[i * v + a] = x.data[(i * w + t) * v + a];
    nn::Var in = tape.dropout(tape.constant(std::move(xt)), cfg.dropout_rate, training, rng);
    state[0] = cell_step(tape, cfg.cell, cfg.s, p[0], in, state[0]);
    nn::Var in2 = tape.dropout(state[0].h, cfg.dropout_rate, training, rng);
    state[1] = cell_step(tape, cfg.cell, cfg.s, p[1], in2, state[1]);
    state[2] = cell_step(tape, cfg.cell, cfg.s, p[2], state[1].h, state[2]);
    top[t] = state[2].h;
  }

  // Decoder: E[:,j] = sum_t W_h[t,j] * H_t[:,j] + b_h[j]; A = ReLU(W_v * E);
  // logit = A . W_w
  const nn::Var w_h = tape.param(weights.w_h);
  nn::Var e = tape.mul_row(top[0], tape.row(w_h, 0));
  for (std::size_t t = 1; t < w; ++t) e = tape.add(e, tape.mul_row(top[t], tape.row(w_h, t)));
  e = tape.add_row(e, tape.param(weights.b_h));
  const nn::Var a = tape.relu(tape.mul_row(e, tape.param(weights.w_v)));
  const nn::Var logits = tape.dot_row(a, tape.param(weights.w_w));
  return {logits, a};
}

template struct ModelWeights<float>;
template struct ModelWeights<double>;
template ModelWeights<float> init_weights<float>(const ModelConfig&, std::uint64_t);
template ModelWeights<double> init_weights<double>(const ModelConfig&, std::uint64_t);
template ModelWeights<float> zero_weights<float>(const ModelConfig&);
template ModelWeights<double> zero_weights<double>(const ModelConfig&);
template ForwardOutput<float> forward<float>(nn::Tape<float>&, const ModelConfig&,
                                             ModelWeights<float>&, const nn::Tensor<float>&, bool,
                                             Rng&);
template ForwardOutput<double> forward<double>(nn::Tape<double>&, const ModelConfig&,
                                               ModelWeights<double>&, const nn::Tensor<double>&,
                                               bool, Rng&);

}  // namespace fishdet::model
