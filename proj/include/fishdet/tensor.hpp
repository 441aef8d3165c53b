#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fishdet/rng.hpp"

namespace fishdet::nn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& s);

/// Logistic function without overflow for large |x|.
template <typename T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}
std::size_t shape_numel(const Shape& s);

/// Dense row-major tensor.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values);

  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

/// A learnable tensor with its gradient buffer.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = SIZE_MAX;
};

/// Reverse-mode autodiff tape. Every op evaluates eagerly, checks its output
/// for NaN/Inf (NumericFault), and records what backward() needs. Reductions
/// and matmul accumulate in double.
template <typename T>
class Tape {
 public:
  Var constant(Tensor<T> value);
  Var param(Parameter<T>& p);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() w.r.t. a recorded value (empty if none flowed).
  const std::vector<T>& grad(Var v) const { return nodes_.at(v.id).grad; }

  Var matmul(Var a, Var b);         // [m,k] x [k,n]
  Var add(Var a, Var b);            // same shape
  Var sub(Var a, Var b);            // same shape
  Var mul(Var a, Var b);            // elementwise, same shape
  Var add_row(Var x, Var bias);     // [m,n] + [n]
  Var mul_row(Var x, Var v);        // [m,n] * [n], scales columns
  Var dot_row(Var x, Var v);        // [m,n] . [n] -> [m]
  Var row(Var x, std::size_t r);    // [m,n] -> [n]
  Var slice_cols(Var x, std::size_t begin, std::size_t count);
  Var gather_rows(Var table, std::span<const int> rows);  // [r,n] -> [len,n]
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var relu(Var x);
  Var scale(Var x, T c);
  Var sum(Var x);   // -> [1]
  Var mean(Var x);  // -> [1]
  /// Inverted dropout; identity when !training or rate == 0.
  Var dropout(Var x, double rate, bool training, Rng& rng);
  /// Mean binary cross-entropy from logits, numerically stable.
  Var bce_with_logits(Var logits, std::span<const T> targets);

  /// Accumulates d(loss)/d(p) into every Parameter reached from `loss`.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  enum class Op : std::uint8_t {
    constant, param, matmul, add, sub, mul, add_row, mul_row, dot_row, row, slice_cols,
    gather_rows, tanh, sigmoid, relu, scale, sum, mean, dropout, bce
  };

  struct Node {
    Op op = Op::constant;
    std::size_t a = SIZE_MAX;
    std::size_t b = SIZE_MAX;
    Tensor<T> value;
    std::vector<T> grad;
    bool needs_grad = false;
    Parameter<T>* param = nullptr;
    T scalar = T(0);
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    std::vector<T> aux;      // dropout mask / bce targets
    std::vector<int> index;  // gather rows
  };

  Var push(Node n, const char* op_name);
  Node& node(Var v);
  const Node& node(Var v) const;
  std::vector<T>& grad_of(std::size_t id);
  void backprop(std::size_t id);

  std::vector<Node> nodes_;
};

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fishdet::nn
