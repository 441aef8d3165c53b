#include "fishdet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fishdet/errors.hpp"

namespace fishdet::nn {

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_numel(shape)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_string(shape));
  }
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) +
                              " and " + shape_string(b));
}

template <typename T>
void require_2d(const char* op, const Tensor<T>& t) {
  if (t.shape.size() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                shape_string(t.shape));
  }
}


// out[m,n] (+)= a[m,k] * b[k,n], accumulated in double per output row.
template <typename T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = accumulate ? static_cast<T>(out[i * n + j] + acc[j]) : static_cast<T>(acc[j]);
    }
  }
}

}  // namespace

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  if (v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
  return nodes_[v.id];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
  return nodes_[v.id];
}

template <typename T>
Var Tape<T>::push(Node n, const char* op_name) {
  for (const T x : n.value.data) {
    if (!std::isfinite(x)) {
      throw NumericFault(std::string("non-finite value produced by ") + op_name);
    }
  }
  if (n.a != SIZE_MAX) n.needs_grad = n.needs_grad || nodes_[n.a].needs_grad;
  if (n.b != SIZE_MAX) n.needs_grad = n.needs_grad || nodes_[n.b].needs_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  return push(std::move(n), "constant");
}

template <typename T>
Var Tape<T>::param(Parameter<T>& p) {
  Node n;
  n.op = Op::param;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = true;
  return push(std::move(n), "parameter");
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  require_2d("matmul", A);
  require_2d("matmul", B);
  if (A.shape[1] != B.shape[0]) shape_error("matmul", A.shape, B.shape);
  const std::size_t m = A.shape[0], k = A.shape[1], nn = B.shape[1];
  Node n;
  n.op = Op::matmul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor<T>({m, nn});
  gemm_nn(A.data.data(), B.data.data(), n.value.data.data(), m, k, nn, false);
  return push(std::move(n), "matmul");
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  if (A.shape != B.shape) shape_error("add", A.shape, B.shape);
  Node n;
  n.op = Op::add;
  n.a = a.id;
  n.b = b.id;
  n.value = A;
  for (std::size_t i = 0; i < A.numel(); ++i) n.value.data[i] = A.data[i] + B.data[i];
  return push(std::move(n), "add");
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  if (A.shape != B.shape) shape_error("sub", A.shape, B.shape);
  Node n;
  n.op = Op::sub;
  n.a = a.id;
  n.b = b.id;
  n.value = A;
  for (std::size_t i = 0; i < A.numel(); ++i) n.value.data[i] = A.data[i] - B.data[i];
  return push(std::move(n), "sub");
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  if (A.shape != B.shape) shape_error("mul", A.shape, B.shape);
  Node n;
  n.op = Op::mul;
  n.a = a.id;
  n.b = b.id;
  n.value = A;
  for (std::size_t i = 0; i < A.numel(); ++i) n.value.data[i] = A.data[i] * B.data[i];
  return push(std::move(n), "mul");
}

template <typename T>
Var Tape<T>::add_row(Var x, Var bias) {
  const auto& X = node(x).value;
  const auto& B = node(bias).value;
  require_2d("add_row", X);
  if (B.shape.size() != 1 || B.shape[0] != X.shape[1]) shape_error("add_row", X.shape, B.shape);
  Node n;
  n.op = Op::add_row;
  n.a = x.id;
  n.b = bias.id;
  n.value = X;
  const std::size_t m = X.shape[0], c = X.shape[1];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) n.value.data[i * c + j] = X.data[i * c + j] + B.data[j];
  return push(std::move(n), "add_row");
}

template <typename T>
Var Tape<T>::mul_row(Var x, Var v) {
  const auto& X = node(x).value;
  const auto& V = node(v).value;
  require_2d("mul_row", X);
  if (V.shape.size() != 1 || V.shape[0] != X.shape[1]) shape_error("mul_row", X.shape, V.shape);
  Node n;
  n.op = Op::mul_row;
  n.a = x.id;
  n.b = v.id;
  n.value = X;
  const std::size_t m = X.shape[0], c = X.shape[1];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) n.value.data[i * c + j] = X.data[i * c + j] * V.data[j];
  return push(std::move(n), "mul_row");
}

template <typename T>
Var Tape<T>::dot_row(Var x, Var v) {
  const auto& X = node(x).value;
  const auto& V = node(v).value;
  require_2d("dot_row", X);
  if (V.shape.size() != 1 || V.shape[0] != X.shape[1]) shape_error("dot_row", X.shape, V.shape);
  const std::size_t m = X.shape[0], c = X.shape[1];
  Node n;
  n.op = Op::dot_row;
  n.a = x.id;
  n.b = v.id;
  n.value = Tensor<T>({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      acc += static_cast<double>(X.data[i * c + j]) * static_cast<double>(V.data[j]);
    n.value.data[i] = static_cast<T>(acc);
  }
  return push(std::move(n), "dot_row");
}

template <typename T>
Var Tape<T>::row(Var x, std::size_t r) {
  const auto& X = node(x).value;
  require_2d("row", X);
  if (r >= X.shape[0]) throw std::invalid_argument("row: index out of range for " + shape_string(X.shape));
  const std::size_t c = X.shape[1];
  Node n;
  n.op = Op::row;
  n.a = x.id;
  n.i0 = r;
  n.value = Tensor<T>({c});
  std::copy_n(X.data.begin() + static_cast<std::ptrdiff_t>(r * c), c, n.value.data.begin());
  return push(std::move(n), "row");
}

template <typename T>
Var Tape<T>::slice_cols(Var x, std::size_t begin, std::size_t count) {
  const auto& X = node(x).value;
  require_2d("slice_cols", X);
  if (begin + count > X.shape[1]) {
    throw std::invalid_argument("slice_cols: range out of bounds for " + shape_string(X.shape));
  }
  const std::size_t m = X.shape[0], c = X.shape[1];
  Node n;
  n.op = Op::slice_cols;
  n.a = x.id;
  n.i0 = begin;
  n.i1 = count;
  n.value = Tensor<T>({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) n.value.data[i * count + j] = X.data[i * c + begin + j];
  return push(std::move(n), "slice_cols");
}

template <typename T>
Var Tape<T>::gather_rows(Var table, std::span<const int> rows) {
  const auto& X = node(table).value;
  require_2d("gather_rows", X);
  const std::size_t c = X.shape[1];
  Node n;
  n.op = Op::gather_rows;
  n.a = table.id;
  n.index.assign(rows.begin(), rows.end());
  n.value = Tensor<T>({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= X.shape[0]) {
      throw std::invalid_argument("gather_rows: index out of range");
    }
    std::copy_n(X.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c,
                n.value.data.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return push(std::move(n), "gather_rows");
}

template <typename T>
Var Tape<T>::tanh(Var x) {
  Node n;
  n.op = Op::tanh;
  n.a = x.id;
  n.value = node(x).value;
  for (auto& v : n.value.data) v = std::tanh(v);
  return push(std::move(n), "tanh");
}

template <typename T>
Var Tape<T>::sigmoid(Var x) {
  Node n;
  n.op = Op::sigmoid;
  n.a = x.id;
  n.value = node(x).value;
  for (auto& v : n.value.data) v = sigmoid_scalar(v);
  return push(std::move(n), "sigmoid");
}

template <typename T>
Var Tape<T>::relu(Var x) {
  Node n;
  n.op = Op::relu;
  n.a = x.id;
  n.value = node(x).value;
  for (auto& v : n.value.data) v = v > T(0) ? v : T(0);
  return push(std::move(n), "relu");
}

template <typename T>
Var Tape<T>::scale(Var x, T c) {
  Node n;
  n.op = Op::scale;
  n.a = x.id;
  n.scalar = c;
  n.value = node(x).value;
  for (auto& v : n.value.data) v *= c;
  return push(std::move(n), "scale");
}

template <typename T>
Var Tape<T>::sum(Var x) {
  const auto& X = node(x).value;
  double acc = 0.0;
  for (const T v : X.data) acc += v;
  Node n;
  n.op = Op::sum;
  n.a = x.id;
  n.value = Tensor<T>({1}, {static_cast<T>(acc)});
  return push(std::move(n), "sum");
}

template <typename T>
Var Tape<T>::mean(Var x) {
  const auto& X = node(x).value;
  if (X.numel() == 0) throw std::invalid_argument("mean of an empty tensor");
  double acc = 0.0;
  for (const T v : X.data) acc += v;
  Node n;
  n.op = Op::mean;
  n.a = x.id;
  n.value = Tensor<T>({1}, {static_cast<T>(acc / static_cast<double>(X.numel()))});
  return push(std::move(n), "mean");
}

template <typename T>
Var Tape<T>::dropout(Var x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  Node n;
  n.op = Op::dropout;
  n.a = x.id;
  n.value = node(x).value;
  n.aux.resize(n.value.numel());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < n.aux.size(); ++i) {
    n.aux[i] = rng.uniform() < rate ? T(0) : keep_scale;
    n.value.data[i] *= n.aux[i];
  }
  return push(std::move(n), "dropout");
}

template <typename T>
Var Tape<T>::bce_with_logits(Var logits, std::span<const T> targets) {
  const auto& Z = node(logits).value;
  if (Z.numel() != targets.size() || Z.numel() == 0) {
    throw std::invalid_argument("bce_with_logits: " + std::to_string(targets.size()) +
                                " targets for logits " + shape_string(Z.shape));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < Z.numel(); ++i) {
    const double z = Z.data[i];
    const double y = targets[i];
    // max(z,0) - z*y + log(1 + exp(-|z|))
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Node n;
  n.op = Op::bce;
  n.a = logits.id;
  n.aux.assign(targets.begin(), targets.end());
  n.value = Tensor<T>({1}, {static_cast<T>(acc / static_cast<double>(Z.numel()))});
  return push(std::move(n), "bce_with_logits");
}

template <typename T>
std::vector<T>& Tape<T>::grad_of(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.numel(), T(0));
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (nodes_.empty()) throw StateError("backward() on an empty tape");
  if (loss.id >= nodes_.size()) throw StateError("loss does not belong to this tape");
  if (nodes_[loss.id].value.numel() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got " +
                                shape_string(nodes_[loss.id].value.shape));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_of(loss.id)[0] = T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (!nodes_[id].needs_grad || nodes_[id].grad.empty()) continue;
    backprop(id);
  }
}

template <typename T>
void Tape<T>::backprop(std::size_t id) {
  // Copy what we need: grad_of() may grow other nodes' buffers but never
  // reallocates nodes_, so references into nodes_ stay valid.
  Node& n = nodes_[id];
  const std::vector<T>& g = n.grad;
  auto wants = [&](std::size_t input) { return input != SIZE_MAX && nodes_[input].needs_grad; };

  switch (n.op) {
    case Op::constant:
      break;
    case Op::param: {
      auto& pg = n.param->grad.data;
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      break;
    }
    case Op::matmul: {
      const auto& A = nodes_[n.a].value;
      const auto& B = nodes_[n.b].value;
      const std::size_t m = A.shape[0], k = A.shape[1], c = B.shape[1];
      if (wants(n.a)) {
        // dA = G * B^T
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j)
              acc += static_cast<double>(g[i * c + j]) * static_cast<double>(B.data[p * c + j]);
            ga[i * k + p] += static_cast<T>(acc);
          }
      }
      if (wants(n.b)) {
        // dB = A^T * G
        auto& gb = grad_of(n.b);
        std::vector<double> acc(k * c, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A.data[i * k + p];
            for (std::size_t j = 0; j < c; ++j) acc[p * c + j] += aip * static_cast<double>(g[i * c + j]);
          }
        for (std::size_t i = 0; i < acc.size(); ++i) gb[i] += static_cast<T>(acc[i]);
      }
      break;
    }
    case Op::add:
    case Op::sub: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(n.b)) {
        auto& gb = grad_of(n.b);
        const T sign = n.op == Op::add ? T(1) : T(-1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
      }
      break;
    }
    case Op::mul: {
      const auto& A = nodes_[n.a].value;
      const auto& B = nodes_[n.b].value;
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B.data[i];
      }
      if (wants(n.b)) {
        auto& gb = grad_of(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A.data[i];
      }
      break;
    }
    case Op::add_row: {
      const std::size_t m = n.value.shape[0], c = n.value.shape[1];
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(n.b)) {
        auto& gb = grad_of(n.b);
        for (std::size_t j = 0; j < c; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += g[i * c + j];
          gb[j] += static_cast<T>(acc);
        }
      }
      break;
    }
    case Op::mul_row: {
      const auto& X = nodes_[n.a].value;
      const auto& V = nodes_[n.b].value;
      const std::size_t m = X.shape[0], c = X.shape[1];
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] * V.data[j];
      }
      if (wants(n.b)) {
        auto& gb = grad_of(n.b);
        for (std::size_t j = 0; j < c; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i)
            acc += static_cast<double>(g[i * c + j]) * static_cast<double>(X.data[i * c + j]);
          gb[j] += static_cast<T>(acc);
        }
      }
      break;
    }
    case Op::dot_row: {
      const auto& X = nodes_[n.a].value;
      const auto& V = nodes_[n.b].value;
      const std::size_t m = X.shape[0], c = X.shape[1];
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i] * V.data[j];
      }
      if (wants(n.b)) {
        auto& gb = grad_of(n.b);
        for (std::size_t j = 0; j < c; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i)
            acc += static_cast<double>(g[i]) * static_cast<double>(X.data[i * c + j]);
          gb[j] += static_cast<T>(acc);
        }
      }
      break;
    }
    case Op::row: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        const std::size_t c = g.size();
        for (std::size_t j = 0; j < c; ++j) ga[n.i0 * c + j] += g[j];
      }
      break;
    }
    case Op::slice_cols: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        const std::size_t m = n.value.shape[0];
        const std::size_t c = nodes_[n.a].value.shape[1];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n.i1; ++j) ga[i * c + n.i0 + j] += g[i * n.i1 + j];
      }
      break;
    }
    case Op::gather_rows: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        const std::size_t c = n.value.shape[1];
        for (std::size_t i = 0; i < n.index.size(); ++i)
          for (std::size_t j = 0; j < c; ++j)
            ga[static_cast<std::size_t>(n.index[i]) * c + j] += g[i * c + j];
      }
      break;
    }
    case Op::tanh: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T y = n.value.data[i];
          ga[i] += g[i] * (T(1) - y * y);
        }
      }
      break;
    }
    case Op::sigmoid: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T y = n.value.data[i];
          ga[i] += g[i] * y * (T(1) - y);
        }
      }
      break;
    }
    case Op::relu: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        const auto& X = nodes_[n.a].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += X.data[i] > T(0) ? g[i] : T(0);
      }
      break;
    }
    case Op::scale: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.scalar;
      }
      break;
    }
    case Op::sum:
    case Op::mean: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        const T d = n.op == Op::sum ? g[0] : static_cast<T>(g[0] / static_cast<T>(ga.size()));
        for (auto& v : ga) v += d;
      }
      break;
    }
    case Op::dropout: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.aux[i];
      }
      break;
    }
    case Op::bce: {
      if (wants(n.a)) {
        auto& ga = grad_of(n.a);
        const auto& Z = nodes_[n.a].value;
        const T inv = T(1) / static_cast<T>(Z.numel());
        for (std::size_t i = 0; i < Z.numel(); ++i) {
          ga[i] += g[0] * (sigmoid_scalar(Z.data[i]) - n.aux[i]) * inv;
        }
      }
      break;
    }
  }
}

template struct Tensor<float>;
template struct Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace fishdet::nn
