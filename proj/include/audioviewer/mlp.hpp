#pragma once

#include "audioviewer/common.hpp"
#include "audioviewer/rng.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace av {

enum class Activation { Identity, LeakyRelu, Sigmoid };

inline constexpr double kLeakySlope = 0.01;

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "leaky_relu") return Activation::LeakyRelu;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw FormatError("unknown activation '" + s + "'");
}

/// Parameter tensors in declaration order: W0, b0, W1, b1, ...
/// Weights are out x in; biases are out x 1.
template <class S>
using Tensors = std::vector<Mat<S>>;

template <class S>
Tensors<S> zeros_like(const Tensors<S>& t) {
  Tensors<S> z;
  z.reserve(t.size());
  for (const auto& m : t) z.push_back(Mat<S>::Zero(m.rows(), m.cols()));
  return z;
}

template <class S>
std::size_t count_params(const Tensors<S>& t) {
  std::size_t n = 0;
  for (const auto& m : t) n += static_cast<std::size_t>(m.size());
  return n;
}

template <class T, class S>
Tensors<T> cast_tensors(const Tensors<S>& t) {
  Tensors<T> out;
  out.reserve(t.size());
  for (const auto& m : t) out.push_back(m.template cast<T>());
  return out;
}

template <class S>
bool all_finite(const Tensors<S>& t) {
  for (const auto& m : t)
    if (!m.allFinite()) return false;
  return true;
}

/// Records which side of every non-differentiable point a forward pass took.
/// Two passes with different traces straddle a kink.
struct BranchTrace {
  std::vector<std::uint8_t> bits;

  template <class Derived>
  void add_signs(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) bits.push_back(m(i, j) > 0 ? 1 : 0);
  }
  void add(bool b) { bits.push_back(b ? 1 : 0); }
};

struct MlpShape {
  std::vector<int> dims;  // input, hidden..., output
  Activation hidden = Activation::LeakyRelu;
  Activation output = Activation::Identity;

  std::size_t num_layers() const { return dims.size() - 1; }
  std::size_t num_tensors() const { return 2 * num_layers(); }
};

template <class S>
struct MlpTape {
  std::vector<Mat<S>> inputs;  // input to each layer
  std::vector<Mat<S>> pre;     // pre-activation of each layer
  Mat<S> output;
};

template <class S>
void apply_activation(Activation a, Mat<S>& m) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::LeakyRelu:
      m = m.unaryExpr([](S v) { return v > S(0) ? v : static_cast<S>(kLeakySlope) * v; });
      break;
    case Activation::Sigmoid:
      m = m.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
      break;
  }
}

/// Multiplies `grad` in place by the activation derivative.
template <class S>
void activation_backward(Activation a, const Mat<S>& pre, const Mat<S>& out, Mat<S>& grad) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::LeakyRelu:
      grad = grad.cwiseProduct(pre.unaryExpr([](S v) { return v > S(0) ? S(1) : static_cast<S>(kLeakySlope); }));
      break;
    case Activation::Sigmoid:
      grad = grad.cwiseProduct(out.cwiseProduct((Mat<S>::Ones(out.rows(), out.cols()) - out)));
      break;
  }
}

template <class S>
void init_mlp(const MlpShape& shape, Rng& rng, Tensors<S>& out) {
  for (std::size_t l = 0; l < shape.num_layers(); ++l) {
    const int in = shape.dims[l], o = shape.dims[l + 1];
    const bool last = l + 1 == shape.num_layers();
    // He scaling for rectifier layers, Glorot-like for the linear head.
    const double stddev = last ? std::sqrt(1.0 / in) : std::sqrt(2.0 / in);
    Mat<S> w(o, in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<S>(stddev * rng.normal());
    out.push_back(std::move(w));
    out.push_back(Mat<S>::Zero(o, 1));
  }
}

/// Batched forward pass; columns of x are samples.
template <class S>
Mat<S> mlp_forward(std::span<const Mat<S>> params, const MlpShape& shape, const Mat<S>& x, MlpTape<S>* tape = nullptr,
                   BranchTrace* trace = nullptr) {
  require(params.size() == shape.num_tensors(), "mlp: parameter count mismatch");
  require(x.rows() == shape.dims.front(), "mlp: input has " + std::to_string(x.rows()) + " rows, expected " +
                                              std::to_string(shape.dims.front()));
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Mat<S> h = x;
  for (std::size_t l = 0; l < shape.num_layers(); ++l) {
    const auto& w = params[2 * l];
    const auto& b = params[2 * l + 1];
    Mat<S> pre = w * h;
    pre.colwise() += b.col(0);
    const Activation act = l + 1 == shape.num_layers() ? shape.output : shape.hidden;
    if (trace && act == Activation::LeakyRelu) trace->add_signs(pre);
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->pre.push_back(pre);
    }
    apply_activation(act, pre);
    if (!pre.allFinite()) throw NumericError("non-finite activation in layer " + std::to_string(l));
    h = std::move(pre);
  }
  if (tape) tape->output = h;
  return h;
}

/// Accumulates parameter gradients into `grads` and returns d(loss)/d(input).
template <class S>
Mat<S> mlp_backward(std::span<const Mat<S>> params, const MlpShape& shape, const MlpTape<S>& tape, Mat<S> grad_out,
                    std::span<Mat<S>> grads) {
  require(grads.size() == shape.num_tensors(), "mlp backward: gradient count mismatch");
  for (std::size_t l = shape.num_layers(); l-- > 0;) {
    const Activation act = l + 1 == shape.num_layers() ? shape.output : shape.hidden;
    const Mat<S>& out = l + 1 == shape.num_layers() ? tape.output : tape.inputs[l + 1];
    activation_backward(act, tape.pre[l], out, grad_out);
    grads[2 * l].noalias() += grad_out * tape.inputs[l].transpose();
    grads[2 * l + 1] += grad_out.rowwise().sum();
    if (l == 0) return params[0].transpose() * grad_out;
    grad_out = params[2 * l].transpose() * grad_out;
  }
  return grad_out;
}

}  // namespace av
