#pragma once

#include "audioviewer/mlp.hpp"

#include <cmath>

namespace av {

template <class S>
struct AdamState {
  long step = 0;
  Tensors<S> m;
  Tensors<S> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update in place.
template <class S>
void adam_step(Tensors<S>& params, const Tensors<S>& grads, AdamState<S>& st) {
  require(params.size() == grads.size(), "adam: tensor count mismatch");
  if (st.m.empty()) {
    st.m = zeros_like(params);
    st.v = zeros_like(params);
  }
  require(st.m.size() == params.size(), "adam: state shape mismatch");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const S b1 = static_cast<S>(st.beta1), b2 = static_cast<S>(st.beta2);
  const S step_size = static_cast<S>(st.lr / c1);
  const S inv_c2 = static_cast<S>(1.0 / c2);
  const S eps = static_cast<S>(st.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].rows() == grads[i].rows() && params[i].cols() == grads[i].cols(), "adam: shape mismatch");
    st.m[i] = b1 * st.m[i] + (S(1) - b1) * grads[i];
    st.v[i] = b2 * st.v[i] + (S(1) - b2) * grads[i].cwiseAbs2();
    params[i].array() -= step_size * st.m[i].array() / ((st.v[i].array() * inv_c2).sqrt() + eps);
  }
}

}  // namespace av
