#pragma once

#include "audioviewer/common.hpp"
#include "audioviewer/mlp.hpp"
#include "audioviewer/rng.hpp"

#include <cmath>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace av {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Encoder D -> hidden... -> 2d (mean head, log-variance head); decoder mirrors it.
struct VaeShape {
  int input_dim = 0;
  std::vector<int> hidden;
  int latent_dim = 0;
  Activation output = Activation::Identity;

  MlpShape encoder() const {
    MlpShape s;
    s.dims.push_back(input_dim);
    s.dims.insert(s.dims.end(), hidden.begin(), hidden.end());
    s.dims.push_back(2 * latent_dim);
    return s;
  }

  MlpShape decoder() const {
    MlpShape s;
    s.dims.push_back(latent_dim);
    s.dims.insert(s.dims.end(), hidden.rbegin(), hidden.rend());
    s.dims.push_back(input_dim);
    s.output = output;
    return s;
  }

  std::size_t encoder_tensors() const { return 2 * (hidden.size() + 1); }
};

/// 1600 -> 512 -> 256 -> 2d over flattened mel segments.
inline VaeShape audio_vae_shape(int latent_dim = 64, int input_dim = 1600) {
  return {input_dim, {512, 256}, latent_dim, Activation::Identity};
}

/// 1024 -> 256 -> 2d over 32x32 frames, sigmoid output in [0, 1].
inline VaeShape image_vae_shape(int latent_dim, int input_dim = 1024) {
  return {input_dim, {256}, latent_dim, Activation::Sigmoid};
}

template <class S>
struct MlpVae {
  VaeShape shape;
  Tensors<S> params;  // encoder tensors, then decoder tensors

  int latent_dim() const { return shape.latent_dim; }
  int input_dim() const { return shape.input_dim; }

  std::span<const Mat<S>> encoder_params() const { return std::span(params).first(shape.encoder_tensors()); }
  std::span<const Mat<S>> decoder_params() const { return std::span(params).subspan(shape.encoder_tensors()); }

  template <class T>
  MlpVae<T> cast() const {
    return {shape, cast_tensors<T>(params)};
  }
};

template <class S>
MlpVae<S> make_vae(const VaeShape& shape, std::uint64_t seed) {
  require(shape.input_dim > 0 && shape.latent_dim > 0, "vae: dimensions must be positive");
  Rng rng(seed);
  MlpVae<S> vae{shape, {}};
  init_mlp(shape.encoder(), rng, vae.params);
  init_mlp(shape.decoder(), rng, vae.params);
  return vae;
}

/// Diagonal Gaussian posterior; columns are samples.
template <class S>
struct LatentGaussian {
  Mat<S> mu;
  Mat<S> log_var;
};

template <class S>
struct EncodeTape {
  MlpTape<S> mlp;
  Mat<S> clamp_pass;  // 1 where log_var was inside the clamp range
};

template <class S>
struct DecodeTape {
  MlpTape<S> mlp;
};

template <class S>
LatentGaussian<S> encode_forward(const MlpVae<S>& vae, const Mat<S>& x, EncodeTape<S>* tape = nullptr,
                                 BranchTrace* trace = nullptr) {
  const int d = vae.latent_dim();
  Mat<S> h = mlp_forward(vae.encoder_params(), vae.shape.encoder(), x, tape ? &tape->mlp : nullptr, trace);
  LatentGaussian<S> lg;
  lg.mu = h.topRows(d);
  const Mat<S> raw = h.bottomRows(d);
  const S lo = static_cast<S>(kLogVarMin), hi = static_cast<S>(kLogVarMax);
  lg.log_var = raw.cwiseMax(lo).cwiseMin(hi);
  if (tape) tape->clamp_pass = raw.unaryExpr([&](S v) { return (v > lo && v < hi) ? S(1) : S(0); });
  if (trace) trace->add_signs(raw.unaryExpr([&](S v) { return (v > lo && v < hi) ? S(1) : S(0); }));
  return lg;
}

/// Accumulates encoder gradients; returns d(loss)/d(x).
template <class S>
Mat<S> encode_backward(const MlpVae<S>& vae, const EncodeTape<S>& tape, const std::type_identity_t<Mat<S>>& d_mu,
                       const std::type_identity_t<Mat<S>>& d_log_var, Tensors<S>& grads) {
  const int d = vae.latent_dim();
  Mat<S> g(2 * d, d_mu.cols());
  g.topRows(d) = d_mu;
  g.bottomRows(d) = d_log_var.cwiseProduct(tape.clamp_pass);
  return mlp_backward(vae.encoder_params(), vae.shape.encoder(), tape.mlp, std::move(g),
                      std::span(grads).first(vae.shape.encoder_tensors()));
}

template <class S>
Mat<S> decode_forward(const MlpVae<S>& vae, const Mat<S>& z, DecodeTape<S>* tape = nullptr,
                      BranchTrace* trace = nullptr) {
  return mlp_forward(vae.decoder_params(), vae.shape.decoder(), z, tape ? &tape->mlp : nullptr, trace);
}

/// Accumulates decoder gradients; returns d(loss)/d(z).
template <class S>
Mat<S> decode_backward(const MlpVae<S>& vae, const DecodeTape<S>& tape, const std::type_identity_t<Mat<S>>& d_out,
                       Tensors<S>& grads) {
  return mlp_backward(vae.decoder_params(), vae.shape.decoder(), tape.mlp, d_out,
                      std::span(grads).subspan(vae.shape.encoder_tensors()));
}

template <class S>
LatentGaussian<S> encode(const MlpVae<S>& vae, const Mat<S>& x) {
  return encode_forward(vae, x);
}

template <class S>
Mat<S> decode(const MlpVae<S>& vae, const Mat<S>& z) {
  return decode_forward(vae, z);
}

/// z = mu + exp(log_var / 2) * noise
template <class S>
Mat<S> reparameterize(const LatentGaussian<S>& lg, const Mat<S>& noise) {
  require(noise.rows() == lg.mu.rows() && noise.cols() == lg.mu.cols(), "reparameterize: noise shape mismatch");
  return lg.mu + (lg.log_var * S(0.5)).array().exp().matrix().cwiseProduct(noise);
}

/// KL(N(mu, exp(log_var)) || N(0, I)) summed over all entries.
template <class S>
S kl_diag_gaussian(const LatentGaussian<S>& lg) {
  return S(0.5) * (lg.mu.array().square() + lg.log_var.array().exp() - S(1) - lg.log_var.array()).sum();
}

/// Per-column KL values.
template <class S>
Vec<S> kl_per_sample(const LatentGaussian<S>& lg) {
  return (S(0.5) * (lg.mu.array().square() + lg.log_var.array().exp() - S(1) - lg.log_var.array())).colwise().sum().transpose();
}

/// Unit-normal noise matrix (rows x cols).
template <class S>
Mat<S> normal_noise(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Mat<S> n(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) n(i, j) = static_cast<S>(rng.normal());
  return n;
}

template <class S>
struct LossGrad {
  S loss = 0;
  S recon = 0;
  S kl = 0;
  Tensors<S> grads;
};

/// Gradient of a reparameterized sample w.r.t. (mu, log_var), accumulated into d_mu / d_log_var.
template <class S>
void reparameterize_backward(const LatentGaussian<S>& lg, const Mat<S>& noise, const Mat<S>& d_z, Mat<S>& d_mu,
                             Mat<S>& d_log_var) {
  d_mu += d_z;
  d_log_var += d_z.cwiseProduct(noise).cwiseProduct((lg.log_var * S(0.5)).array().exp().matrix()) * S(0.5);
}

/// KL gradient (scaled by `weight`) accumulated into d_mu / d_log_var.
template <class S>
void kl_backward(const LatentGaussian<S>& lg, S weight, Mat<S>& d_mu, Mat<S>& d_log_var) {
  d_mu += weight * lg.mu;
  d_log_var += weight * S(0.5) * (lg.log_var.array().exp() - S(1)).matrix();
}

/// Single-sample negative ELBO averaged over the batch columns:
/// 0.5 * ||x - decode(z)||^2 + beta * KL, z = reparameterize(encode(x), noise).
template <class S>
LossGrad<S> elbo_loss_and_grads(const MlpVae<S>& vae, const Mat<S>& x, const Mat<S>& noise, S beta = S(1),
                                BranchTrace* trace = nullptr) {
  const auto B = static_cast<S>(x.cols());
  EncodeTape<S> et;
  DecodeTape<S> dt;
  const LatentGaussian<S> lg = encode_forward(vae, x, &et, trace);
  const Mat<S> z = reparameterize(lg, noise);
  const Mat<S> xr = decode_forward(vae, z, &dt, trace);
  const Mat<S> diff = xr - x;

  LossGrad<S> out;
  out.recon = S(0.5) * diff.squaredNorm() / B;
  out.kl = kl_diag_gaussian(lg) / B;
  out.loss = out.recon + beta * out.kl;
  if (!std::isfinite(static_cast<double>(out.loss))) throw NumericError("elbo: non-finite loss");

  out.grads = zeros_like(vae.params);
  const Mat<S> d_z = decode_backward(vae, dt, Mat<S>(diff / B), out.grads);
  Mat<S> d_mu = Mat<S>::Zero(lg.mu.rows(), lg.mu.cols());
  Mat<S> d_lv = Mat<S>::Zero(lg.mu.rows(), lg.mu.cols());
  reparameterize_backward(lg, noise, d_z, d_mu, d_lv);
  kl_backward(lg, beta / B, d_mu, d_lv);
  encode_backward(vae, et, d_mu, d_lv, out.grads);
  return out;
}

}  // namespace av
