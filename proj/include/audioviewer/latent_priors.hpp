#pragma once

#include "audioviewer/common.hpp"
#include "audioviewer/corpus.hpp"
#include "audioviewer/rng.hpp"
#include "audioviewer/vae.hpp"

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace av {

// ---------------------------------------------------------------------------
// Style / content split

/// Style is the leading m rows, content the remaining d - m.
template <class S>
std::pair<Mat<S>, Mat<S>> split_latent(const Mat<S>& z, int m) {
  require(m > 0 && m < z.rows(), "split_latent: need 0 < m < d (m=" + std::to_string(m) + ", d=" +
                                     std::to_string(z.rows()) + ")");
  return {z.topRows(m), z.bottomRows(z.rows() - m)};
}

template <class S>
Mat<S> concat_latent(const Mat<S>& style, const Mat<S>& content) {
  require(style.cols() == content.cols(), "concat_latent: column mismatch");
  Mat<S> z(style.rows() + content.rows(), style.cols());
  z.topRows(style.rows()) = style;
  z.bottomRows(content.rows()) = content;
  return z;
}

// ---------------------------------------------------------------------------
// Temporal smoothness

enum class SmoothnessVariant { None, Mse, Q, LogMse };

inline const char* to_string(SmoothnessVariant v) {
  switch (v) {
    case SmoothnessVariant::None: return "NONE";
    case SmoothnessVariant::Mse: return "MSE";
    case SmoothnessVariant::Q: return "Q";
    case SmoothnessVariant::LogMse: return "LOGMSE";
  }
  return "?";
}

inline SmoothnessVariant smoothness_from_string(const std::string& s) {
  if (s == "NONE") return SmoothnessVariant::None;
  if (s == "MSE") return SmoothnessVariant::Mse;
  if (s == "Q") return SmoothnessVariant::Q;
  if (s == "LOGMSE") return SmoothnessVariant::LogMse;
  throw ArgumentError("unknown smoothness variant '" + s + "' (expected MSE, Q, LOGMSE or NONE)");
}

inline constexpr double kLogEps = 1e-8;

template <class S>
struct SmoothnessResult {
  S loss = 0;
  Mat<S> d_zi;
  Mat<S> d_zj;
  S d_log_s = 0;
  int zero_distances = 0;  // LOGMSE pairs that needed the epsilon guard
};

/// Pair loss on predicted time gaps s * ||z_i - z_j|| against true gaps dt,
/// averaged over the N columns. The time scale is parameterised as log_s.
template <class S>
SmoothnessResult<S> smoothness_loss(SmoothnessVariant variant, const Mat<S>& zi, const Mat<S>& zj, const Vec<S>& dt,
                                    S log_s, BranchTrace* trace = nullptr) {
  require(zi.rows() == zj.rows() && zi.cols() == zj.cols(), "smoothness_loss: latent shape mismatch");
  require(dt.size() == zi.cols(), "smoothness_loss: need one time gap per pair");
  require(variant != SmoothnessVariant::None, "smoothness_loss: variant NONE has no loss");
  const Eigen::Index n = zi.cols();
  require(n > 0, "smoothness_loss: empty batch");
  const S s = std::exp(log_s);

  SmoothnessResult<S> out;
  out.d_zi = Mat<S>::Zero(zi.rows(), n);
  out.d_zj = Mat<S>::Zero(zi.rows(), n);
  const Mat<S> diff = zi - zj;
  for (Eigen::Index k = 0; k < n; ++k) {
    require(dt[k] > S(0), "smoothness_loss: time gaps must be positive");
    const S r = diff.col(k).norm();
    const S pred = s * r;
    S residual = 0, d_pred = 0;
    switch (variant) {
      case SmoothnessVariant::Mse:
        residual = pred - dt[k];
        d_pred = S(2) * residual;
        break;
      case SmoothnessVariant::Q:
        residual = pred / dt[k] - S(1);
        d_pred = S(2) * residual / dt[k];
        break;
      case SmoothnessVariant::LogMse: {
        const bool zero = !(pred > S(0));
        if (trace) trace->add(zero);
        S p = pred;
        if (zero) {
          p = pred + static_cast<S>(kLogEps);
          ++out.zero_distances;
        }
        residual = std::log(p) - std::log(dt[k]);
        d_pred = S(2) * residual / p;
        break;
      }
      case SmoothnessVariant::None: break;
    }
    out.loss += residual * residual;
    d_pred /= static_cast<S>(n);
    out.d_log_s += d_pred * pred;
    if (r > S(0)) {
      const Mat<S> g = (d_pred * s / r) * diff.col(k);
      out.d_zi.col(k) = g;
      out.d_zj.col(k) = -g;
    }
  }
  out.loss /= static_cast<S>(n);
  if (out.zero_distances > 0)
    log(LogLevel::Debug, "smoothness_loss: " + std::to_string(out.zero_distances) + " zero-distance pairs under LOGMSE");
  return out;
}

template <class S>
struct PairLossGrad {
  S loss = 0;
  S d_log_s = 0;
  int zero_distances = 0;
};

/// Smoothness loss through the encoder means. Gradients (scaled by `weight`)
/// are accumulated into `grads`; with m > 0 only the content rows enter the distance.
template <class S>
PairLossGrad<S> smoothness_through_encoder(const MlpVae<S>& vae, SmoothnessVariant variant, const Mat<S>& xi,
                                           const Mat<S>& xj, const Vec<S>& dt, S log_s, int m, S weight,
                                           Tensors<S>& grads, BranchTrace* trace = nullptr) {
  const int d = vae.latent_dim();
  require(m >= 0 && m < d, "smoothness: need 0 <= m < d");
  const Eigen::Index n = xi.cols();
  Mat<S> x(xi.rows(), 2 * n);
  x.leftCols(n) = xi;
  x.rightCols(n) = xj;
  EncodeTape<S> tape;
  const LatentGaussian<S> lg = encode_forward(vae, x, &tape, trace);
  const int k = d - m;
  const Mat<S> zi = lg.mu.block(m, 0, k, n);
  const Mat<S> zj = lg.mu.block(m, n, k, n);
  SmoothnessResult<S> r = smoothness_loss(variant, zi, zj, dt, log_s, trace);

  Mat<S> d_mu = Mat<S>::Zero(d, 2 * n);
  d_mu.block(m, 0, k, n) = weight * r.d_zi;
  d_mu.block(m, n, k, n) = weight * r.d_zj;
  encode_backward(vae, tape, d_mu, Mat<S>::Zero(d, 2 * n), grads);
  return {r.loss, weight * r.d_log_s, r.zero_distances};
}

// ---------------------------------------------------------------------------
// Recombined reconstruction

template <class S>
struct RecombinedResult {
  S loss = 0;
  S recon = 0;
  S kl = 0;
  Tensors<S> grads;
  Mat<S> direct_mu;  // encoding of the target itself, not used by the loss
};

/// Reconstructs x_ai from [style(x_aj) | content(x_bi)], each part drawn from
/// its own posterior with its own noise. Loss = 0.5||x_ai - decode(z')||^2
/// plus the KL of both contributing posteriors, averaged over the batch.
template <class S>
RecombinedResult<S> recombined_reconstruction_loss(const MlpVae<S>& vae, const Mat<S>& x_ai, const Mat<S>& x_bi,
                                                   const Mat<S>& x_aj, int m, const Mat<S>& noise_bi,
                                                   const Mat<S>& noise_aj, BranchTrace* trace = nullptr,
                                                   bool compute_direct = true, S beta = S(1)) {
  const int d = vae.latent_dim();
  require(m > 0 && m < d, "recombined_reconstruction_loss: need 0 < m < d");
  const Eigen::Index n = x_ai.cols();
  require(x_bi.cols() == n && x_aj.cols() == n, "recombined_reconstruction_loss: batch size mismatch");
  const auto B = static_cast<S>(n);

  Mat<S> x(x_bi.rows(), 2 * n);
  x.leftCols(n) = x_bi;
  x.rightCols(n) = x_aj;
  EncodeTape<S> et;
  const LatentGaussian<S> lg = encode_forward(vae, x, &et, trace);
  Mat<S> noise(d, 2 * n);
  noise.leftCols(n) = noise_bi;
  noise.rightCols(n) = noise_aj;
  const Mat<S> z = reparameterize(lg, noise);

  Mat<S> z_mix(d, n);
  z_mix.topRows(m) = z.block(0, n, m, n);              // style from x_aj
  z_mix.bottomRows(d - m) = z.block(m, 0, d - m, n);   // content from x_bi

  DecodeTape<S> dt;
  const Mat<S> xr = decode_forward(vae, z_mix, &dt, trace);
  const Mat<S> diff = xr - x_ai;

  RecombinedResult<S> out;
  out.recon = S(0.5) * diff.squaredNorm() / B;
  out.kl = kl_diag_gaussian(lg) / B;
  out.loss = out.recon + beta * out.kl;
  if (!std::isfinite(static_cast<double>(out.loss))) throw NumericError("recombined reconstruction: non-finite loss");

  out.grads = zeros_like(vae.params);
  const Mat<S> d_mix = decode_backward(vae, dt, Mat<S>(diff / B), out.grads);
  Mat<S> d_z = Mat<S>::Zero(d, 2 * n);
  d_z.block(0, n, m, n) = d_mix.topRows(m);
  d_z.block(m, 0, d - m, n) = d_mix.bottomRows(d - m);
  Mat<S> d_mu = Mat<S>::Zero(d, 2 * n), d_lv = Mat<S>::Zero(d, 2 * n);
  reparameterize_backward(lg, noise, d_z, d_mu, d_lv);
  kl_backward(lg, beta / B, d_mu, d_lv);
  encode_backward(vae, et, d_mu, d_lv, out.grads);

  if (compute_direct) out.direct_mu = encode(vae, x_ai).mu;
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

inline constexpr double kMaxPairGap = 0.8;  // seconds

struct PairSample {
  int seg_i = 0;
  int seg_j = 0;
  double t_i = 0.0;
  double t_j = 0.0;
  int utterance = 0;

  double gap() const { return std::abs(t_i - t_j); }
};

struct TripletSample {
  int ai = 0;  // speaker a, phoneme i (reconstruction target)
  int bi = 0;  // speaker b, phoneme i (content source)
  int aj = 0;  // speaker a, phoneme j (style source)
  int speaker_a = 0, speaker_b = 0;
  int phoneme_i = 0, phoneme_j = 0;
};

/// All ordered same-utterance segment pairs with 0 < gap <= 0.8 s.
class PairSampler {
 public:
  explicit PairSampler(const Corpus& corpus, double max_gap = kMaxPairGap) {
    for (const auto& u : corpus.utterances)
      for (int a : u.segments)
        for (int b : u.segments) {
          const double ta = corpus.segments[static_cast<std::size_t>(a)].t_start;
          const double tb = corpus.segments[static_cast<std::size_t>(b)].t_start;
          const double gap = std::abs(ta - tb);
          if (gap > 1e-9 && gap <= max_gap + 1e-9) pairs_.push_back({a, b, ta, tb, u.id});
        }
    if (pairs_.empty())
      throw ArgumentError("sample_pairs: no valid pair; need an utterance with at least 2 segments within " +
                          std::to_string(max_gap) + " s");
  }

  PairSample sample(Rng& rng) const { return pairs_[rng.index(pairs_.size())]; }
  std::size_t size() const { return pairs_.size(); }

 private:
  std::vector<PairSample> pairs_;
};

/// Draws (M_ai, M_bi, M_aj) triplets: the target uniformly among segments that
/// admit at least one triplet, then each partner uniformly among its candidates.
class TripletSampler {
 public:
  explicit TripletSampler(const Corpus& corpus) : corpus_(&corpus) {
    for (std::size_t k = 0; k < corpus.segments.size(); ++k) {
      const auto& s = corpus.segments[k];
      by_phoneme_[s.phoneme].push_back(static_cast<int>(k));
      by_speaker_[s.speaker].push_back(static_cast<int>(k));
    }
    std::map<int, std::set<int>> speakers_of_phoneme;
    for (const auto& s : corpus.segments) speakers_of_phoneme[s.phoneme].insert(s.speaker);
    std::set<int> speakers;
    for (const auto& s : corpus.segments) speakers.insert(s.speaker);
    bool shared = false;
    for (const auto& [p, sp] : speakers_of_phoneme) shared = shared || sp.size() >= 2;
    if (speakers.size() < 2 || !shared)
      throw ArgumentError("sample_triplets: need 2 speakers sharing a phoneme (corpus has " +
                          std::to_string(speakers.size()) + " speaker(s))");

    for (std::size_t k = 0; k < corpus.segments.size(); ++k) {
      const auto& s = corpus.segments[k];
      const bool has_b = speakers_of_phoneme[s.phoneme].size() >= 2;
      bool has_j = false;
      for (int o : by_speaker_[s.speaker]) has_j = has_j || corpus.segments[static_cast<std::size_t>(o)].phoneme != s.phoneme;
      if (has_b && has_j) targets_.push_back(static_cast<int>(k));
    }
    if (targets_.empty())
      throw ArgumentError("sample_triplets: no speaker has two distinct phonemes while sharing one with another speaker");
  }

  TripletSample sample(Rng& rng) const { return sample_target(targets_[rng.index(targets_.size())], rng); }

  /// Triplet with a given target segment (must be one of targets()).
  TripletSample sample_target(int ai, Rng& rng) const {
    const auto& segs = corpus_->segments;
    const auto& t = segs[static_cast<std::size_t>(ai)];
    TripletSample out;
    out.ai = ai;
    out.speaker_a = t.speaker;
    out.phoneme_i = t.phoneme;
    out.bi = pick(by_phoneme_.at(t.phoneme), rng, [&](const LabeledSegment& s) { return s.speaker != t.speaker; });
    out.aj = pick(by_speaker_.at(t.speaker), rng, [&](const LabeledSegment& s) { return s.phoneme != t.phoneme; });
    out.speaker_b = segs[static_cast<std::size_t>(out.bi)].speaker;
    out.phoneme_j = segs[static_cast<std::size_t>(out.aj)].phoneme;
    return out;
  }

  const std::vector<int>& targets() const { return targets_; }

 private:
  template <class Pred>
  int pick(const std::vector<int>& pool, Rng& rng, Pred pred) const {
    std::vector<int> candidates;
    for (int k : pool)
      if (pred(corpus_->segments[static_cast<std::size_t>(k)])) candidates.push_back(k);
    if (candidates.empty()) throw ArgumentError("sample_triplets: no candidate partner");
    return candidates[rng.index(candidates.size())];
  }

  const Corpus* corpus_;
  std::map<int, std::vector<int>> by_phoneme_;
  std::map<int, std::vector<int>> by_speaker_;
  std::vector<int> targets_;
};

inline void validate_triplet(const Corpus& c, const TripletSample& t) {
  const auto& ai = c.segments.at(static_cast<std::size_t>(t.ai));
  const auto& bi = c.segments.at(static_cast<std::size_t>(t.bi));
  const auto& aj = c.segments.at(static_cast<std::size_t>(t.aj));
  if (ai.phoneme != bi.phoneme) throw ArgumentError("triplet: M_ai and M_bi must share a phoneme label");
  if (ai.speaker != aj.speaker) throw ArgumentError("triplet: M_ai and M_aj must share a speaker");
}

}  // namespace av
