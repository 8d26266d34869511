#pragma once

#include "audioviewer/adam.hpp"
#include "audioviewer/corpus.hpp"
#include "audioviewer/latent_priors.hpp"
#include "audioviewer/models.hpp"
#include "audioviewer/synth.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace av {

inline constexpr double kDivergenceLoss = 1e6;

struct AudioTrainConfig {
  int latent_dim = 64;
  int style_dim = 16;
  bool disentangle = true;  // recombined reconstruction on triplets; plain ELBO otherwise
  SmoothnessVariant smoothness = SmoothnessVariant::LogMse;
  double lambda_p = 1000.0;
  int epochs = 30;
  int batch = 32;
  int steps_per_epoch = 0;  // 0: one pass worth of segments
  double lr = 1e-3;
  double time_scale_lr = 1e-3;
  double decoder_sigma_db = 3.0;  // fixed decoder std dev, in dB
  std::uint64_t seed = 1;
  std::vector<int> hidden{512, 256};
};

struct ImageTrainConfig {
  int latent_dim = 48;
  int epochs = 10;
  int batch = 32;
  int steps_per_epoch = 0;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::vector<int> hidden{256};
};

struct RefineConfig {
  double lambda_cycle = 10.0;
  int epochs = 10;  // audio epochs
  int batch = 32;
  int steps_per_epoch = 0;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_metric;  // round-trip SNR per epoch for refinement
  bool diverged = false;
  std::string message;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

namespace detail {

inline void check_divergence(double loss) {
  if (!std::isfinite(loss) || loss > kDivergenceLoss)
    throw NumericError("training diverged (loss " + std::to_string(loss) + ")");
}

inline Mat<float> gather(const Mat<float>& data, const std::vector<int>& idx) { return data(Eigen::all, idx); }

}  // namespace detail

/// Audio VAE training. Per step: recombined reconstruction over triplets (or
/// plain ELBO) plus lambda_p times the pair smoothness loss, one Adam update.
/// On divergence the last completed epoch is restored and the log flags it.
inline AudioModel train_audio(const Corpus& corpus, const AudioTrainConfig& cfg, TrainLog* log_out = nullptr,
                              const EpochCallback& on_epoch = {}) {
  require(cfg.latent_dim > 0 && cfg.batch > 0 && cfg.epochs >= 0, "train_audio: bad config");
  require(cfg.lambda_p >= 0.0, "train_audio: lambda_p must be >= 0");
  const int m = cfg.disentangle ? cfg.style_dim : 0;
  if (cfg.disentangle) require(m > 0 && m < cfg.latent_dim, "train_audio: need 0 < m < d");
  require(!corpus.segments.empty(), "train_audio: empty corpus");

  AudioModel model;
  model.frontend = corpus.frontend;
  model.style_dim = m;
  model.vae = make_vae<float>({corpus.segment_dim(), cfg.hidden, cfg.latent_dim, Activation::Identity}, cfg.seed);
  model.info = {{"seed", cfg.seed},
                {"disentangle", cfg.disentangle},
                {"smoothness", to_string(cfg.smoothness)},
                {"lambda_p", cfg.lambda_p},
                {"decoder_sigma_db", cfg.decoder_sigma_db},
                {"batch", cfg.batch}};

  const Mat<float> data = audio_inputs(model, segment_matrix(corpus));
  const bool use_pairs = cfg.smoothness != SmoothnessVariant::None && cfg.lambda_p > 0.0;
  std::optional<TripletSampler> triplets;
  std::optional<PairSampler> pairs;
  if (cfg.disentangle) triplets.emplace(corpus);
  if (use_pairs) pairs.emplace(corpus);

  Rng rng(cfg.seed ^ 0xA0D10ULL);
  AdamState<float> adam;
  adam.lr = cfg.lr;
  AdamState<float> scale_adam;
  scale_adam.lr = cfg.time_scale_lr;
  // The network works in normalised units; the objective is rescaled so the
  // reconstruction term there has unit weight.
  const double sigma_n = cfg.decoder_sigma_db / model.norm.scale;
  const double unit = sigma_n * sigma_n;
  const auto beta = static_cast<float>(unit);
  Tensors<float> log_s{Mat<float>::Zero(1, 1)};

  const int d = cfg.latent_dim;
  const int B = cfg.batch;
  const int steps = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch
                                            : std::max(1, static_cast<int>(corpus.segments.size()) / B);
  TrainLog local;
  TrainLog& tl = log_out ? *log_out : local;
  MlpVae<float> last_good = model.vae;
  float last_good_scale = 0.0f;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    try {
      for (int step = 0; step < steps; ++step) {
        double loss = 0.0;
        Tensors<float> grads;
        if (cfg.disentangle) {
          std::vector<int> ai(B), bi(B), aj(B);
          for (int k = 0; k < B; ++k) {
            const TripletSample t = triplets->sample(rng);
            ai[k] = t.ai;
            bi[k] = t.bi;
            aj[k] = t.aj;
          }
          const Mat<float> n_bi = normal_noise<float>(rng, d, B), n_aj = normal_noise<float>(rng, d, B);
          auto r = recombined_reconstruction_loss(model.vae, detail::gather(data, ai), detail::gather(data, bi),
                                                  detail::gather(data, aj), m, n_bi, n_aj, nullptr, false, beta);
          loss = r.loss;
          grads = std::move(r.grads);
        } else {
          std::vector<int> idx(B);
          for (int k = 0; k < B; ++k) idx[k] = static_cast<int>(rng.index(corpus.segments.size()));
          auto r = elbo_loss_and_grads(model.vae, detail::gather(data, idx), normal_noise<float>(rng, d, B), beta);
          loss = r.loss;
          grads = std::move(r.grads);
        }
        Tensors<float> scale_grad{Mat<float>::Zero(1, 1)};
        if (use_pairs) {
          std::vector<int> pi(B), pj(B);
          Vec<float> dt(B);
          for (int k = 0; k < B; ++k) {
            const PairSample p = pairs->sample(rng);
            pi[k] = p.seg_i;
            pj[k] = p.seg_j;
            dt[k] = static_cast<float>(p.gap());
          }
          auto pr = smoothness_through_encoder(model.vae, cfg.smoothness, detail::gather(data, pi),
                                               detail::gather(data, pj), dt, log_s[0](0, 0), m,
                                               static_cast<float>(cfg.lambda_p * unit), grads);
          loss += cfg.lambda_p * unit * pr.loss;
          scale_grad[0](0, 0) = pr.d_log_s;
        }
        loss /= unit;
        detail::check_divergence(loss);
        adam_step(model.vae.params, grads, adam);
        if (use_pairs) adam_step(log_s, scale_grad, scale_adam);
        total += loss;
      }
    } catch (const NumericError& e) {
      model.vae = last_good;
      model.log_time_scale = last_good_scale;
      tl.diverged = true;
      tl.message = e.what();
      av::log(LogLevel::Error, std::string("train_audio: ") + e.what() + "; restored epoch " + std::to_string(epoch));
      return model;
    }
    tl.epoch_loss.push_back(total / steps);
    model.log_time_scale = log_s[0](0, 0);
    last_good = model.vae;
    last_good_scale = log_s[0](0, 0);
    model.info["epoch"] = epoch + 1;
    av::log(LogLevel::Debug, "train_audio epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(total / steps));
    if (on_epoch) on_epoch(epoch, total / steps);
  }
  return model;
}

/// Plain ELBO training of the per-frame image VAE.
inline ImageModel train_image(const ImageCorpus& images, const ImageTrainConfig& cfg, TrainLog* log_out = nullptr,
                              const EpochCallback& on_epoch = {}) {
  require(!images.images.empty(), "train_image: empty corpus");
  require(cfg.latent_dim > 0 && cfg.batch > 0, "train_image: bad config");
  ImageModel model;
  model.size = images.size;
  model.vae = make_vae<float>({images.size * images.size, cfg.hidden, cfg.latent_dim, Activation::Sigmoid}, cfg.seed);
  model.info = {{"seed", cfg.seed}, {"batch", cfg.batch}};
  const Mat<float> data = images.matrix().cast<float>();
  Rng rng(cfg.seed ^ 0x1AA6EULL);
  AdamState<float> adam;
  adam.lr = cfg.lr;
  const int B = cfg.batch;
  const int steps = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : std::max(1, static_cast<int>(data.cols()) / B);
  TrainLog local;
  TrainLog& tl = log_out ? *log_out : local;
  MlpVae<float> last_good = model.vae;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    try {
      for (int step = 0; step < steps; ++step) {
        std::vector<int> idx(B);
        for (int k = 0; k < B; ++k) idx[k] = static_cast<int>(rng.index(static_cast<std::size_t>(data.cols())));
        auto r = elbo_loss_and_grads(model.vae, detail::gather(data, idx), normal_noise<float>(rng, cfg.latent_dim, B));
        detail::check_divergence(r.loss);
        adam_step(model.vae.params, r.grads, adam);
        total += r.loss;
      }
    } catch (const NumericError& e) {
      model.vae = last_good;
      tl.diverged = true;
      tl.message = e.what();
      av::log(LogLevel::Error, std::string("train_image: ") + e.what());
      return model;
    }
    tl.epoch_loss.push_back(total / steps);
    last_good = model.vae;
    model.info["epoch"] = epoch + 1;
    if (on_epoch) on_epoch(epoch, total / steps);
  }
  return model;
}

template <class S>
struct CycleResult {
  S loss = 0;
  Tensors<S> grads;  // image VAE parameters
  Mat<S> d_z;        // gradient w.r.t. the input content latents
};

/// Mean over columns of |E_V(D_V(z_c)) - z_c|_1, image modules on means.
template <class S>
CycleResult<S> cycle_loss(const Mat<S>& z_c, const MlpVae<S>& image_vae, BranchTrace* trace = nullptr) {
  if (z_c.rows() != image_vae.latent_dim())
    throw ArgumentError("cycle_loss: content dimension " + std::to_string(z_c.rows()) + " != image latent " +
                        std::to_string(image_vae.latent_dim()));
  const auto B = static_cast<S>(z_c.cols());
  DecodeTape<S> dt;
  EncodeTape<S> et;
  const Mat<S> img = decode_forward(image_vae, z_c, &dt, trace);
  const LatentGaussian<S> lg = encode_forward(image_vae, img, &et, trace);
  const Mat<S> diff = lg.mu - z_c;
  if (trace) trace->add_signs(diff);

  CycleResult<S> out;
  out.loss = diff.cwiseAbs().sum() / B;
  out.grads = zeros_like(image_vae.params);
  const Mat<S> sign = diff.unaryExpr([](S v) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); }) / B;
  const Mat<S> d_img = encode_backward(image_vae, et, sign, Mat<S>::Zero(lg.mu.rows(), lg.mu.cols()), out.grads);
  out.d_z = decode_backward(image_vae, dt, d_img, out.grads) - sign;
  return out;
}

/// Mean round-trip SNR over utterances.
inline double mean_roundtrip_snr(const AudioModel& audio, const ContentMap& map, const std::vector<MelSpectrogram>& mels) {
  double acc = 0.0;
  for (const auto& mel : mels) {
    const MelSpectrogram rec = roundtrip_with(audio, mel, map);
    acc += snr_db(covered_frames(mel, audio.frontend.segment_frames, audio.frontend.segment_hop), rec.frames);
  }
  return mels.empty() ? 0.0 : acc / static_cast<double>(mels.size());
}

/// Joint refinement of the image VAE: alternating image-ELBO and cycle batches
/// (content latents drawn from the frozen audio posterior), lambda_cycle-weighted.
inline LinkedModel refine_joint(const AudioModel& audio, const ImageModel& image, const Corpus& corpus,
                                const ImageCorpus& images, const RefineConfig& cfg, TrainLog* log_out = nullptr,
                                const std::vector<MelSpectrogram>& monitor = {}) {
  check_link(audio, image);
  require(cfg.lambda_cycle >= 0.0, "refine_joint: lambda_cycle must be >= 0");
  LinkedModel linked = make_linked(audio, image, {{"lambda_cycle", cfg.lambda_cycle}, {"refine_epochs", cfg.epochs}});
  ImageModel& img = linked.image;

  const Mat<float> audio_data = audio_inputs(audio, segment_matrix(corpus));
  const Mat<float> image_data = images.matrix().cast<float>();
  Rng rng(cfg.seed ^ 0xC1C1EULL);
  AdamState<float> adam;
  adam.lr = cfg.lr;
  const int B = cfg.batch;
  const int steps = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : std::max(1, static_cast<int>(audio_data.cols()) / B);
  const int d_img = img.latent_dim();
  TrainLog local;
  TrainLog& tl = log_out ? *log_out : local;
  MlpVae<float> last_good = img.vae;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    try {
      for (int step = 0; step < steps; ++step) {
        std::vector<int> idx(B);
        for (int k = 0; k < B; ++k) idx[k] = static_cast<int>(rng.index(static_cast<std::size_t>(image_data.cols())));
        auto r = elbo_loss_and_grads(img.vae, detail::gather(image_data, idx), normal_noise<float>(rng, d_img, B));
        detail::check_divergence(r.loss);
        adam_step(img.vae.params, r.grads, adam);

        for (int k = 0; k < B; ++k) idx[k] = static_cast<int>(rng.index(static_cast<std::size_t>(audio_data.cols())));
        const LatentGaussian<float> post = encode(audio.vae, detail::gather(audio_data, idx));
        const Mat<float> z = reparameterize(post, normal_noise<float>(rng, audio.latent_dim(), B));
        auto c = cycle_loss(Mat<float>(content_rows(z, audio.style_dim)), img.vae);
        const double weighted = cfg.lambda_cycle * c.loss;
        detail::check_divergence(weighted);
        if (cfg.lambda_cycle > 0.0) {
          for (auto& g : c.grads) g *= static_cast<float>(cfg.lambda_cycle);
          adam_step(img.vae.params, c.grads, adam);
        }
        total += r.loss + weighted;
      }
    } catch (const NumericError& e) {
      img.vae = last_good;
      tl.diverged = true;
      tl.message = e.what();
      av::log(LogLevel::Error, std::string("refine_joint: ") + e.what());
      return linked;
    }
    last_good = img.vae;
    tl.epoch_loss.push_back(total / steps);
    if (!monitor.empty()) {
      const double snr = mean_roundtrip_snr(linked.audio, image_cycle_map(linked.image), monitor);
      tl.epoch_metric.push_back(snr);
      av::log(LogLevel::Info, "refine epoch " + std::to_string(epoch + 1) + " round-trip SNR " + std::to_string(snr) + " dB");
    }
  }
  return linked;
}

}  // namespace av
