// End-to-end acceptance run on the synthetic corpus (8 speakers x 12 phonemes,
// d = 64, m = 16). Prints one PASS/FAIL line per criterion; exit status 1 if any fail.

#include "audioviewer/config.hpp"
#include "audioviewer/grad_check.hpp"
#include "audioviewer/models.hpp"
#include "audioviewer/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace av;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

int failures = 0;

void report(int id, const std::string& name, Verdict v, double secs, double limit_s) {
  v.check(secs < limit_s, fmt("%.1f s < %.0f s", secs, limit_s));
  std::printf("%s  %d. %s: %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str());
  std::fflush(stdout);
  failures += v.pass ? 0 : 1;
}

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

std::vector<MelSpectrogram> mels_of(const Corpus& c) {
  std::vector<MelSpectrogram> out;
  for (const auto& u : c.utterances) out.push_back(u.mel);
  return out;
}

struct Motion {
  double velocity = 0.0, acceleration = 0.0;
};

Motion mean_motion(const AudioModel& m, const std::vector<MelSpectrogram>& mels) {
  Motion out;
  for (const auto& mel : mels) {
    const LatentTrajectory t = latent_trajectory(m, mel);
    out.velocity += velocity(t);
    out.acceleration += acceleration(t);
  }
  out.velocity /= static_cast<double>(mels.size());
  out.acceleration /= static_cast<double>(mels.size());
  return out;
}

// ---------------------------------------------------------------------------
// 1. Gradient gate

// Gradients below 1e-6 * max(1, |loss|) count as zero: central differences of a
// structurally zero gradient return round-off of order 1e-15 * |loss| / eps.
constexpr double kGradFloor = 1e-6;

double floor_for(double loss) { return kGradFloor * std::max(1.0, std::abs(loss)); }

double worst_of(const GradCheckReport& r) { return r.checked == 0 ? INFINITY : r.max_rel_error; }

template <class Fn>
double gate(const Tensors<double>& params, Fn&& fn) {
  BranchTrace t;
  const double loss = fn(params, &t).loss;
  return worst_of(grad_check(params, fn, 1e-4, floor_for(loss)));
}

void gradient_gate() {
  const auto t0 = Clock::now();
  double elbo = 0.0, rr = 0.0, cycle = 0.0, cycle_z = 0.0;
  double smooth[3] = {0.0, 0.0, 0.0}, smooth_s[3] = {0.0, 0.0, 0.0};
  const SmoothnessVariant variants[3] = {SmoothnessVariant::Mse, SmoothnessVariant::Q, SmoothnessVariant::LogMse};

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 7919);
    const auto vae = make_vae<double>({7, {6}, 4, Activation::Identity}, seed);
    MlpVae<double> probe = vae;

    const MatrixXd x = random_matrix(7, 3, rng), noise = random_matrix(4, 3, rng);
    elbo = std::max(elbo, gate(vae.params, [&](const Tensors<double>& p, BranchTrace* tr) {
      probe.params = p;
      auto r = elbo_loss_and_grads(probe, x, noise, 1.0, tr);
      return GradEval{r.loss, std::move(r.grads)};
    }));

    const MatrixXd xi = random_matrix(7, 3, rng), xj = random_matrix(7, 3, rng);
    VectorXd dt(3);
    for (int k = 0; k < 3; ++k) dt[k] = rng.uniform(0.01, 0.8);
    const double log_s = rng.uniform(-1.0, 1.0);
    for (int v = 0; v < 3; ++v) {
      smooth[v] = std::max(smooth[v], gate(vae.params, [&](const Tensors<double>& p, BranchTrace* tr) {
        probe.params = p;
        auto g = zeros_like(p);
        const auto r = smoothness_through_encoder(probe, variants[v], xi, xj, dt, log_s, 1, 1.0, g, tr);
        return GradEval{r.loss, std::move(g)};
      }));
      Tensors<double> sink = zeros_like(vae.params);
      const double analytic = smoothness_through_encoder(vae, variants[v], xi, xj, dt, log_s, 1, 1.0, sink).d_log_s;
      const double h = 1e-5;
      auto at = [&](double s) {
        Tensors<double> g = zeros_like(vae.params);
        return smoothness_through_encoder(vae, variants[v], xi, xj, dt, s, 1, 1.0, g).loss;
      };
      smooth_s[v] = std::max(smooth_s[v], relative_error(analytic, (at(log_s + h) - at(log_s - h)) / (2 * h), floor_for(at(log_s))));
    }

    const MatrixXd ai = random_matrix(7, 3, rng), bi = random_matrix(7, 3, rng), aj = random_matrix(7, 3, rng);
    const MatrixXd nb = random_matrix(4, 3, rng), na = random_matrix(4, 3, rng);
    rr = std::max(rr, gate(vae.params, [&](const Tensors<double>& p, BranchTrace* tr) {
      probe.params = p;
      auto r = recombined_reconstruction_loss(probe, ai, bi, aj, 2, nb, na, tr, false, 1.0);
      return GradEval{r.loss, std::move(r.grads)};
    }));

    const auto image = make_vae<double>(image_vae_shape(3, 9), seed + 100);
    MlpVae<double> iprobe = image;
    const MatrixXd z = random_matrix(3, 4, rng);
    cycle = std::max(cycle, gate(image.params, [&](const Tensors<double>& p, BranchTrace* tr) {
      iprobe.params = p;
      auto r = cycle_loss(z, iprobe, tr);
      return GradEval{r.loss, std::move(r.grads)};
    }));
    BranchTrace tb;
    const auto base = cycle_loss(z, image, &tb);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      MatrixXd zp = z, zm = z;
      zp.data()[i] += h;
      zm.data()[i] -= h;
      BranchTrace tp, tm;
      const double fp = cycle_loss(zp, image, &tp).loss, fm = cycle_loss(zm, image, &tm).loss;
      if (tp.bits != tb.bits || tm.bits != tb.bits) continue;
      cycle_z = std::max(cycle_z, relative_error(base.d_z.data()[i], (fp - fm) / (2 * h), floor_for(base.loss)));
    }
  }

  Verdict v;
  const double tol = 1e-4;
  v.check(elbo <= tol, fmt("ELBO %.2e", elbo));
  const char* names[3] = {"MSE", "Q", "logMSE"};
  for (int k = 0; k < 3; ++k) {
    const double w = std::max(smooth[k], smooth_s[k]);
    v.check(w <= tol, std::string("L_p,") + names[k] + fmt(" %.2e", w));
  }
  v.check(rr <= tol, fmt("L_rr %.2e", rr));
  v.check(std::max(cycle, cycle_z) <= tol, fmt("L_cycle %.2e", std::max(cycle, cycle_z)));
  report(1, "gradient gate (20 seeds, max rel err <= 1e-4)", v, seconds_since(t0), 120.0);
}

// ---------------------------------------------------------------------------
// 2. KL oracle

void kl_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  const int dims = 8, samples = 1000000;
  for (int trial = 0; trial < 50; ++trial) {
    LatentGaussian<double> lg;
    lg.mu = random_matrix(dims, 1, rng);
    lg.log_var.resize(dims, 1);
    for (int i = 0; i < dims; ++i) lg.log_var(i, 0) = rng.uniform(-2.0, 2.0);
    const double exact = kl_diag_gaussian(lg);
    // E_q[log q(z) - log p(z)]
    double acc = 0.0;
    for (int s = 0; s < samples; ++s) {
      double term = 0.0;
      for (int i = 0; i < dims; ++i) {
        const double e = rng.normal();
        const double z = lg.mu(i, 0) + std::exp(0.5 * lg.log_var(i, 0)) * e;
        term += -0.5 * e * e - 0.5 * lg.log_var(i, 0) + 0.5 * z * z;
      }
      acc += term;
    }
    worst = std::max(worst, std::abs(acc / samples - exact) / exact);
  }
  Verdict v;
  v.check(worst <= 0.01, fmt("worst relative gap %.3f%% over 50 posteriors", 100.0 * worst));
  report(2, "KL closed form vs 1e6-sample Monte Carlo", v, seconds_since(t0), 60.0);
}

// ---------------------------------------------------------------------------
// 3. PCA exactness

void pca_exactness(const Corpus& train, const Corpus& val) {
  const auto t0 = Clock::now();
  const MatrixXd data = segment_matrix(train), held = segment_matrix(val);
  const PcaSpectrum spectrum = pca_decompose(data);
  const double n = static_cast<double>(data.cols());
  Verdict v;
  double worst_mse = 0.0, worst_cov = 0.0, prev_train = -INFINITY, prev_held = -INFINITY;
  bool monotone = true;
  std::string snrs;
  for (int zd : {8, 16, 32, 64}) {
    const PcaCodec c = pca_from_spectrum(spectrum, zd);
    const MatrixXd z = pca_encode(c, data);
    const double mse = (pca_decode(c, z) - data).squaredNorm() / n;
    const double discarded = spectrum.eigenvalues.tail(spectrum.eigenvalues.size() - zd).sum();
    worst_mse = std::max(worst_mse, std::abs(mse - discarded) / discarded);
    const MatrixXd cov = z * z.transpose() / n;
    worst_cov = std::max(worst_cov, (cov - MatrixXd::Identity(zd, zd)).cwiseAbs().maxCoeff());
    const double s_train = snr_db(data, pca_decode(c, z));
    const double s_held = snr_db(held, pca_decode(c, pca_encode(c, held)));
    monotone = monotone && s_train >= prev_train && s_held >= prev_held;
    prev_train = s_train;
    prev_held = s_held;
    snrs += fmt(" %.0f:%.2f/%.2f", zd, s_train, s_held);
  }
  v.check(worst_mse <= 1e-6, fmt("MSE vs discarded eigenvalues rel %.1e", worst_mse));
  v.check(worst_cov <= 0.05, fmt("whitened covariance max |C - I| %.1e", worst_cov));
  v.check(monotone, "SNR dB train/held-out by Z_D" + snrs);
  report(3, "PCA exactness", v, seconds_since(t0), 60.0);
}

// ---------------------------------------------------------------------------
// 6. Disentanglement ordering, bootstrapped over held-out segments

struct Ordering {
  double content_same_phone = 0.0, content_same_speaker = 0.0, style_same_phone = 0.0, style_same_speaker = 0.0;
  bool holds() const {
    return content_same_phone < content_same_speaker && style_same_phone > style_same_speaker;
  }
};

/// Means over pairs (i < j) weighted by bootstrap multiplicities.
Ordering pair_means(const MatrixXd& dc, const MatrixXd& ds, const std::vector<LabeledSegment>& segs,
                    const std::vector<double>& weight) {
  double wp = 0.0, ws = 0.0;
  Ordering o;
  const auto n = static_cast<Eigen::Index>(segs.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weight[static_cast<std::size_t>(i)] == 0.0) continue;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double w = weight[static_cast<std::size_t>(i)] * weight[static_cast<std::size_t>(j)];
      if (w == 0.0) continue;
      const auto& a = segs[static_cast<std::size_t>(i)];
      const auto& b = segs[static_cast<std::size_t>(j)];
      if (a.phoneme == b.phoneme && a.speaker != b.speaker) {
        o.content_same_phone += w * dc(i, j);
        o.style_same_phone += w * ds(i, j);
        wp += w;
      } else if (a.phoneme != b.phoneme && a.speaker == b.speaker) {
        o.content_same_speaker += w * dc(i, j);
        o.style_same_speaker += w * ds(i, j);
        ws += w;
      }
    }
  }
  o.content_same_phone /= wp;
  o.style_same_phone /= wp;
  o.content_same_speaker /= ws;
  o.style_same_speaker /= ws;
  return o;
}

MatrixXd pairwise(const MatrixXd& pts) {
  const VectorXd sq = pts.colwise().squaredNorm();
  MatrixXd g = -2.0 * pts.transpose() * pts;
  g.colwise() += sq;
  g.rowwise() += sq.transpose();
  return g.cwiseMax(0.0).cwiseSqrt();
}

void disentanglement(const AudioModel& model, const Corpus& val) {
  const auto t0 = Clock::now();
  const MatrixXd z = encode_means(model, audio_inputs(model, segment_matrix(val))).cast<double>();
  const int m = model.style_dim;
  const MatrixXd dc = pairwise(z.bottomRows(z.rows() - m)), ds = pairwise(z.topRows(m));
  const std::size_t n = val.segments.size();
  const Ordering full = pair_means(dc, ds, val.segments, std::vector<double>(n, 1.0));
  Rng rng(606);
  int held = 0;
  for (int b = 0; b < 100; ++b) {
    std::vector<double> w(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) w[rng.index(n)] += 1.0;
    held += pair_means(dc, ds, val.segments, w).holds() ? 1 : 0;
  }
  Verdict v;
  v.check(full.holds(), fmt("content %.3f (same phoneme) vs %.3f (same speaker)", full.content_same_phone,
                            full.content_same_speaker) +
                            fmt(", style %.3f vs %.3f", full.style_same_phone, full.style_same_speaker));
  v.check(held >= 80, fmt("ordering holds in %.0f/100 bootstrap resamples of %.0f segments", held, static_cast<double>(n)));
  report(6, "disentanglement ordering on held-out speakers", v, seconds_since(t0), 1800.0);
}

// ---------------------------------------------------------------------------
// 7. MDS

void mds_checks(const AudioModel& base, const AudioModel& smooth, const MelSpectrogram& utterance) {
  const auto t0 = Clock::now();
  Verdict v;
  MatrixXd tri = MatrixXd::Zero(3, 6);
  tri(1, 0) = 3.0;
  tri(2, 4) = 4.0;
  const MatrixXd c = mds_embed(tri, 2).coords;
  const double tri_err = std::max({std::abs((c.row(0) - c.row(1)).norm() - 3.0), std::abs((c.row(0) - c.row(2)).norm() - 4.0),
                                   std::abs((c.row(1) - c.row(2)).norm() - 5.0)});
  v.check(tri_err <= 1e-8, fmt("3-4-5 error %.1e", tri_err));

  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd low = random_matrix(25, 3, rng, 1.0 + trial);
    const Eigen::HouseholderQR<MatrixXd> qr(random_matrix(10, 10, rng));
    const MatrixXd q = qr.householderQ();
    const MatrixXd high = (low * q.topRows(3)).rowwise() + random_matrix(1, 10, rng, 5.0).row(0);
    const MatrixXd got = mds_embed(high, 3).coords;
    const MatrixXd d_true = pairwise(low.transpose()), d_got = pairwise(got.transpose());
    worst = std::max(worst, (d_got - d_true).cwiseAbs().maxCoeff() / d_true.maxCoeff());
  }
  v.check(worst <= 1e-6, fmt("embeddable sets max rel distance error %.1e", worst));

  const double pb = path_length(mds_embed(latent_trajectory(base, utterance).points, 3).coords);
  const double ps = path_length(mds_embed(latent_trajectory(smooth, utterance).points, 3).coords);
  v.check(ps < pb, fmt("MDS path length smooth %.2f < base %.2f", ps, pb));
  report(7, "MDS correctness", v, seconds_since(t0), 1800.0);
}

// ---------------------------------------------------------------------------
// 9. Collapse with an exact identity image map

ImageModel identity_image(int content_dim) {
  // decoder pads one zero pixel onto a 7x7 frame, encoder drops it again
  const int size = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(content_dim))));
  const int pixels = size * size;
  ImageModel image;
  image.size = size;
  image.vae = make_vae<float>({pixels, {}, content_dim, Activation::Identity}, 1);
  image.vae.params[0].setZero();
  image.vae.params[0].topLeftCorner(content_dim, content_dim).setIdentity();
  image.vae.params[1].setZero();
  image.vae.params[2].setZero();
  image.vae.params[2].topLeftCorner(content_dim, content_dim).setIdentity();
  image.vae.params[3].setZero();
  return image;
}

}  // namespace

int main() {
  set_log_level(LogLevel::Error);
  const auto start = Clock::now();
  const RunConfig defaults;
  std::printf("acceptance: d=%d m=%d, lambda_p=%g, lambda_cycle=%g, %d audio epochs, seed %llu\n", defaults.latent_dim,
              defaults.style_dim, defaults.lambda_p, defaults.lambda_cycle, defaults.epochs,
              static_cast<unsigned long long>(defaults.seed));
  std::fflush(stdout);

  gradient_gate();
  kl_oracle();

  const Corpus corpus = make_corpus();
  const Corpus train = train_split(corpus), val = val_split(corpus);
  const auto val_mels = mels_of(val);
  pca_exactness(train, val);

  // 4. Throughput ordering
  auto t0 = Clock::now();
  const AudioModel full = train_audio(train, audio_train_config(defaults));
  const ImageCorpus images = make_image_corpus(10, 500, 32, defaults.seed);
  const ImageModel image = train_image(images, image_train_config(defaults));
  const LinkedModel linked = refine_joint(full, image, train, images, refine_config(defaults));
  const double unlinked_snr = mean_roundtrip_snr(full, image_cycle_map(image), val_mels);
  const double linked_snr = mean_roundtrip_snr(linked.audio, image_cycle_map(linked.image), val_mels);
  PcaPipeline pca;
  pca.audio = pca_fit(segment_matrix(train), defaults.latent_dim);
  pca.image = pca_fit(images.matrix(), defaults.latent_dim - defaults.style_dim);
  pca.style_dim = defaults.style_dim;
  pca.frontend = full.frontend;
  double pca_snr = 0.0;
  for (const auto& mel : val_mels)
    pca_snr += snr_db(covered_frames(mel, pca.frontend.segment_frames, pca.frontend.segment_hop), pca_roundtrip(pca, mel).frames);
  pca_snr /= static_cast<double>(val_mels.size());
  {
    Verdict v;
    v.check(pca_snr > linked_snr && linked_snr > unlinked_snr,
            fmt("held-out round-trip SNR PCA %.2f > linked %.2f > unlinked %.2f dB", pca_snr, linked_snr, unlinked_snr));
    v.check(linked_snr - unlinked_snr >= 1.0, fmt("linked - unlinked %.2f dB >= 1", linked_snr - unlinked_snr));
    report(4, "throughput ordering", v, seconds_since(t0), 1800.0);
  }

  // 5. Smoothness trade-off
  t0 = Clock::now();
  AudioTrainConfig base_cfg = audio_train_config(defaults);
  base_cfg.disentangle = false;
  base_cfg.smoothness = SmoothnessVariant::None;
  AudioTrainConfig smooth_cfg = base_cfg;
  smooth_cfg.smoothness = SmoothnessVariant::LogMse;
  smooth_cfg.lambda_p = 1000.0;
  const AudioModel base = train_audio(train, base_cfg);
  const AudioModel smooth = train_audio(train, smooth_cfg);
  {
    const Motion mb = mean_motion(base, val_mels), ms = mean_motion(smooth, val_mels);
    const double sb = mean_roundtrip_snr(base, identity_content_map(), val_mels);
    const double ss = mean_roundtrip_snr(smooth, identity_content_map(), val_mels);
    Verdict v;
    v.check(ms.velocity <= 0.6 * mb.velocity, fmt("velocity %.2f vs base %.2f (ratio %.2f)", ms.velocity, mb.velocity,
                                                  ms.velocity / mb.velocity));
    v.check(ms.acceleration <= 0.6 * mb.acceleration,
            fmt("acceleration %.1f vs base %.1f (ratio %.2f)", ms.acceleration, mb.acceleration, ms.acceleration / mb.acceleration));
    v.check(sb >= ss, fmt("self-reconstruction SNR base %.2f >= smooth %.2f dB", sb, ss));
    report(5, "smoothness trade-off (logMSE, lambda_p = 1e3)", v, seconds_since(t0), 1800.0);
  }

  disentanglement(full, val);
  mds_checks(base, smooth, val_mels.front());

  // 8. Pipeline arithmetic
  t0 = Clock::now();
  {
    WaveBuffer wave;
    wave.sample_rate = 16000;
    wave.samples.resize(16000);
    Rng rng(8);
    for (auto& s : wave.samples) s = rng.uniform(-0.5, 0.5);
    const VideoSequence a = translate_stream(linked, wave), b = translate_stream(linked, wave);
    bool same = a.frames.size() == b.frames.size() && a.source_segments == b.source_segments;
    for (std::size_t k = 0; same && k < a.frames.size(); ++k) same = a.frames[k] == b.frames[k];
    Verdict v;
    v.check(a.frames.size() == 21, fmt("%.0f frames from 1 s", static_cast<double>(a.frames.size())));
    v.check(a.frame_rate == 25.0, fmt("%.1f Hz", a.frame_rate));
    v.check(same, "repeated translation bit-exact");
    report(8, "pipeline arithmetic", v, seconds_since(t0), 1800.0);
  }

  // 9. Round-trip collapse
  t0 = Clock::now();
  {
    const LinkedModel collapsed = make_linked(full, identity_image(full.content_dim()));
    bool exact = true;
    double worst = 0.0;
    for (const auto& mel : val_mels) {
      const MatrixXd ref = covered_frames(mel, full.frontend.segment_frames, full.frontend.segment_hop);
      const MelSpectrogram via_image = roundtrip(collapsed, mel), audio_only = autoencode(full, mel);
      exact = exact && via_image.frames == audio_only.frames;
      worst = std::max(worst, std::abs(snr_db(ref, via_image.frames) - snr_db(ref, audio_only.frames)));
    }
    Verdict v;
    v.check(exact && worst == 0.0, fmt("max |SNR difference| %.1e dB over %.0f utterances", worst,
                                       static_cast<double>(val_mels.size())));
    report(9, "round-trip collapse with identity image map", v, seconds_since(t0), 1800.0);
  }

  std::printf("%s: %d of 9 criteria failed (%.0f s)\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures,
              seconds_since(start));
  return failures == 0 ? 0 : 1;
}
