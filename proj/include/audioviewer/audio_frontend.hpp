#pragma once

#include "audioviewer/binary_io.hpp"
#include "audioviewer/common.hpp"
#include "audioviewer/wav.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace av {

struct FrontendConfig {
  int sample_rate = 16000;
  double window_s = 0.025;
  double hop_s = 0.010;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double floor_db = -80.0;
  int segment_frames = 20;  // 200 ms
  int segment_hop = 4;      // 40 ms -> 25 Hz video

  int window_samples() const { return static_cast<int>(std::lround(window_s * sample_rate)); }
  int hop_samples() const { return static_cast<int>(std::lround(hop_s * sample_rate)); }
  int n_bins() const { return window_samples() / 2 + 1; }
  int segment_dim() const { return segment_frames * n_mels; }
};

/// T x (n_fft/2+1) power values, one row per frame.
struct PowerSpectrogram {
  MatrixXd frames;
  double frame_hop_s = 0.010;
  double window_s = 0.025;
};

/// F x (n_fft/2+1) triangular weights.
struct MelFilterBank {
  MatrixXd weights;
  double fmin = 0.0;
  double fmax = 8000.0;
  int n_fft = 400;
  int sample_rate = 16000;

  int size() const { return static_cast<int>(weights.rows()); }
};

/// T x F dB values floored at floor_db; frames are 10 ms apart.
struct MelSpectrogram {
  MatrixXd frames;
  double floor_db = -80.0;
  bool silent = false;  // set when the input carried no energy

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int num_mels() const { return static_cast<int>(frames.cols()); }
};

/// A fixed-length window of a mel spectrogram (T_M x F).
struct MelSegment {
  MatrixXd values;
  int start_frame = 0;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Periodic Hann window.
inline VectorXd hann_window(int n) {
  require(n >= 1, "hann_window: length must be >= 1");
  VectorXd w(n);
  for (int k = 0; k < n; ++k) w[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * k / n));
  return w;
}

/// Number of STFT frames for n samples: one per hop, tail zero-padded.
inline int stft_frame_count(std::size_t n_samples, int hop) { return static_cast<int>(n_samples / static_cast<std::size_t>(hop)); }

/// Windowed power spectrum, bins 0..n/2 of each frame.
///
/// Frame t covers samples [t*hop, t*hop + window); samples past the end of
/// the buffer read as zero, giving floor(N / hop) frames (100 per second).
inline PowerSpectrogram stft_power(const WaveBuffer& wave, const FrontendConfig& cfg = {}) {
  validate(wave);
  require(wave.sample_rate == cfg.sample_rate, "stft_power: sample rate mismatch (no resampling)");
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  if (static_cast<int>(wave.samples.size()) < win)
    throw ArgumentError("stft_power: audio shorter than one window (" + std::to_string(win) + " samples)");

  const int n_bins = win / 2 + 1;
  const int T = stft_frame_count(wave.samples.size(), hop);
  const VectorXd w = hann_window(win);

  // DFT tables; the window size is not a power of two and the per-frame cost is small.
  MatrixXd cos_t(win, n_bins), sin_t(win, n_bins);
  for (int k = 0; k < win; ++k)
    for (int b = 0; b < n_bins; ++b) {
      const auto phase_idx = static_cast<long long>(k) * b % win;
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(phase_idx) / win;
      cos_t(k, b) = std::cos(phase);
      sin_t(k, b) = std::sin(phase);
    }

  MatrixXd framed = MatrixXd::Zero(T, win);
  const auto n = static_cast<long long>(wave.samples.size());
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < win; ++k) {
      const long long idx = static_cast<long long>(t) * hop + k;
      if (idx < n) framed(t, k) = w[k] * wave.samples[static_cast<std::size_t>(idx)];
    }

  const MatrixXd re = framed * cos_t;
  const MatrixXd im = framed * sin_t;
  PowerSpectrogram out;
  out.frames = re.cwiseAbs2() + im.cwiseAbs2();
  out.frame_hop_s = cfg.hop_s;
  out.window_s = cfg.window_s;
  return out;
}

/// Center frequencies (Hz) of an F-filter bank, plus the two outer edges.
inline std::vector<double> mel_band_edges(int n_mels, double fmin, double fmax) {
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (n_mels + 1));
  return edges;
}

/// Triangular filters equally spaced on the mel scale.
inline MelFilterBank mel_filterbank(int n_mels = 80, int n_fft = 400, int sample_rate = 16000, double fmin = 0.0,
                                    double fmax = 8000.0) {
  require(n_mels >= 1 && n_fft >= 2, "mel_filterbank: bad sizes");
  require(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0, "mel_filterbank: need 0 <= fmin < fmax <= sr/2");
  const int n_bins = n_fft / 2 + 1;
  const std::vector<double> edges = mel_band_edges(n_mels, fmin, fmax);

  MelFilterBank fb;
  fb.weights = MatrixXd::Zero(n_mels, n_bins);
  fb.fmin = fmin;
  fb.fmax = fmax;
  fb.n_fft = n_fft;
  fb.sample_rate = sample_rate;
  for (int i = 0; i < n_mels; ++i) {
    const double left = hz_to_mel(edges[i]), center = hz_to_mel(edges[i + 1]), right = hz_to_mel(edges[i + 2]);
    for (int b = 0; b < n_bins; ++b) {
      const double m = hz_to_mel(static_cast<double>(b) * sample_rate / n_fft);
      double v = 0.0;
      if (m > left && m <= center)
        v = (m - left) / (center - left);
      else if (m > center && m < right)
        v = (right - m) / (right - center);
      fb.weights(i, b) = v;
    }
    if (fb.weights.row(i).sum() <= 0.0)
      throw ArgumentError("mel_filterbank: filter " + std::to_string(i) + " covers no FFT bin; too many filters for n_fft");
  }
  return fb;
}

/// Mel energies in dB relative to the utterance maximum, floored.
inline MelSpectrogram to_mel_db(const PowerSpectrogram& power, const MelFilterBank& fb, double floor_db = -80.0) {
  require(power.frames.cols() == fb.weights.cols(), "to_mel_db: bin count mismatch");
  const MatrixXd energy = power.frames * fb.weights.transpose();
  MelSpectrogram mel;
  mel.floor_db = floor_db;
  const double max_e = energy.size() > 0 ? energy.maxCoeff() : 0.0;
  if (!(max_e > 0.0)) {
    log_warn("to_mel_db: silent utterance, returning floor spectrogram");
    mel.frames = MatrixXd::Constant(energy.rows(), energy.cols(), floor_db);
    mel.silent = true;
    return mel;
  }
  mel.frames = energy.unaryExpr([&](double e) {
    if (e <= 0.0) return floor_db;
    return std::max(floor_db, 10.0 * std::log10(e / max_e));
  });
  return mel;
}

/// Full front end: wave -> floored dB mel spectrogram.
inline MelSpectrogram compute_mel(const WaveBuffer& wave, const FrontendConfig& cfg = {}) {
  static thread_local MelFilterBank cached;
  static thread_local bool have_cached = false;
  const int n_fft = cfg.window_samples();
  if (!have_cached || cached.size() != cfg.n_mels || cached.n_fft != n_fft || cached.sample_rate != cfg.sample_rate ||
      cached.fmin != cfg.fmin || cached.fmax != cfg.fmax) {
    cached = mel_filterbank(cfg.n_mels, n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax);
    have_cached = true;
  }
  return to_mel_db(stft_power(wave, cfg), cached, cfg.floor_db);
}

/// Start frames of all complete windows.
inline std::vector<int> segment_starts(int n_frames, int segment_frames, int hop_frames) {
  require(hop_frames > 0 && segment_frames > 0, "segment: hop and length must be positive");
  if (n_frames < segment_frames)
    throw ArgumentError("segment: mel has " + std::to_string(n_frames) + " frames, need at least " +
                        std::to_string(segment_frames));
  std::vector<int> starts;
  for (int s = 0; s + segment_frames <= n_frames; s += hop_frames) starts.push_back(s);
  return starts;
}

/// Overlapping windows starting at 0, hop, 2*hop, ...; the partial tail is dropped.
inline std::vector<MelSegment> segment(const MelSpectrogram& mel, int segment_frames = 20, int hop_frames = 4) {
  std::vector<MelSegment> out;
  for (int s : segment_starts(mel.num_frames(), segment_frames, hop_frames))
    out.push_back({mel.frames.middleRows(s, segment_frames), s});
  return out;
}

/// Row-major (time-major) flattening used as model input.
inline VectorXd flatten(const MatrixXd& m) {
  VectorXd v(m.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), m.rows(), m.cols()) = m;
  return v;
}

inline MatrixXd unflatten(const VectorXd& v, int rows, int cols) {
  require(v.size() == static_cast<Eigen::Index>(rows) * cols, "unflatten: size mismatch");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), rows, cols);
}

// "AVMS" mel dump: u32 version, u32 T, u32 F, then T*F float32 row-major.

inline constexpr std::uint32_t kMelDumpVersion = 1;

inline std::vector<std::uint8_t> encode_mel_dump(const MelSpectrogram& mel) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, "AVMS");
  io::put_u32(out, kMelDumpVersion);
  io::put_u32(out, static_cast<std::uint32_t>(mel.num_frames()));
  io::put_u32(out, static_cast<std::uint32_t>(mel.num_mels()));
  for (Eigen::Index t = 0; t < mel.frames.rows(); ++t)
    for (Eigen::Index f = 0; f < mel.frames.cols(); ++f) io::put_f32(out, static_cast<float>(mel.frames(t, f)));
  return out;
}

inline MelSpectrogram decode_mel_dump(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("AVMS");
  const auto version = r.u32();
  if (version != kMelDumpVersion) throw FormatError("AVMS: unsupported version " + std::to_string(version));
  const auto T = r.u32(), F = r.u32();
  if (static_cast<std::uint64_t>(T) * F * 4 != r.remaining()) throw FormatError("AVMS: payload size mismatch");
  MelSpectrogram mel;
  mel.frames.resize(T, F);
  for (std::uint32_t t = 0; t < T; ++t)
    for (std::uint32_t f = 0; f < F; ++f) mel.frames(t, f) = r.f32();
  return mel;
}

}  // namespace av
