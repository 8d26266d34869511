#pragma once

#include "audioviewer/common.hpp"
#include "audioviewer/corpus.hpp"
#include "audioviewer/rng.hpp"
#include "audioviewer/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace av {

/// Voice of a synthetic speaker (the style factor).
struct SpeakerParams {
  double f0 = 120.0;                                  // Hz, 80..400
  std::array<double, 4> timbre{1.0, 0.6, 0.4, 0.3};   // amplitudes of harmonics 1-4
  double vibrato = 0.0;                               // relative f0 modulation depth
  int max_harmonics = 64;
  std::uint64_t jitter_seed = 0;
};

struct Formant {
  double freq = 500.0;  // Hz
  double bandwidth = 100.0;
};

/// Spectral envelope of a synthetic phoneme (the content factor).
struct PhonemeTemplate {
  int id = 0;
  std::vector<Formant> formants;
  double duration_ms = 250.0;
};

struct SynthOptions {
  int sample_rate = 16000;
  double crossfade_s = 0.010;
  double noise_level = 0.002;     // white noise relative to peak, before normalisation
  double formant_jitter = 0.02;   // per-rendering relative formant perturbation
  double envelope_floor = 0.02;   // gain between formants
  double peak = 0.9;
};

inline void validate(const SpeakerParams& s) {
  require(s.f0 >= 80.0 && s.f0 <= 400.0, "speaker f0 must lie in [80, 400] Hz");
  for (double a : s.timbre) require(a >= 0.0 && a <= 1.0, "speaker timbre amplitudes must lie in [0, 1]");
  require(s.max_harmonics >= 1, "speaker needs at least one harmonic");
}

inline void validate(const PhonemeTemplate& p) {
  require(p.formants.size() >= 1, "phoneme needs at least one formant");
  for (const auto& f : p.formants) require(f.freq > 0.0 && f.freq < 8000.0, "formant must lie in (0, 8000) Hz");
  require(p.duration_ms >= 200.0, "phoneme duration must be >= 200 ms");
}

inline double harmonic_amplitude(const SpeakerParams& s, int h) {
  if (h <= 4) return s.timbre[static_cast<std::size_t>(h - 1)];
  return s.timbre[3] * 4.0 / h;
}

inline double formant_gain(const std::vector<Formant>& formants, double f, double floor) {
  double g = floor;
  for (const auto& fm : formants) {
    const double x = (f - fm.freq) / fm.bandwidth;
    g += 1.0 / (1.0 + x * x);
  }
  return g;
}

/// Start/end times of each phoneme in an utterance rendered from `phonemes`.
inline std::vector<PhonemeSpan> phoneme_timeline(const std::vector<PhonemeTemplate>& phonemes, int sample_rate = 16000) {
  std::vector<PhonemeSpan> out;
  long long pos = 0;
  for (const auto& p : phonemes) {
    const auto len = static_cast<long long>(std::lround(p.duration_ms * 1e-3 * sample_rate));
    out.push_back({p.id, static_cast<double>(pos) / sample_rate, static_cast<double>(pos + len) / sample_rate});
    pos += len;
  }
  return out;
}

/// Harmonic source shaped by formant resonances, phonemes joined by crossfades,
/// peak-normalised.
inline WaveBuffer synth_utterance(const SpeakerParams& speaker, const std::vector<PhonemeTemplate>& phonemes, Rng& rng,
                                  const SynthOptions& opt = {}) {
  validate(speaker);
  require(!phonemes.empty(), "synth_utterance: empty phoneme list");
  for (const auto& p : phonemes) validate(p);

  const int sr = opt.sample_rate;
  const double nyquist = sr / 2.0;
  const auto timeline = phoneme_timeline(phonemes, sr);
  const auto total = static_cast<std::size_t>(std::lround(timeline.back().t_end * sr));

  Rng jitter(speaker.jitter_seed ^ rng.next_u64());
  const double vib_rate = 4.5 + 2.0 * jitter.uniform();
  const double vib_phase = 2.0 * std::numbers::pi * jitter.uniform();

  // Instantaneous fundamental phase, continuous over the utterance.
  std::vector<double> phase(total), f0_inst(total);
  double acc = 0.0;
  for (std::size_t n = 0; n < total; ++n) {
    const double t = static_cast<double>(n) / sr;
    f0_inst[n] = speaker.f0 * (1.0 + speaker.vibrato * std::sin(2.0 * std::numbers::pi * vib_rate * t + vib_phase));
    phase[n] = acc;
    acc += 2.0 * std::numbers::pi * f0_inst[n] / sr;
  }

  std::vector<double> out(total, 0.0);
  const auto fade = static_cast<long long>(std::lround(opt.crossfade_s * sr));
  const double f0_peak = speaker.f0 * (1.0 + speaker.vibrato);
  int dropped = 0;

  for (std::size_t k = 0; k < phonemes.size(); ++k) {
    std::vector<Formant> formants = phonemes[k].formants;
    for (auto& f : formants) f.freq *= 1.0 + opt.formant_jitter * (2.0 * rng.uniform() - 1.0);

    std::vector<std::pair<int, double>> partials;
    for (int h = 1; h <= speaker.max_harmonics; ++h) {
      if (h * f0_peak >= nyquist) {
        ++dropped;
        continue;
      }
      const double a = harmonic_amplitude(speaker, h) * formant_gain(formants, h * speaker.f0, opt.envelope_floor);
      if (a > 0.0) partials.emplace_back(h, a);
    }

    const auto start = static_cast<long long>(std::lround(timeline[k].t_start * sr));
    const auto end = static_cast<long long>(std::lround(timeline[k].t_end * sr));
    const long long lo = k == 0 ? start : start - fade / 2;
    const long long hi = k + 1 == phonemes.size() ? end : end + fade / 2;
    for (long long n = std::max(0LL, lo); n < std::min<long long>(hi, static_cast<long long>(total)); ++n) {
      double gain = 1.0;
      if (k > 0 && n < start + fade / 2) gain = static_cast<double>(n - lo) / fade;
      if (k + 1 < phonemes.size() && n >= end - fade / 2) gain = std::min(gain, static_cast<double>(hi - n) / fade);
      double v = 0.0;
      for (const auto& [h, a] : partials) v += a * std::sin(h * phase[static_cast<std::size_t>(n)]);
      out[static_cast<std::size_t>(n)] += gain * v;
    }
  }
  if (dropped > 0)
    log_warn("synth_utterance: dropped " + std::to_string(dropped) + " harmonic(s) at or above " +
             std::to_string(static_cast<int>(nyquist)) + " Hz");

  if (opt.noise_level > 0.0) {
    double peak = 0.0;
    for (double v : out) peak = std::max(peak, std::abs(v));
    for (double& v : out) v += opt.noise_level * peak * rng.normal();
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out) v *= opt.peak / peak;
  return {std::move(out), sr};
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusConfig {
  int n_speakers = 8;
  int n_phonemes = 12;
  int utterances_per_speaker = 20;
  int phonemes_per_utterance = 5;
  std::uint64_t seed = 1;
};

/// Van der Corput radical inverse, spreads formant targets evenly.
inline double radical_inverse(int i, int base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * (i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

inline std::vector<PhonemeTemplate> make_phonemes(int n, Rng& rng) {
  std::vector<PhonemeTemplate> out;
  for (int p = 0; p < n; ++p) {
    PhonemeTemplate t;
    t.id = p;
    const double u1 = radical_inverse(p + 1, 2), u2 = radical_inverse(p + 1, 3), u3 = radical_inverse(p + 1, 5);
    t.formants = {{250.0 + 650.0 * u1, 70.0 + 40.0 * rng.uniform()},
                  {900.0 + 1700.0 * u2, 90.0 + 50.0 * rng.uniform()},
                  {2400.0 + 1400.0 * u3, 120.0 + 80.0 * rng.uniform()}};
    t.duration_ms = 220.0 + 100.0 * rng.uniform();
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<SpeakerParams> make_speakers(int n, Rng& rng) {
  std::vector<SpeakerParams> out;
  for (int s = 0; s < n; ++s) {
    SpeakerParams sp;
    const double frac = n > 1 ? static_cast<double>(s) / (n - 1) : 0.5;
    sp.f0 = std::clamp(90.0 * std::pow(280.0 / 90.0, frac) * (1.0 + 0.04 * (2.0 * rng.uniform() - 1.0)), 80.0, 400.0);
    for (auto& a : sp.timbre) a = 0.25 + 0.75 * rng.uniform();
    sp.vibrato = 0.01 + 0.02 * rng.uniform();
    sp.max_harmonics = static_cast<int>(7600.0 / (sp.f0 * (1.0 + sp.vibrato)));
    sp.jitter_seed = rng.next_u64();
    out.push_back(sp);
  }
  return out;
}

/// Validation speakers: every fourth speaker starting at index 2.
inline std::vector<int> default_val_speakers(int n_speakers) {
  std::vector<int> v;
  for (int s = 2; s < n_speakers; s += 4) v.push_back(s);
  return v;
}

/// Everything needed to render a corpus; a pure function of the config.
struct CorpusPlan {
  CorpusConfig config;
  std::vector<SpeakerParams> speakers;
  std::vector<PhonemeTemplate> phonemes;
  struct Item {
    int speaker;
    std::vector<int> phonemes;
    std::uint64_t seed;
  };
  std::vector<Item> utterances;
};

inline CorpusPlan plan_corpus(const CorpusConfig& cfg) {
  require(cfg.n_speakers >= 2, "make_corpus: need at least 2 speakers");
  require(cfg.n_phonemes >= 2, "make_corpus: need at least 2 phonemes");
  require(cfg.utterances_per_speaker >= 1 && cfg.phonemes_per_utterance >= 1, "make_corpus: empty utterances");
  require(cfg.utterances_per_speaker * cfg.phonemes_per_utterance >= cfg.n_phonemes,
          "make_corpus: too few phoneme slots per speaker to cover every phoneme");
  Rng rng(cfg.seed);
  CorpusPlan plan;
  plan.config = cfg;
  plan.phonemes = make_phonemes(cfg.n_phonemes, rng);
  plan.speakers = make_speakers(cfg.n_speakers, rng);
  for (int s = 0; s < cfg.n_speakers; ++s) {
    // Concatenated shuffled permutations guarantee every phoneme per speaker.
    std::vector<int> slots;
    const int need = cfg.utterances_per_speaker * cfg.phonemes_per_utterance;
    while (static_cast<int>(slots.size()) < need) {
      std::vector<int> perm(static_cast<std::size_t>(cfg.n_phonemes));
      for (int p = 0; p < cfg.n_phonemes; ++p) perm[static_cast<std::size_t>(p)] = p;
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
      slots.insert(slots.end(), perm.begin(), perm.end());
    }
    for (int u = 0; u < cfg.utterances_per_speaker; ++u) {
      CorpusPlan::Item item;
      item.speaker = s;
      item.phonemes.assign(slots.begin() + u * cfg.phonemes_per_utterance,
                           slots.begin() + (u + 1) * cfg.phonemes_per_utterance);
      item.seed = rng.next_u64();
      plan.utterances.push_back(std::move(item));
    }
  }
  return plan;
}

inline Utterance render_planned(const CorpusPlan& plan, std::size_t index, const SynthOptions& opt = {}) {
  const auto& item = plan.utterances[index];
  std::vector<PhonemeTemplate> seq;
  for (int p : item.phonemes) seq.push_back(plan.phonemes[static_cast<std::size_t>(p)]);
  Rng rng(item.seed);
  Utterance u;
  u.id = static_cast<int>(index);
  u.speaker = item.speaker;
  u.wave = synth_utterance(plan.speakers[static_cast<std::size_t>(item.speaker)], seq, rng, opt);
  u.timeline = phoneme_timeline(seq, opt.sample_rate);
  u.wav_path = "audio/spk" + std::to_string(item.speaker) + "_utt" + std::to_string(index) + ".wav";
  return u;
}

/// Deterministic labelled speech corpus (speakers x phonemes), split by speaker.
inline Corpus make_corpus(const CorpusConfig& cfg = {}, const SynthOptions& opt = {}) {
  const CorpusPlan plan = plan_corpus(cfg);
  Corpus c;
  c.n_speakers = cfg.n_speakers;
  c.n_phonemes = cfg.n_phonemes;
  c.val_speakers = default_val_speakers(cfg.n_speakers);
  for (int s = 0; s < cfg.n_speakers; ++s)
    if (std::find(c.val_speakers.begin(), c.val_speakers.end(), s) == c.val_speakers.end()) c.train_speakers.push_back(s);
  for (std::size_t i = 0; i < plan.utterances.size(); ++i) add_utterance(c, render_planned(plan, i, opt));
  return c;
}

// ---------------------------------------------------------------------------
// Images

struct ImageCorpus {
  int size = 32;
  std::vector<MatrixXd> images;  // size x size, values in [0, 1]
  std::vector<int> labels;

  /// (size*size) x N matrix, row-major flattened images as columns.
  MatrixXd matrix() const {
    MatrixXd m(size * size, static_cast<Eigen::Index>(images.size()));
    for (std::size_t k = 0; k < images.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = flatten(images[k]);
    return m;
  }
};

struct Stroke {
  double x0, y0, x1, y1;
};

/// Seven-segment style glyph for classes 0-9; further classes get random strokes.
inline std::vector<Stroke> glyph_strokes(int cls, std::uint64_t seed) {
  static constexpr Stroke seg[7] = {{0.3, 0.2, 0.7, 0.2}, {0.7, 0.2, 0.7, 0.5}, {0.7, 0.5, 0.7, 0.8},
                                    {0.3, 0.8, 0.7, 0.8}, {0.3, 0.5, 0.3, 0.8}, {0.3, 0.2, 0.3, 0.5},
                                    {0.3, 0.5, 0.7, 0.5}};
  static constexpr unsigned char digits[10] = {0x3F, 0x06, 0x5B, 0x4F, 0x66, 0x6D, 0x7D, 0x07, 0x7F, 0x6F};
  std::vector<Stroke> out;
  if (cls < 10) {
    for (int b = 0; b < 7; ++b)
      if (digits[cls] & (1 << b)) out.push_back(seg[b]);
    return out;
  }
  Rng rng(seed ^ (0xC1A55ULL * static_cast<std::uint64_t>(cls + 1)));
  for (int k = 0; k < 3; ++k)
    out.push_back({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)});
  return out;
}

inline double segment_distance(double px, double py, const Stroke& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  const double t = len2 > 0 ? std::clamp(((px - s.x0) * dx + (py - s.y0) * dy) / len2, 0.0, 1.0) : 0.0;
  const double ex = px - (s.x0 + t * dx), ey = py - (s.y0 + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

/// Renders strokes under a random affine jitter and brightness.
inline MatrixXd render_glyph(const std::vector<Stroke>& strokes, int size, Rng& rng) {
  const double angle = rng.uniform(-0.15, 0.15);
  const double scale = rng.uniform(0.85, 1.1);
  const double shear = rng.uniform(-0.1, 0.1);
  const double tx = rng.uniform(-0.06, 0.06), ty = rng.uniform(-0.06, 0.06);
  const double brightness = rng.uniform(0.7, 1.0);
  const double half_width = 0.055, aa = 1.0 / size;
  const double c = std::cos(angle), s = std::sin(angle);
  MatrixXd img(size, size);
  for (int r = 0; r < size; ++r)
    for (int col = 0; col < size; ++col) {
      // inverse affine about the centre
      const double x = (col + 0.5) / size - 0.5 - tx, y = (r + 0.5) / size - 0.5 - ty;
      double u = (c * x + s * y) / scale, v = (-s * x + c * y) / scale;
      u -= shear * v;
      double d = 1e9;
      for (const auto& st : strokes) d = std::min(d, segment_distance(u + 0.5, v + 0.5, st));
      img(r, col) = brightness * std::clamp(1.0 - (d - half_width) / aa, 0.0, 1.0);
    }
  return img;
}

inline ImageCorpus make_image_corpus(int n_classes = 10, int per_class = 500, int size = 32, std::uint64_t seed = 1) {
  require(size >= 8, "make_image_corpus: size must be >= 8");
  require(n_classes >= 1 && per_class >= 1, "make_image_corpus: empty corpus");
  ImageCorpus ic;
  ic.size = size;
  Rng rng(seed);
  for (int k = 0; k < per_class; ++k)
    for (int cls = 0; cls < n_classes; ++cls) {
      ic.images.push_back(render_glyph(glyph_strokes(cls, seed), size, rng));
      ic.labels.push_back(cls);
    }
  return ic;
}

}  // namespace av
