#pragma once

#include "audioviewer/rng.hpp"
#include "audioviewer/synth.hpp"
#include "audioviewer/wav.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

namespace avtest {

inline av::WaveBuffer sine(double freq, double seconds, double amp = 1.0, int sr = 16000) {
  av::WaveBuffer w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(std::lround(seconds * sr));
  w.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k) w.samples[k] = amp * std::sin(2.0 * std::numbers::pi * freq * k / sr);
  return w;
}

inline av::WaveBuffer noise(double seconds, std::uint64_t seed, double amp = 0.5, int sr = 16000) {
  av::Rng rng(seed);
  av::WaveBuffer w;
  w.sample_rate = sr;
  w.samples.resize(static_cast<std::size_t>(std::lround(seconds * sr)));
  for (auto& s : w.samples) s = rng.uniform(-amp, amp);
  return w;
}

/// Small labelled corpus: 3 speakers x 4 phonemes, quick to build.
inline av::Corpus tiny_corpus(std::uint64_t seed = 3) {
  av::CorpusConfig cfg;
  cfg.n_speakers = 3;
  cfg.n_phonemes = 4;
  cfg.utterances_per_speaker = 2;
  cfg.phonemes_per_utterance = 3;
  cfg.seed = seed;
  return av::make_corpus(cfg);
}

/// Fresh scratch directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / ("avtest_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace avtest
