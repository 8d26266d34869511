#pragma once

#include "audioviewer/checkpoint.hpp"
#include "audioviewer/corpus.hpp"
#include "audioviewer/pgm.hpp"
#include "audioviewer/synth.hpp"
#include "audioviewer/wav.hpp"

#include <cmath>
#include <filesystem>
#include <string>

namespace av {

inline constexpr int kManifestVersion = 1;

// On disk a corpus is a directory holding manifest.json and the WAV files it
// names (paths relative to the directory). Image corpora live beside it in
// images/, described by images/manifest.json.

inline json corpus_manifest(const Corpus& c) {
  json utts = json::array();
  for (const auto& u : c.utterances) {
    json spans = json::array();
    for (const auto& s : u.timeline)
      spans.push_back({{"label", s.phoneme},
                       {"t_start_ms", std::round(s.t_start * 1e6) / 1e3},
                       {"t_end_ms", std::round(s.t_end * 1e6) / 1e3}});
    utts.push_back({{"id", u.id}, {"wav", u.wav_path}, {"speaker", u.speaker}, {"phonemes", spans}});
  }
  return {{"version", kManifestVersion},
          {"sample_rate", c.frontend.sample_rate},
          {"n_speakers", c.n_speakers},
          {"n_phonemes", c.n_phonemes},
          {"train_speakers", c.train_speakers},
          {"val_speakers", c.val_speakers},
          {"utterances", utts}};
}

inline void save_corpus(const Corpus& c, const std::string& dir) {
  namespace fs = std::filesystem;
  for (const auto& u : c.utterances) {
    require(!u.wav_path.empty(), "save_corpus: utterance " + std::to_string(u.id) + " has no wav path");
    const fs::path p = fs::path(dir) / u.wav_path;
    fs::create_directories(p.parent_path());
    save_wav(p.string(), u.wave);
  }
  io::write_text((fs::path(dir) / "manifest.json").string(), corpus_manifest(c).dump(2) + "\n");
}

/// Reads manifest.json and its WAV files, recomputing mel spectrograms and segments.
inline Corpus load_corpus(const std::string& dir, const FrontendConfig& frontend = {}) {
  namespace fs = std::filesystem;
  const std::string path = (fs::path(dir) / "manifest.json").string();
  const auto bytes = io::read_file(path);
  Corpus c;
  c.frontend = frontend;
  try {
    const json m = json::parse(bytes.begin(), bytes.end());
    if (m.at("version").get<int>() != kManifestVersion) throw FormatError(path + ": unsupported manifest version");
    c.n_speakers = m.at("n_speakers").get<int>();
    c.n_phonemes = m.at("n_phonemes").get<int>();
    c.train_speakers = m.at("train_speakers").get<std::vector<int>>();
    c.val_speakers = m.at("val_speakers").get<std::vector<int>>();
    for (const auto& ju : m.at("utterances")) {
      Utterance u;
      u.id = static_cast<int>(c.utterances.size());
      u.speaker = ju.at("speaker").get<int>();
      u.wav_path = ju.at("wav").get<std::string>();
      for (const auto& js : ju.at("phonemes"))
        u.timeline.push_back({js.at("label").get<int>(), js.at("t_start_ms").get<double>() / 1e3,
                              js.at("t_end_ms").get<double>() / 1e3});
      if (u.speaker < 0 || u.speaker >= c.n_speakers) throw FormatError(path + ": speaker id out of range");
      if (u.timeline.empty()) throw FormatError(path + ": utterance without phonemes");
      for (const auto& s : u.timeline)
        if (s.phoneme < 0 || s.phoneme >= c.n_phonemes) throw FormatError(path + ": phoneme label out of range");
      u.wave = load_wav((fs::path(dir) / u.wav_path).string());
      if (u.wave.sample_rate != frontend.sample_rate)
        throw FormatError(u.wav_path + ": sample rate " + std::to_string(u.wave.sample_rate) + " != " +
                          std::to_string(frontend.sample_rate));
      add_utterance(c, std::move(u));
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return c;
}

inline void save_image_corpus(const ImageCorpus& ic, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json items = json::array();
  for (std::size_t k = 0; k < ic.images.size(); ++k) {
    const std::string name = "img" + std::to_string(k) + ".pgm";
    save_pgm((fs::path(dir) / name).string(), ic.images[k]);
    items.push_back({{"path", name}, {"label", ic.labels[k]}});
  }
  const json m = {{"version", kManifestVersion}, {"size", ic.size}, {"images", items}};
  io::write_text((fs::path(dir) / "manifest.json").string(), m.dump(2) + "\n");
}

inline ImageCorpus load_image_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string path = (fs::path(dir) / "manifest.json").string();
  const auto bytes = io::read_file(path);
  ImageCorpus ic;
  try {
    const json m = json::parse(bytes.begin(), bytes.end());
    ic.size = m.at("size").get<int>();
    for (const auto& it : m.at("images")) {
      MatrixXd img = load_pgm((fs::path(dir) / it.at("path").get<std::string>()).string());
      if (img.rows() != ic.size || img.cols() != ic.size) throw FormatError(path + ": image size mismatch");
      ic.images.push_back(std::move(img));
      ic.labels.push_back(it.at("label").get<int>());
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (ic.images.empty()) throw FormatError(path + ": no images");
  return ic;
}

}  // namespace av
