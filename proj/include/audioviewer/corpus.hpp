#pragma once

#include "audioviewer/audio_frontend.hpp"
#include "audioviewer/common.hpp"
#include "audioviewer/wav.hpp"

#include <algorithm>
#include <set>
#include <string>
#include <vector>

namespace av {

struct PhonemeSpan {
  int phoneme = 0;
  double t_start = 0.0;  // seconds
  double t_end = 0.0;
};

struct Utterance {
  int id = 0;
  int speaker = 0;
  std::vector<PhonemeSpan> timeline;
  WaveBuffer wave;
  MelSpectrogram mel;
  std::vector<int> segments;  // indices into Corpus::segments
  std::string wav_path;       // relative to the corpus root when loaded from disk
};

struct LabeledSegment {
  MelSegment segment;
  int speaker = 0;
  int phoneme = 0;
  int utterance = 0;
  double t_start = 0.0;
};

/// Speech corpus: utterances with phoneme timelines and their labelled mel segments.
struct Corpus {
  std::vector<Utterance> utterances;
  std::vector<LabeledSegment> segments;
  int n_speakers = 0;
  int n_phonemes = 0;
  std::vector<int> train_speakers;
  std::vector<int> val_speakers;
  FrontendConfig frontend;

  int segment_dim() const { return frontend.segment_dim(); }
};

/// Phoneme covering time t (the last span that starts at or before t).
inline int phoneme_at(const std::vector<PhonemeSpan>& timeline, double t) {
  require(!timeline.empty(), "phoneme_at: empty timeline");
  int label = timeline.front().phoneme;
  for (const auto& span : timeline)
    if (span.t_start <= t) label = span.phoneme;
  return label;
}

/// Computes the mel spectrogram of `u` and appends its segments, labelled by the
/// phoneme at each segment's temporal centre.
inline void add_utterance(Corpus& corpus, Utterance u) {
  const FrontendConfig& cfg = corpus.frontend;
  u.mel = compute_mel(u.wave, cfg);
  u.segments.clear();
  const double frame_s = cfg.hop_s;
  if (u.mel.num_frames() >= cfg.segment_frames) {
    for (auto& seg : segment(u.mel, cfg.segment_frames, cfg.segment_hop)) {
      LabeledSegment ls;
      ls.t_start = seg.start_frame * frame_s;
      ls.phoneme = phoneme_at(u.timeline, ls.t_start + 0.5 * cfg.segment_frames * frame_s);
      ls.speaker = u.speaker;
      ls.utterance = u.id;
      ls.segment = std::move(seg);
      u.segments.push_back(static_cast<int>(corpus.segments.size()));
      corpus.segments.push_back(std::move(ls));
    }
  }
  corpus.utterances.push_back(std::move(u));
}

/// Utterances whose speaker is in `speakers`, re-indexed.
inline Corpus subset_by_speaker(const Corpus& c, const std::vector<int>& speakers) {
  Corpus out;
  out.n_speakers = c.n_speakers;
  out.n_phonemes = c.n_phonemes;
  out.frontend = c.frontend;
  const std::set<int> keep(speakers.begin(), speakers.end());
  for (const auto& u : c.utterances) {
    if (!keep.count(u.speaker)) continue;
    Utterance copy = u;
    copy.id = static_cast<int>(out.utterances.size());
    copy.segments.clear();
    for (int s : u.segments) {
      LabeledSegment ls = c.segments[static_cast<std::size_t>(s)];
      ls.utterance = copy.id;
      copy.segments.push_back(static_cast<int>(out.segments.size()));
      out.segments.push_back(std::move(ls));
    }
    out.utterances.push_back(std::move(copy));
  }
  for (int s : c.train_speakers)
    if (keep.count(s)) out.train_speakers.push_back(s);
  for (int s : c.val_speakers)
    if (keep.count(s)) out.val_speakers.push_back(s);
  return out;
}

inline Corpus train_split(const Corpus& c) { return subset_by_speaker(c, c.train_speakers); }
inline Corpus val_split(const Corpus& c) { return subset_by_speaker(c, c.val_speakers); }

/// D x N matrix of flattened segments.
inline MatrixXd segment_matrix(const Corpus& c, const std::vector<int>& indices) {
  MatrixXd m(c.segment_dim(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k)
    m.col(static_cast<Eigen::Index>(k)) = flatten(c.segments[static_cast<std::size_t>(indices[k])].segment.values);
  return m;
}

inline MatrixXd segment_matrix(const Corpus& c) {
  std::vector<int> all(c.segments.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return segment_matrix(c, all);
}

}  // namespace av
