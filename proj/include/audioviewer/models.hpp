#pragma once

#include "audioviewer/audio_frontend.hpp"
#include "audioviewer/checkpoint.hpp"
#include "audioviewer/latent_priors.hpp"
#include "audioviewer/metrics.hpp"
#include "audioviewer/pca_codec.hpp"
#include "audioviewer/vae.hpp"

#include <functional>
#include <string>
#include <vector>

namespace av {

/// Fixed affine map between stored values and model units: x = (v - offset) / scale.
struct Normalizer {
  double offset = 0.0;
  double scale = 1.0;

  MatrixXd forward(const MatrixXd& v) const { return (v.array() - offset) / scale; }
  MatrixXd inverse(const MatrixXd& x) const { return x.array() * scale + offset; }
};

/// dB mel values in [-80, 0] map to roughly [-2, 2].
inline constexpr Normalizer kMelNormalizer{-40.0, 20.0};

/// Latent rows that carry content: everything after the style prefix.
template <class S>
Mat<S> content_rows(const Mat<S>& z, int style_dim) {
  return z.bottomRows(z.rows() - style_dim);
}

/// Audio VAE over flattened mel segments plus its learned time scale.
struct AudioModel {
  MlpVae<float> vae;
  int style_dim = 0;  // 0 for models trained without disentanglement
  double log_time_scale = 0.0;
  Normalizer norm = kMelNormalizer;
  FrontendConfig frontend;
  json info = json::object();  // training provenance

  int latent_dim() const { return vae.latent_dim(); }
  int content_dim() const { return latent_dim() - style_dim; }
};

/// Per-frame image VAE; frames are size x size grayscale in [0, 1].
struct ImageModel {
  MlpVae<float> vae;
  int size = 32;
  json info = json::object();

  int latent_dim() const { return vae.latent_dim(); }
};

/// Audio and image VAEs sharing the content latent.
struct LinkedModel {
  AudioModel audio;
  ImageModel image;
  json link = json::object();
};

inline void check_link(const AudioModel& a, const ImageModel& i) {
  if (i.latent_dim() != a.content_dim())
    throw ArgumentError("link: image latent dimension " + std::to_string(i.latent_dim()) +
                        " must equal audio content dimension " + std::to_string(a.content_dim()));
}

inline LinkedModel make_linked(AudioModel audio, ImageModel image, json link = json::object()) {
  check_link(audio, image);
  return {std::move(audio), std::move(image), std::move(link)};
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json frontend_json(const FrontendConfig& f) {
  return {{"sample_rate", f.sample_rate}, {"window_s", f.window_s},       {"hop_s", f.hop_s},
          {"n_mels", f.n_mels},           {"fmin", f.fmin},               {"fmax", f.fmax},
          {"floor_db", f.floor_db},       {"segment_frames", f.segment_frames}, {"segment_hop", f.segment_hop}};
}

inline FrontendConfig frontend_from_json(const json& j) {
  FrontendConfig f;
  f.sample_rate = j.at("sample_rate").get<int>();
  f.window_s = j.at("window_s").get<double>();
  f.hop_s = j.at("hop_s").get<double>();
  f.n_mels = j.at("n_mels").get<int>();
  f.fmin = j.at("fmin").get<double>();
  f.fmax = j.at("fmax").get<double>();
  f.floor_db = j.at("floor_db").get<double>();
  f.segment_frames = j.at("segment_frames").get<int>();
  f.segment_hop = j.at("segment_hop").get<int>();
  return f;
}

inline std::vector<std::uint8_t> encode_audio_model(const AudioModel& m) {
  json meta = m.info;
  meta["kind"] = "audio";
  meta["d"] = m.latent_dim();
  meta["m"] = m.style_dim;
  meta["log_time_scale"] = m.log_time_scale;
  meta["norm_offset"] = m.norm.offset;
  meta["norm_scale"] = m.norm.scale;
  meta["frontend"] = frontend_json(m.frontend);
  return encode_vae_checkpoint(m.vae, meta);
}

inline AudioModel decode_audio_model(std::span<const std::uint8_t> bytes) {
  auto ck = decode_vae_checkpoint<float>(bytes);
  if (ck.metadata.value("kind", "") != "audio") throw FormatError("checkpoint is not an audio model");
  AudioModel m;
  m.vae = std::move(ck.vae);
  try {
    m.style_dim = ck.metadata.at("m").get<int>();
    m.log_time_scale = ck.metadata.at("log_time_scale").get<double>();
    m.norm = {ck.metadata.at("norm_offset").get<double>(), ck.metadata.at("norm_scale").get<double>()};
    m.frontend = frontend_from_json(ck.metadata.at("frontend"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("audio checkpoint: bad metadata: ") + e.what());
  }
  m.info = std::move(ck.metadata);
  if (m.style_dim < 0 || m.style_dim >= m.latent_dim()) throw FormatError("audio checkpoint: bad style dimension");
  if (m.frontend.segment_dim() != m.vae.input_dim()) throw FormatError("audio checkpoint: frontend does not match input size");
  return m;
}

inline std::vector<std::uint8_t> encode_image_model(const ImageModel& m) {
  json meta = m.info;
  meta["kind"] = "image";
  meta["d"] = m.latent_dim();
  meta["image_size"] = m.size;
  return encode_vae_checkpoint(m.vae, meta);
}

inline ImageModel decode_image_model(std::span<const std::uint8_t> bytes) {
  auto ck = decode_vae_checkpoint<float>(bytes);
  if (ck.metadata.value("kind", "") != "image") throw FormatError("checkpoint is not an image model");
  ImageModel m;
  m.vae = std::move(ck.vae);
  try {
    m.size = ck.metadata.at("image_size").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("image checkpoint: bad metadata: ") + e.what());
  }
  m.info = std::move(ck.metadata);
  if (m.size * m.size != m.vae.input_dim()) throw FormatError("image checkpoint: size does not match input width");
  return m;
}

inline constexpr std::uint32_t kLinkedVersion = 1;

/// "AVLK": u32 version, u32 metadata_len, JSON link metadata, then the audio and
/// image "AVWR" blobs, each preceded by its u32 byte length.
inline std::vector<std::uint8_t> encode_linked_model(const LinkedModel& m) {
  json meta = m.link;
  meta["d"] = m.audio.latent_dim();
  meta["m"] = m.audio.style_dim;
  meta["d_img"] = m.image.latent_dim();
  meta["log_time_scale"] = m.audio.log_time_scale;
  const std::string meta_s = meta.dump();
  const auto audio = encode_audio_model(m.audio);
  const auto image = encode_image_model(m.image);
  std::vector<std::uint8_t> out;
  io::put_bytes(out, "AVLK");
  io::put_u32(out, kLinkedVersion);
  io::put_u32(out, static_cast<std::uint32_t>(meta_s.size()));
  io::put_bytes(out, meta_s);
  io::put_u32(out, static_cast<std::uint32_t>(audio.size()));
  out.insert(out.end(), audio.begin(), audio.end());
  io::put_u32(out, static_cast<std::uint32_t>(image.size()));
  out.insert(out.end(), image.begin(), image.end());
  return out;
}

inline LinkedModel decode_linked_model(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("AVLK");
  if (const auto v = r.u32(); v != kLinkedVersion) throw FormatError("AVLK: unsupported version " + std::to_string(v));
  json link;
  try {
    link = json::parse(r.str(r.u32()));
  } catch (const json::exception& e) {
    throw FormatError(std::string("AVLK: bad metadata: ") + e.what());
  }
  const auto audio_len = r.u32();
  AudioModel audio = decode_audio_model(r.take(audio_len));
  const auto image_len = r.u32();
  ImageModel image = decode_image_model(r.take(image_len));
  if (r.remaining() != 0) throw FormatError("AVLK: trailing bytes");
  try {
    return make_linked(std::move(audio), std::move(image), std::move(link));
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("AVLK: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Inference (posterior means only)

/// Flattened, normalised segments (D x N) in model precision.
inline Mat<float> audio_inputs(const AudioModel& m, const std::vector<MelSegment>& segs) {
  Mat<float> x(m.vae.input_dim(), static_cast<Eigen::Index>(segs.size()));
  for (std::size_t k = 0; k < segs.size(); ++k)
    x.col(static_cast<Eigen::Index>(k)) = m.norm.forward(flatten(segs[k].values)).cast<float>();
  return x;
}

inline Mat<float> audio_inputs(const AudioModel& m, const MatrixXd& flat_db) {
  return m.norm.forward(flat_db).cast<float>();
}

/// Posterior means (d x N).
inline Mat<float> encode_means(const AudioModel& m, const Mat<float>& x) { return encode(m.vae, x).mu; }

/// Maps a batch of content latents to content latents (columns are samples).
using ContentMap = std::function<Mat<float>(const Mat<float>&)>;

inline ContentMap identity_content_map() {
  return [](const Mat<float>& z) { return z; };
}

/// z_c -> E_V(D_V(z_c)) using means on both sides.
inline ContentMap image_cycle_map(const ImageModel& image) {
  return [&image](const Mat<float>& z) { return encode(image.vae, decode(image.vae, z)).mu; };
}

/// Averages per-segment reconstructions (columns, flattened dB) over the frames they cover.
inline MelSpectrogram overlap_average(const MatrixXd& flat_db, const std::vector<int>& starts, int segment_frames,
                                      int n_mels, double floor_db) {
  require(flat_db.cols() == static_cast<Eigen::Index>(starts.size()), "overlap_average: start count mismatch");
  const int n_frames = starts.empty() ? 0 : starts.back() + segment_frames;
  MatrixXd sum = MatrixXd::Zero(n_frames, n_mels);
  VectorXd count = VectorXd::Zero(n_frames);
  for (std::size_t k = 0; k < starts.size(); ++k) {
    sum.middleRows(starts[k], segment_frames) += unflatten(flat_db.col(static_cast<Eigen::Index>(k)), segment_frames, n_mels);
    count.segment(starts[k], segment_frames).array() += 1.0;
  }
  MelSpectrogram out;
  out.floor_db = floor_db;
  out.frames = (sum.array().colwise() / count.array()).matrix().cwiseMax(floor_db);
  return out;
}

/// Per segment: z = E_A mean, content through `map`, D_A([z_s | map(z_c)]); overlapping
/// reconstructions averaged per frame. Covers frames up to the last window end.
inline MelSpectrogram roundtrip_with(const AudioModel& m, const MelSpectrogram& mel, const ContentMap& map) {
  const auto& cfg = m.frontend;
  const auto segs = segment(mel, cfg.segment_frames, cfg.segment_hop);
  const Mat<float> z = encode_means(m, audio_inputs(m, segs));
  Mat<float> mapped = map(content_rows(z, m.style_dim));
  require(mapped.rows() == m.content_dim() && mapped.cols() == z.cols(), "roundtrip: content map changed dimensions");
  Mat<float> z_full = z;
  z_full.bottomRows(m.content_dim()) = mapped;
  const MatrixXd rec = m.norm.inverse(decode(m.vae, z_full).cast<double>());
  std::vector<int> starts;
  for (const auto& s : segs) starts.push_back(s.start_frame);
  return overlap_average(rec, starts, cfg.segment_frames, cfg.n_mels, mel.floor_db);
}

/// Audio -> video -> audio.
inline MelSpectrogram roundtrip(const LinkedModel& m, const MelSpectrogram& mel) {
  return roundtrip_with(m.audio, mel, image_cycle_map(m.image));
}

/// Audio autoencoding without the visual detour.
inline MelSpectrogram autoencode(const AudioModel& m, const MelSpectrogram& mel) {
  return roundtrip_with(m, mel, identity_content_map());
}

/// Mel frames actually covered by complete segments (the reference for round-trip SNR).
inline MatrixXd covered_frames(const MelSpectrogram& mel, int segment_frames, int hop) {
  const auto starts = segment_starts(mel.num_frames(), segment_frames, hop);
  return mel.frames.topRows(starts.back() + segment_frames);
}

struct VideoSequence {
  std::vector<MatrixXd> frames;  // H x W in [0, 1]
  double frame_rate = 25.0;
  std::vector<int> source_segments;  // start mel frame of each source segment
};

/// Audio -> mel -> segments -> content means -> image decoder, one frame per segment.
inline VideoSequence translate_stream(const LinkedModel& m, const WaveBuffer& wave) {
  const auto& cfg = m.audio.frontend;
  const double min_s = cfg.segment_frames * cfg.hop_s;
  if (wave.duration_s() + 1e-12 < min_s)
    throw ArgumentError("translate: audio too short (" + std::to_string(wave.duration_s()) + " s, need " +
                        std::to_string(min_s) + " s)");
  const MelSpectrogram mel = compute_mel(wave, cfg);
  const auto segs = segment(mel, cfg.segment_frames, cfg.segment_hop);
  const Mat<float> z = encode_means(m.audio, audio_inputs(m.audio, segs));
  const Mat<float> img = decode(m.image.vae, Mat<float>(content_rows(z, m.audio.style_dim)));
  VideoSequence video;
  video.frame_rate = 1.0 / (cfg.segment_hop * cfg.hop_s);
  for (Eigen::Index k = 0; k < img.cols(); ++k) {
    video.frames.push_back(unflatten(img.col(k).cast<double>(), m.image.size, m.image.size));
    video.source_segments.push_back(segs[static_cast<std::size_t>(k)].start_frame);
  }
  return video;
}

/// Content-latent trajectory at a stride of one mel frame.
inline LatentTrajectory latent_trajectory(const AudioModel& m, const MelSpectrogram& mel) {
  const auto segs = segment(mel, m.frontend.segment_frames, 1);
  const Mat<float> z = encode_means(m, audio_inputs(m, segs));
  return {content_rows(z, m.style_dim).transpose().cast<double>(), m.frontend.hop_s};
}

// ---------------------------------------------------------------------------
// PCA baseline pipeline

struct PcaPipeline {
  PcaCodec audio;  // over flattened mel segments (dB)
  PcaCodec image;  // over flattened frames
  int style_dim = 0;
  FrontendConfig frontend;
};

/// PCA analogue of roundtrip: the content part of the audio code passes through
/// the image codec (decode to pixels, encode back).
inline MelSpectrogram pca_roundtrip(const PcaPipeline& p, const MelSpectrogram& mel) {
  const auto& cfg = p.frontend;
  require(p.image.latent_dim() == p.audio.latent_dim() - p.style_dim, "pca pipeline: latent size mismatch");
  const auto segs = segment(mel, cfg.segment_frames, cfg.segment_hop);
  MatrixXd u(p.audio.input_dim(), static_cast<Eigen::Index>(segs.size()));
  std::vector<int> starts;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    u.col(static_cast<Eigen::Index>(k)) = flatten(segs[k].values);
    starts.push_back(segs[k].start_frame);
  }
  MatrixXd z = pca_encode(p.audio, u);
  const MatrixXd zc = z.bottomRows(p.image.latent_dim());
  z.bottomRows(p.image.latent_dim()) = pca_encode(p.image, pca_decode(p.image, zc));
  return overlap_average(pca_decode(p.audio, z), starts, cfg.segment_frames, cfg.n_mels, mel.floor_db);
}

}  // namespace av
