#pragma once

#include "audioviewer/config.hpp"
#include "audioviewer/corpus_io.hpp"
#include "audioviewer/models.hpp"
#include "audioviewer/pgm.hpp"
#include "audioviewer/synth.hpp"
#include "audioviewer/training.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#ifndef AV_VERSION
#define AV_VERSION "unknown"
#endif

namespace av::cli {

namespace fs = std::filesystem;

/// Bad invocation detected after parsing (exit 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

struct Invocation {
  std::string config_path;
  json flags = json::object();  // run-config fields given explicitly on the command line
  json extra = json::object();  // subcommand-local options
};

template <class T>
void run_flag(CLI::App* app, Invocation& inv, const std::string& name, const std::string& key, const std::string& help) {
  app->add_option_function<T>(name, [&inv, key](const T& v) { inv.flags[key] = v; }, help);
}

inline void add_common(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "JSON config file (flags override it)");
  run_flag<std::string>(app, inv, "--out", "out", "output directory");
  run_flag<std::uint64_t>(app, inv, "--seed", "seed", "random seed");
  run_flag<int>(app, inv, "--threads", "threads", "worker threads for linear algebra");
}

inline void add_training(CLI::App* app, Invocation& inv) {
  run_flag<int>(app, inv, "--latent-dim", "latent_dim", "latent size d");
  run_flag<int>(app, inv, "--style-dim", "style_dim", "style prefix size m");
  run_flag<int>(app, inv, "--batch", "batch", "minibatch size");
  run_flag<double>(app, inv, "--lr", "lr", "Adam learning rate");
}

inline json load_json_file(const std::string& path) {
  const auto bytes = io::read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

inline RunConfig resolve(const Invocation& inv) {
  json file;
  if (!inv.config_path.empty()) file = load_json_file(inv.config_path);
  try {
    return resolve_config(file, inv.flags);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
}

inline void need(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

inline void write_json(const fs::path& p, const json& j) { io::write_text(p.string(), j.dump(2) + "\n"); }

/// run.json: resolved config, version, metrics.
inline void write_run(const RunConfig& cfg, const std::string& command, const json& metrics, const json& extra = {}) {
  json run = {{"command", command}, {"version", AV_VERSION}, {"config", to_json(cfg)}, {"metrics", metrics}};
  if (!extra.is_null()) run["options"] = extra;
  write_json(fs::path(cfg.out) / "run.json", run);
}

inline void prepare_out(const RunConfig& cfg) {
  need(cfg.out, "--out");
  fs::create_directories(cfg.out);
}

struct LoadedModel {
  std::optional<LinkedModel> linked;
  AudioModel audio;
};

inline LoadedModel load_model(const std::string& path) {
  const auto bytes = io::read_file(path);
  LoadedModel m;
  if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "AVLK") {
    m.linked = decode_linked_model(bytes);
    m.audio = m.linked->audio;
  } else {
    m.audio = decode_audio_model(bytes);
  }
  return m;
}

inline LinkedModel load_linked(const std::string& path) {
  LoadedModel m = load_model(path);
  if (!m.linked) throw FormatError(path + ": expected a linked model (run `link` first)");
  return std::move(*m.linked);
}

inline std::vector<MelSpectrogram> mels_of(const Corpus& c) {
  std::vector<MelSpectrogram> out;
  for (const auto& u : c.utterances) out.push_back(u.mel);
  return out;
}

/// velocity, acceleration and MDS path length averaged over utterances.
inline json smoothness_metrics(const AudioModel& m, const std::vector<MelSpectrogram>& mels) {
  double v = 0.0, a = 0.0, p = 0.0;
  for (const auto& mel : mels) {
    const LatentTrajectory tr = latent_trajectory(m, mel);
    v += velocity(tr);
    a += acceleration(tr);
    p += path_length(mds_embed(tr.points, 3).coords);
  }
  const double n = static_cast<double>(mels.size());
  return {{"velocity", v / n}, {"acceleration", a / n}, {"mds_path_length", p / n}};
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_synth(const RunConfig& cfg, const json& extra) {
  prepare_out(cfg);
  CorpusConfig cc;
  cc.seed = cfg.seed;
  cc.n_speakers = extra.value("speakers", cc.n_speakers);
  cc.n_phonemes = extra.value("phonemes", cc.n_phonemes);
  cc.utterances_per_speaker = extra.value("utterances", cc.utterances_per_speaker);
  const Corpus corpus = make_corpus(cc);
  save_corpus(corpus, cfg.out);
  const ImageCorpus images = make_image_corpus(extra.value("image_classes", 10), extra.value("images_per_class", 500),
                                               extra.value("image_size", 32), cfg.seed);
  save_image_corpus(images, (fs::path(cfg.out) / "images").string());
  const json metrics = {{"utterances", corpus.utterances.size()},
                        {"segments", corpus.segments.size()},
                        {"images", images.images.size()}};
  write_run(cfg, "synth-data", metrics, extra);
  av::log(LogLevel::Info, "wrote " + std::to_string(corpus.utterances.size()) + " utterances and " +
                              std::to_string(images.images.size()) + " images to " + cfg.out);
  return kExitOk;
}

inline int cmd_train_audio(const RunConfig& cfg) {
  need(cfg.corpus, "--corpus");
  prepare_out(cfg);
  const Corpus corpus = load_corpus(cfg.corpus);
  const Corpus train = train_split(corpus);
  TrainLog tl;
  const AudioModel model = train_audio(train, audio_train_config(cfg), &tl, [](int e, double loss) {
    av::log(LogLevel::Info, "epoch " + std::to_string(e + 1) + " loss " + std::to_string(loss));
  });
  io::write_file((fs::path(cfg.out) / "audio.avwr").string(), encode_audio_model(model));
  const auto val = mels_of(val_split(corpus));
  json metrics = smoothness_metrics(model, val);
  metrics["snr_db"] = mean_roundtrip_snr(model, identity_content_map(), val);
  metrics["final_loss"] = tl.epoch_loss.empty() ? 0.0 : tl.epoch_loss.back();
  metrics["log_time_scale"] = model.log_time_scale;
  metrics["diverged"] = tl.diverged;
  write_json(fs::path(cfg.out) / "metrics.json", metrics);
  write_run(cfg, "train-audio", metrics);
  if (tl.diverged) {
    av::log(LogLevel::Error, "training diverged: " + tl.message);
    return kExitFailure;
  }
  return kExitOk;
}

inline int cmd_train_image(const RunConfig& cfg) {
  need(cfg.corpus, "--corpus");
  prepare_out(cfg);
  const ImageCorpus images = load_image_corpus((fs::path(cfg.corpus) / "images").string());
  TrainLog tl;
  const ImageModel model = train_image(images, image_train_config(cfg), &tl, [](int e, double loss) {
    av::log(LogLevel::Info, "epoch " + std::to_string(e + 1) + " loss " + std::to_string(loss));
  });
  io::write_file((fs::path(cfg.out) / "image.avwr").string(), encode_image_model(model));
  const json metrics = {{"final_loss", tl.epoch_loss.empty() ? 0.0 : tl.epoch_loss.back()}, {"diverged", tl.diverged}};
  write_json(fs::path(cfg.out) / "metrics.json", metrics);
  write_run(cfg, "train-image", metrics);
  return tl.diverged ? kExitFailure : kExitOk;
}

inline int cmd_link(const RunConfig& cfg) {
  need(cfg.audio_model, "--audio-model");
  need(cfg.image_model, "--image-model");
  need(cfg.corpus, "--corpus");
  prepare_out(cfg);
  const AudioModel audio = decode_audio_model(io::read_file(cfg.audio_model));
  const ImageModel image = decode_image_model(io::read_file(cfg.image_model));
  check_link(audio, image);
  const Corpus corpus = load_corpus(cfg.corpus, audio.frontend);
  const ImageCorpus images = load_image_corpus((fs::path(cfg.corpus) / "images").string());
  const auto val = mels_of(val_split(corpus));
  TrainLog tl;
  const LinkedModel linked = refine_joint(audio, image, train_split(corpus), images, refine_config(cfg), &tl);
  io::write_file((fs::path(cfg.out) / "linked.avlk").string(), encode_linked_model(linked));
  const json metrics = {{"unlinked_snr_db", mean_roundtrip_snr(audio, image_cycle_map(image), val)},
                        {"linked_snr_db", mean_roundtrip_snr(linked.audio, image_cycle_map(linked.image), val)},
                        {"audio_only_snr_db", mean_roundtrip_snr(audio, identity_content_map(), val)},
                        {"diverged", tl.diverged}};
  write_json(fs::path(cfg.out) / "metrics.json", metrics);
  write_run(cfg, "link", metrics);
  return tl.diverged ? kExitFailure : kExitOk;
}

inline int cmd_translate(const RunConfig& cfg) {
  need(cfg.model, "--model");
  need(cfg.wav, "--wav");
  prepare_out(cfg);
  const LinkedModel m = load_linked(cfg.model);
  const VideoSequence video = translate_stream(m, load_wav(cfg.wav));
  char name[32];
  for (std::size_t k = 0; k < video.frames.size(); ++k) {
    std::snprintf(name, sizeof name, "frame_%06zu.pgm", k);
    save_pgm((fs::path(cfg.out) / name).string(), video.frames[k]);
  }
  const json manifest = {{"frame_rate", video.frame_rate},
                         {"count", video.frames.size()},
                         {"source_segments", video.source_segments}};
  write_json(fs::path(cfg.out) / "manifest.json", manifest);
  write_run(cfg, "translate", {{"frames", video.frames.size()}, {"frame_rate", video.frame_rate}});
  return kExitOk;
}

inline int cmd_eval_roundtrip(const RunConfig& cfg) {
  need(cfg.model, "--model");
  need(cfg.wav, "--wav");
  prepare_out(cfg);
  const LoadedModel m = load_model(cfg.model);
  const MelSpectrogram mel = compute_mel(load_wav(cfg.wav), m.audio.frontend);
  const MatrixXd ref = covered_frames(mel, m.audio.frontend.segment_frames, m.audio.frontend.segment_hop);
  const double audio_only = snr_db(ref, autoencode(m.audio, mel).frames);
  const double rt = m.linked ? snr_db(ref, roundtrip(*m.linked, mel).frames) : audio_only;
  const json metrics = {{"snr_db", rt}, {"audio_only_snr_db", audio_only}, {"linked", m.linked.has_value()}};
  write_json(fs::path(cfg.out) / "metrics.json", metrics);
  write_run(cfg, "eval-roundtrip", metrics);
  return kExitOk;
}

inline int cmd_eval_smoothness(const RunConfig& cfg) {
  need(cfg.model, "--model");
  if (cfg.wav.empty() && cfg.corpus.empty()) throw UsageError("--wav or --corpus is required");
  prepare_out(cfg);
  const LoadedModel m = load_model(cfg.model);
  std::vector<MelSpectrogram> mels;
  if (!cfg.wav.empty()) mels.push_back(compute_mel(load_wav(cfg.wav), m.audio.frontend));
  else mels = mels_of(val_split(load_corpus(cfg.corpus, m.audio.frontend)));
  json metrics = smoothness_metrics(m.audio, mels);
  metrics["snr_db"] = mean_roundtrip_snr(m.audio, identity_content_map(), mels);
  metrics["utterances"] = mels.size();
  write_json(fs::path(cfg.out) / "metrics.json", metrics);
  write_run(cfg, "eval-smoothness", metrics);
  return kExitOk;
}

inline int cmd_mds(const RunConfig& cfg) {
  need(cfg.model, "--model");
  need(cfg.wav, "--wav");
  prepare_out(cfg);
  const LoadedModel m = load_model(cfg.model);
  const MelSpectrogram mel = compute_mel(load_wav(cfg.wav), m.audio.frontend);
  const MdsResult r = mds_embed(latent_trajectory(m.audio, mel).points, 3);
  std::ostringstream csv;
  csv.precision(9);
  csv << "x,y,z\n";
  for (Eigen::Index i = 0; i < r.coords.rows(); ++i) csv << r.coords(i, 0) << ',' << r.coords(i, 1) << ',' << r.coords(i, 2) << '\n';
  io::write_text((fs::path(cfg.out) / "mds.csv").string(), csv.str());
  const json metrics = {{"mds_path_length", path_length(r.coords)}, {"points", r.coords.rows()}, {"degenerate", r.degenerate}};
  write_json(fs::path(cfg.out) / "metrics.json", metrics);
  write_run(cfg, "mds", metrics);
  return kExitOk;
}

// ---------------------------------------------------------------------------

/// Parses argv and runs one subcommand. Exit 0 ok, 1 usage error, 2 runtime failure.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"AudioViewer: audio to video translation through linked latent spaces", "audioviewer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", AV_VERSION);
  Invocation inv;

  auto* synth = app.add_subcommand("synth-data", "write the synthetic speech and glyph corpora");
  add_common(synth, inv);
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{{"--speakers", "speakers"},
                                                                                 {"--phonemes", "phonemes"},
                                                                                 {"--utterances", "utterances"},
                                                                                 {"--image-classes", "image_classes"},
                                                                                 {"--images-per-class", "images_per_class"},
                                                                                 {"--image-size", "image_size"}})
    synth->add_option_function<int>(flag, [&inv, key](int v) { inv.extra[key] = v; }, key);

  auto* ta = app.add_subcommand("train-audio", "train the audio VAE on the training speakers");
  add_common(ta, inv);
  add_training(ta, inv);
  run_flag<std::string>(ta, inv, "--corpus", "corpus", "corpus directory");
  run_flag<int>(ta, inv, "--epochs", "epochs", "training epochs");
  run_flag<double>(ta, inv, "--lambda-p", "lambda_p", "smoothness weight");
  run_flag<std::string>(ta, inv, "--smoothness", "smoothness", "MSE, Q, LOGMSE or NONE");
  run_flag<bool>(ta, inv, "--disentangle", "disentangle", "recombined reconstruction (true/false)");
  run_flag<double>(ta, inv, "--decoder-sigma-db", "decoder_sigma_db", "decoder standard deviation in dB");

  auto* ti = app.add_subcommand("train-image", "train the image VAE on the glyph corpus");
  add_common(ti, inv);
  add_training(ti, inv);
  run_flag<std::string>(ti, inv, "--corpus", "corpus", "corpus directory (uses its images/)");
  run_flag<int>(ti, inv, "--epochs", "image_epochs", "training epochs");
  run_flag<bool>(ti, inv, "--disentangle", "disentangle", "image latent = content part only (true/false)");

  auto* lk = app.add_subcommand("link", "refine the image VAE with the cycle loss");
  add_common(lk, inv);
  run_flag<int>(lk, inv, "--batch", "batch", "minibatch size");
  run_flag<double>(lk, inv, "--lr", "lr", "Adam learning rate");
  run_flag<std::string>(lk, inv, "--corpus", "corpus", "corpus directory");
  run_flag<std::string>(lk, inv, "--audio-model", "audio_model", "audio checkpoint");
  run_flag<std::string>(lk, inv, "--image-model", "image_model", "image checkpoint");
  run_flag<int>(lk, inv, "--epochs", "refine_epochs", "refinement epochs");
  run_flag<double>(lk, inv, "--lambda-cycle", "lambda_cycle", "cycle loss weight");

  auto* tr = app.add_subcommand("translate", "render a WAV file as a PGM frame sequence");
  add_common(tr, inv);
  run_flag<std::string>(tr, inv, "--model", "model", "linked checkpoint");
  run_flag<std::string>(tr, inv, "--wav", "wav", "input WAV (PCM16 mono)");

  auto* er = app.add_subcommand("eval-roundtrip", "round-trip SNR of one WAV file");
  add_common(er, inv);
  run_flag<std::string>(er, inv, "--model", "model", "linked or audio checkpoint");
  run_flag<std::string>(er, inv, "--wav", "wav", "input WAV (PCM16 mono)");

  auto* es = app.add_subcommand("eval-smoothness", "latent velocity, acceleration and MDS path length");
  add_common(es, inv);
  run_flag<std::string>(es, inv, "--model", "model", "linked or audio checkpoint");
  run_flag<std::string>(es, inv, "--wav", "wav", "single WAV input");
  run_flag<std::string>(es, inv, "--corpus", "corpus", "corpus directory (validation speakers)");

  auto* md = app.add_subcommand("mds", "3-D MDS embedding of a latent trajectory as CSV");
  add_common(md, inv);
  run_flag<std::string>(md, inv, "--model", "model", "linked or audio checkpoint");
  run_flag<std::string>(md, inv, "--wav", "wav", "input WAV (PCM16 mono)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help("", CLI::AppFormatMode::Normal);
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  RunConfig cfg;
  try {
    cfg = resolve(inv);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << sub->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  Eigen::setNbThreads(cfg.threads);

  try {
    if (name == "synth-data") return cmd_synth(cfg, inv.extra);
    if (name == "train-audio") return cmd_train_audio(cfg);
    if (name == "train-image") return cmd_train_image(cfg);
    if (name == "link") return cmd_link(cfg);
    if (name == "translate") return cmd_translate(cfg);
    if (name == "eval-roundtrip") return cmd_eval_roundtrip(cfg);
    if (name == "eval-smoothness") return cmd_eval_smoothness(cfg);
    if (name == "mds") return cmd_mds(cfg);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << sub->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace av::cli
