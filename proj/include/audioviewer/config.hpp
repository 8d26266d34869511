#pragma once

#include "audioviewer/checkpoint.hpp"
#include "audioviewer/latent_priors.hpp"
#include "audioviewer/training.hpp"

#include <cstdint>
#include <string>

namespace av {

/// Everything a command-line run depends on. Resolved as
/// built-in default < config file < explicit flag.
struct RunConfig {
  std::uint64_t seed = 1;
  int latent_dim = 64;
  int style_dim = 16;
  bool disentangle = true;
  double lambda_cycle = 10.0;
  double lambda_p = 1000.0;
  SmoothnessVariant smoothness = SmoothnessVariant::LogMse;
  int epochs = 20;  // audio VAE
  int image_epochs = 10;
  int refine_epochs = 10;
  int batch = 32;
  double lr = 1e-3;
  double decoder_sigma_db = 3.0;
  int threads = 1;
  std::string corpus;
  std::string model;
  std::string audio_model;
  std::string image_model;
  std::string wav;
  std::string out;

  int image_latent_dim() const { return disentangle ? latent_dim - style_dim : latent_dim; }
};

inline json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"latent_dim", c.latent_dim},
          {"style_dim", c.style_dim},
          {"disentangle", c.disentangle},
          {"lambda_cycle", c.lambda_cycle},
          {"lambda_p", c.lambda_p},
          {"smoothness", to_string(c.smoothness)},
          {"epochs", c.epochs},
          {"image_epochs", c.image_epochs},
          {"refine_epochs", c.refine_epochs},
          {"batch", c.batch},
          {"lr", c.lr},
          {"decoder_sigma_db", c.decoder_sigma_db},
          {"threads", c.threads},
          {"corpus", c.corpus},
          {"model", c.model},
          {"audio_model", c.audio_model},
          {"image_model", c.image_model},
          {"wav", c.wav},
          {"out", c.out}};
}

namespace detail {

template <class T>
void assign_field(const json& j, const std::string& key, T& dst) {
  try {
    dst = j.get<T>();
  } catch (const json::exception&) {
    throw ArgumentError("config: bad value for '" + key + "': " + j.dump());
  }
}

}  // namespace detail

/// Overwrites the fields present in `j`. Unknown keys are an error.
inline void apply_config(RunConfig& c, const json& j) {
  require(j.is_object(), "config: expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") detail::assign_field(v, key, c.seed);
    else if (key == "latent_dim") detail::assign_field(v, key, c.latent_dim);
    else if (key == "style_dim") detail::assign_field(v, key, c.style_dim);
    else if (key == "disentangle") detail::assign_field(v, key, c.disentangle);
    else if (key == "lambda_cycle") detail::assign_field(v, key, c.lambda_cycle);
    else if (key == "lambda_p") detail::assign_field(v, key, c.lambda_p);
    else if (key == "smoothness") {
      std::string s;
      detail::assign_field(v, key, s);
      c.smoothness = smoothness_from_string(s);
    } else if (key == "epochs") detail::assign_field(v, key, c.epochs);
    else if (key == "image_epochs") detail::assign_field(v, key, c.image_epochs);
    else if (key == "refine_epochs") detail::assign_field(v, key, c.refine_epochs);
    else if (key == "batch") detail::assign_field(v, key, c.batch);
    else if (key == "lr") detail::assign_field(v, key, c.lr);
    else if (key == "decoder_sigma_db") detail::assign_field(v, key, c.decoder_sigma_db);
    else if (key == "threads") detail::assign_field(v, key, c.threads);
    else if (key == "corpus") detail::assign_field(v, key, c.corpus);
    else if (key == "model") detail::assign_field(v, key, c.model);
    else if (key == "audio_model") detail::assign_field(v, key, c.audio_model);
    else if (key == "image_model") detail::assign_field(v, key, c.image_model);
    else if (key == "wav") detail::assign_field(v, key, c.wav);
    else if (key == "out") detail::assign_field(v, key, c.out);
    else throw ArgumentError("config: unknown key '" + key + "'");
  }
}

inline void validate(const RunConfig& c) {
  require(c.lambda_p >= 0.0, "config: lambda_p must be >= 0");
  require(c.lambda_cycle >= 0.0, "config: lambda_cycle must be >= 0");
  require(c.latent_dim > 0, "config: latent_dim must be positive");
  require(c.style_dim >= 0 && c.style_dim < c.latent_dim, "config: need 0 <= style_dim < latent_dim");
  if (c.disentangle) require(c.style_dim > 0, "config: disentangled training needs style_dim > 0");
  require(c.epochs >= 0 && c.image_epochs >= 0 && c.refine_epochs >= 0, "config: epochs must be >= 0");
  require(c.batch > 0, "config: batch must be positive");
  require(c.lr > 0.0, "config: lr must be positive");
  require(c.decoder_sigma_db > 0.0, "config: decoder_sigma_db must be positive");
  require(c.threads >= 1, "config: threads must be >= 1");
}

/// default < file < flags, then validated.
inline RunConfig resolve_config(const json& file, const json& flags) {
  RunConfig c;
  if (!file.is_null()) apply_config(c, file);
  if (!flags.is_null()) apply_config(c, flags);
  validate(c);
  return c;
}

inline AudioTrainConfig audio_train_config(const RunConfig& c) {
  AudioTrainConfig t;
  t.latent_dim = c.latent_dim;
  t.style_dim = c.style_dim;
  t.disentangle = c.disentangle;
  t.smoothness = c.smoothness;
  t.lambda_p = c.lambda_p;
  t.epochs = c.epochs;
  t.batch = c.batch;
  t.lr = c.lr;
  t.decoder_sigma_db = c.decoder_sigma_db;
  t.seed = c.seed;
  return t;
}

inline ImageTrainConfig image_train_config(const RunConfig& c) {
  ImageTrainConfig t;
  t.latent_dim = c.image_latent_dim();
  t.epochs = c.image_epochs;
  t.batch = c.batch;
  t.lr = c.lr;
  t.seed = c.seed;
  return t;
}

inline RefineConfig refine_config(const RunConfig& c) {
  RefineConfig t;
  t.lambda_cycle = c.lambda_cycle;
  t.epochs = c.refine_epochs;
  t.batch = c.batch;
  t.lr = c.lr;
  t.seed = c.seed;
  return t;
}

}  // namespace av
