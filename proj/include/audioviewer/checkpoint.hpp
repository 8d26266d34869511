#pragma once

#include "audioviewer/binary_io.hpp"
#include "audioviewer/vae.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <vector>

namespace av {

using json = nlohmann::json;

inline constexpr std::uint32_t kVaeCheckpointVersion = 1;

/// Metadata describing a VAE's architecture; merged with caller-supplied fields
/// (d, m, seed, epoch, normalisation, ...).
inline json vae_shape_json(const VaeShape& s) {
  return {{"input_dim", s.input_dim},
          {"hidden", s.hidden},
          {"latent_dim", s.latent_dim},
          {"output_activation", to_string(s.output)},
          {"layer_dims_enc", s.encoder().dims},
          {"layer_dims_dec", s.decoder().dims}};
}

inline VaeShape vae_shape_from_json(const json& j) {
  VaeShape s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.latent_dim = j.at("latent_dim").get<int>();
  s.output = activation_from_string(j.at("output_activation").get<std::string>());
  return s;
}

/// "AVWR": u32 version, u32 metadata_len, UTF-8 JSON metadata, then every
/// parameter tensor in declaration order as little-endian float32
/// (weights row-major out x in, then bias).
template <class S>
std::vector<std::uint8_t> encode_vae_checkpoint(const MlpVae<S>& vae, json metadata = json::object()) {
  const json shape = vae_shape_json(vae.shape);
  for (const auto& [k, v] : shape.items()) metadata[k] = v;
  const std::string meta = metadata.dump();
  std::vector<std::uint8_t> out;
  io::put_bytes(out, "AVWR");
  io::put_u32(out, kVaeCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  io::put_bytes(out, meta);
  for (const auto& t : vae.params)
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) io::put_f32(out, static_cast<float>(t(i, j)));
  return out;
}

template <class S>
struct VaeCheckpoint {
  MlpVae<S> vae;
  json metadata;
};

template <class S>
VaeCheckpoint<S> decode_vae_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("AVWR");
  if (const auto v = r.u32(); v != kVaeCheckpointVersion) throw FormatError("AVWR: unsupported version " + std::to_string(v));
  const auto meta_len = r.u32();
  VaeCheckpoint<S> ck;
  try {
    ck.metadata = json::parse(r.str(meta_len));
    ck.vae.shape = vae_shape_from_json(ck.metadata);
  } catch (const json::exception& e) {
    throw FormatError(std::string("AVWR: bad metadata: ") + e.what());
  }
  Tensors<S> shapes;
  Rng dummy(0);
  init_mlp(ck.vae.shape.encoder(), dummy, shapes);
  init_mlp(ck.vae.shape.decoder(), dummy, shapes);
  if (count_params(shapes) * 4 != r.remaining()) throw FormatError("AVWR: payload size does not match architecture");
  for (auto& t : shapes)
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = static_cast<S>(r.f32());
  ck.vae.params = std::move(shapes);
  return ck;
}

}  // namespace av
