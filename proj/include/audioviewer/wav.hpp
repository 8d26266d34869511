#pragma once

#include "audioviewer/binary_io.hpp"
#include "audioviewer/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace av {

/// Mono PCM audio with amplitudes nominally in [-1, 1].
struct WaveBuffer {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

inline void validate(const WaveBuffer& wave) {
  require(wave.sample_rate > 0, "sample_rate must be positive");
  for (double s : wave.samples)
    if (!std::isfinite(s)) throw NumericError("wave contains non-finite samples");
}

inline std::int16_t to_pcm16(double x) {
  const double v = std::round(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
}

/// Parses a RIFF/WAVE PCM16 mono byte stream. Anything else is rejected.
inline WaveBuffer parse_wav(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  if (r.remaining() < 12) throw FormatError("wav: file too short for RIFF header");
  r.expect_magic("RIFF");
  r.u32();  // riff size, not trusted
  r.expect_magic("WAVE");

  bool have_fmt = false;
  WaveBuffer wave;
  while (r.remaining() >= 8) {
    const std::string id = r.str(4);
    const std::uint32_t size = r.u32();
    if (size > r.remaining()) throw FormatError("wav: chunk '" + id + "' overruns file");
    auto body = r.take(size);
    if (size % 2 == 1 && r.remaining() > 0) r.take(1);

    if (id == "fmt ") {
      if (size < 16) throw FormatError("wav: fmt chunk too short");
      io::Reader f(body);
      const std::uint16_t format = f.u16();
      const std::uint16_t channels = f.u16();
      const std::uint32_t rate = f.u32();
      f.u32();  // byte rate
      f.u16();  // block align
      const std::uint16_t bits = f.u16();
      if (format != 1) throw FormatError("wav: unsupported encoding (format tag " + std::to_string(format) + "), PCM only");
      if (bits != 16) throw FormatError("wav: unsupported bit depth " + std::to_string(bits) + ", PCM16 only");
      if (channels != 1) throw FormatError("wav: " + std::to_string(channels) + " channels, mono only");
      if (rate == 0) throw FormatError("wav: zero sample rate");
      wave.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk");
      io::Reader d(body);
      wave.samples.resize(size / 2);
      for (auto& s : wave.samples) s = static_cast<std::int16_t>(d.u16()) / 32768.0;
      return wave;
    }
  }
  throw FormatError(have_fmt ? "wav: missing data chunk" : "wav: missing fmt chunk");
}

inline std::vector<std::uint8_t> encode_wav(const WaveBuffer& wave) {
  validate(wave);
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * n);
  io::put_bytes(out, "RIFF");
  io::put_u32(out, 36 + 2 * n);
  io::put_bytes(out, "WAVE");
  io::put_bytes(out, "fmt ");
  io::put_u32(out, 16);
  io::put_u16(out, 1);
  io::put_u16(out, 1);
  io::put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  io::put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  io::put_u16(out, 2);
  io::put_u16(out, 16);
  io::put_bytes(out, "data");
  io::put_u32(out, 2 * n);
  for (double s : wave.samples) io::put_u16(out, static_cast<std::uint16_t>(to_pcm16(s)));
  return out;
}

inline WaveBuffer load_wav(const std::string& path) { return parse_wav(io::read_file(path)); }

inline void save_wav(const std::string& path, const WaveBuffer& wave) { io::write_file(path, encode_wav(wave)); }

}  // namespace av
