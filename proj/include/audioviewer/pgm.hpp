#pragma once

#include "audioviewer/binary_io.hpp"
#include "audioviewer/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace av {

/// Binary PGM (P5, maxval 255). `image` is H x W with values in [0, 1].
inline std::vector<std::uint8_t> encode_pgm(const MatrixXd& image) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n");
  for (Eigen::Index r = 0; r < image.rows(); ++r)
    for (Eigen::Index c = 0; c < image.cols(); ++c)
      out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(image(r, c), 0.0, 1.0) * 255.0)));
  return out;
}

inline MatrixXd decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError(std::string("pgm: malformed header, expected ") + what);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1 << 24) throw FormatError(std::string("pgm: ") + what + " too large");
    }
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("pgm: malformed header, expected P5 magic");
  pos = 2;
  const long w = number("width"), h = number("height"), maxval = number("maxval");
  if (w <= 0 || h <= 0) throw FormatError("pgm: malformed header, zero dimension");
  if (maxval <= 0 || maxval > 255) throw FormatError("pgm: only 8-bit maxval supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("pgm: malformed header, missing separator");
  ++pos;
  if (bytes.size() - pos < static_cast<std::size_t>(w * h)) throw FormatError("pgm: truncated pixel data");
  MatrixXd img(h, w);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) img(r, c) = bytes[pos++] / static_cast<double>(maxval);
  return img;
}

inline void save_pgm(const std::string& path, const MatrixXd& image) { io::write_file(path, encode_pgm(image)); }
inline MatrixXd load_pgm(const std::string& path) { return decode_pgm(io::read_file(path)); }

}  // namespace av
