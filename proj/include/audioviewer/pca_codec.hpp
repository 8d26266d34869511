#pragma once

#include "audioviewer/binary_io.hpp"
#include "audioviewer/common.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <span>
#include <vector>

namespace av {

/// Full eigendecomposition of the sample covariance, eigenvalues descending.
///
/// Kept separate from PcaCodec so several latent sizes can be cut from a
/// single decomposition.
struct PcaSpectrum {
  VectorXd mean;
  VectorXd eigenvalues;   // descending
  MatrixXd eigenvectors;  // columns, matching eigenvalues
  std::size_t num_samples = 0;
};

/// Whitened PCA encoder with pseudo-inverse decoder.
struct PcaCodec {
  VectorXd mean;
  MatrixXd projection;  // Z_D x D, rows scaled by 1/sqrt(eigenvalue)
  MatrixXd decoder;     // D x Z_D, pseudo-inverse of projection
  VectorXd eigenvalues;

  int input_dim() const { return static_cast<int>(mean.size()); }
  int latent_dim() const { return static_cast<int>(eigenvalues.size()); }
};

/// Samples are the columns of `data` (D x N). Covariance uses the 1/N normaliser.
inline PcaSpectrum pca_decompose(const MatrixXd& data) {
  require(data.cols() >= 2, "pca: need at least two samples");
  PcaSpectrum s;
  s.num_samples = static_cast<std::size_t>(data.cols());
  s.mean = data.rowwise().mean();
  const MatrixXd centered = data.colwise() - s.mean;
  const MatrixXd cov = (centered * centered.transpose()) / static_cast<double>(data.cols());
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("pca: eigendecomposition failed");
  // Eigen returns ascending order.
  s.eigenvalues = solver.eigenvalues().reverse();
  s.eigenvectors = solver.eigenvectors().rowwise().reverse();
  for (Eigen::Index j = 0; j < s.eigenvectors.cols(); ++j) {
    Eigen::Index arg;
    s.eigenvectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (s.eigenvectors(arg, j) < 0.0) s.eigenvectors.col(j) *= -1.0;
  }
  return s;
}

/// Cuts a whitened codec of size latent_dim, shrinking to the numerical rank if needed.
inline PcaCodec pca_from_spectrum(const PcaSpectrum& s, int latent_dim) {
  const auto D = s.mean.size();
  require(latent_dim >= 1 && latent_dim <= D, "pca: need 1 <= Z_D <= D");
  require(s.num_samples > static_cast<std::size_t>(latent_dim), "pca: need more samples than Z_D");
  const double lmax = s.eigenvalues[0];
  int rank = 0;
  while (rank < latent_dim && s.eigenvalues[rank] > 1e-12 * lmax && s.eigenvalues[rank] > 0.0) ++rank;
  if (rank == 0) throw NumericError("pca: data has zero variance");
  if (rank < latent_dim)
    log_warn("pca: rank deficient, shrinking Z_D from " + std::to_string(latent_dim) + " to " + std::to_string(rank));

  PcaCodec c;
  c.mean = s.mean;
  c.eigenvalues = s.eigenvalues.head(rank);
  const MatrixXd basis = s.eigenvectors.leftCols(rank);  // D x rank, orthonormal
  const VectorXd sd = c.eigenvalues.cwiseSqrt();
  c.projection = sd.cwiseInverse().asDiagonal() * basis.transpose();
  c.decoder = basis * sd.asDiagonal();
  return c;
}

inline PcaCodec pca_fit(const MatrixXd& data, int latent_dim) { return pca_from_spectrum(pca_decompose(data), latent_dim); }

/// Columns of `u` are samples.
inline MatrixXd pca_encode(const PcaCodec& c, const MatrixXd& u) {
  require(u.rows() == c.input_dim(), "pca encode: dimension mismatch");
  return c.projection * (u.colwise() - c.mean);
}

inline MatrixXd pca_decode(const PcaCodec& c, const MatrixXd& z) {
  require(z.rows() == c.latent_dim(), "pca decode: dimension mismatch");
  return (c.decoder * z).colwise() + c.mean;
}

// "AVPC": u32 version, u32 D, u32 Z_D, mean, W (row-major), W_dagger (row-major), eigenvalues; float32.

inline constexpr std::uint32_t kPcaVersion = 1;

inline std::vector<std::uint8_t> encode_pca(const PcaCodec& c) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, "AVPC");
  io::put_u32(out, kPcaVersion);
  io::put_u32(out, static_cast<std::uint32_t>(c.input_dim()));
  io::put_u32(out, static_cast<std::uint32_t>(c.latent_dim()));
  auto put_matrix = [&](const MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) io::put_f32(out, static_cast<float>(m(i, j)));
  };
  put_matrix(c.mean);
  put_matrix(c.projection);
  put_matrix(c.decoder);
  put_matrix(c.eigenvalues);
  return out;
}

inline PcaCodec decode_pca(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("AVPC");
  if (const auto v = r.u32(); v != kPcaVersion) throw FormatError("AVPC: unsupported version " + std::to_string(v));
  const auto D = static_cast<Eigen::Index>(r.u32());
  const auto Z = static_cast<Eigen::Index>(r.u32());
  if (static_cast<std::uint64_t>(D + 2 * D * Z + Z) * 4 != r.remaining()) throw FormatError("AVPC: payload size mismatch");
  auto get_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.f32();
    return m;
  };
  PcaCodec c;
  c.mean = get_matrix(D, 1);
  c.projection = get_matrix(Z, D);
  c.decoder = get_matrix(D, Z);
  c.eigenvalues = get_matrix(Z, 1);
  return c;
}

}  // namespace av
