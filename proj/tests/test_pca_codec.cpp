#include "audioviewer/metrics.hpp"
#include "audioviewer/pca_codec.hpp"
#include "audioviewer/rng.hpp"

#include <gtest/gtest.h>

using namespace av;

namespace {

/// D x N samples with decaying per-direction scales under a random rotation.
MatrixXd anisotropic(int D, int N, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd g(D, D);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  const Eigen::HouseholderQR<MatrixXd> qr(g);
  const MatrixXd q = qr.householderQ();
  MatrixXd x(D, N);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < D; ++i) x(i, j) = rng.normal() * std::pow(0.8, i);
  return (q * x).colwise() + VectorXd::LinSpaced(D, -1.0, 2.0);
}

double mean_sq_error(const MatrixXd& a, const MatrixXd& b) { return (a - b).colwise().squaredNorm().mean(); }

}  // namespace

TEST(Pca, LineDataKeepsDiagonalDirection) {
  MatrixXd pts(2, 5);
  pts << -2, -1, 0, 1, 2, -2, -1, 0, 1, 2;
  const PcaCodec c = pca_fit(pts, 1);
  const VectorXd dir = c.projection.row(0).transpose().normalized();
  EXPECT_NEAR(dir[0], std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(dir[1], std::sqrt(0.5), 1e-12);
  EXPECT_NEAR((pca_decode(c, pca_encode(c, pts)) - pts).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(Pca, IsotropicCloudWhitensToIdentity) {
  Rng rng(8);
  MatrixXd x(5, 10000);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 3.0 * rng.normal();
  const PcaCodec c = pca_fit(x, 5);
  const MatrixXd z = pca_encode(c, x);
  const MatrixXd zc = z.colwise() - z.rowwise().mean();
  const MatrixXd cov = zc * zc.transpose() / static_cast<double>(x.cols());
  EXPECT_LE((cov - MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Pca, ReconstructionErrorEqualsDiscardedEigenvalues) {
  const MatrixXd x = anisotropic(12, 400, 2);
  const PcaSpectrum s = pca_decompose(x);
  for (int z : {1, 4, 7, 11}) {
    const PcaCodec c = pca_from_spectrum(s, z);
    const double mse = mean_sq_error(x, pca_decode(c, pca_encode(c, x)));
    const double tail = s.eigenvalues.tail(12 - z).sum();
    EXPECT_NEAR(mse, tail, 1e-6 * tail) << "Z_D=" << z;
  }
}

TEST(Pca, EigenvalueSumIsTotalVariance) {
  const MatrixXd x = anisotropic(8, 300, 5);
  const PcaSpectrum s = pca_decompose(x);
  const MatrixXd xc = x.colwise() - x.rowwise().mean();
  EXPECT_NEAR(s.eigenvalues.sum(), xc.squaredNorm() / 300.0, 1e-10);
  for (Eigen::Index i = 1; i < s.eigenvalues.size(); ++i) EXPECT_GE(s.eigenvalues[i - 1], s.eigenvalues[i]);
}

TEST(Pca, EncodeMeanIsZero) {
  const MatrixXd x = anisotropic(6, 100, 3);
  const PcaCodec c = pca_fit(x, 3);
  EXPECT_LE(pca_encode(c, c.mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pca, SpanVectorsRoundTripExactly) {
  const MatrixXd x = anisotropic(6, 100, 4);
  const PcaCodec c = pca_fit(x, 3);
  // u - mean inside the kept span
  const VectorXd u = c.mean + c.decoder * VectorXd::LinSpaced(3, -1.0, 1.5);
  EXPECT_LE((pca_decode(c, pca_encode(c, u)) - u).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, ProjectionIsIdempotent) {
  const MatrixXd x = anisotropic(10, 200, 6);
  const PcaCodec c = pca_fit(x, 4);
  Rng rng(1);
  MatrixXd u(10, 7);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
  const MatrixXd once = pca_decode(c, pca_encode(c, u));
  const MatrixXd twice = pca_decode(c, pca_encode(c, once));
  EXPECT_LE((once - twice).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, StructuralInvariants) {
  const MatrixXd x = anisotropic(10, 500, 7);
  const PcaCodec c = pca_fit(x, 6);
  EXPECT_LE((c.projection * c.decoder - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
  const MatrixXd unwhitened = c.eigenvalues.cwiseSqrt().asDiagonal() * c.projection;
  EXPECT_LE((unwhitened * unwhitened.transpose() - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index i = 0; i < 6; ++i) {
    EXPECT_GT(c.eigenvalues[i], 0.0);
    if (i > 0) EXPECT_GE(c.eigenvalues[i - 1], c.eigenvalues[i]);
    Eigen::Index arg;
    unwhitened.row(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(unwhitened(i, arg), 0.0) << "sign convention, row " << i;
  }
  const MatrixXd z = pca_encode(c, x);
  const VectorXd var = (z.colwise() - z.rowwise().mean()).rowwise().squaredNorm() / 500.0;
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(var[i], 1.0, 0.05);
}

TEST(Pca, SnrNonDecreasingInLatentSize) {
  const MatrixXd x = anisotropic(16, 300, 9);
  const PcaSpectrum s = pca_decompose(x);
  double prev = -1e9;
  for (int z = 1; z <= 15; ++z) {
    const PcaCodec c = pca_from_spectrum(s, z);
    const double snr = snr_db(x, pca_decode(c, pca_encode(c, x)));
    EXPECT_GE(snr, prev - 1e-9) << z;
    prev = snr;
  }
}

TEST(Pca, RankDeficiencyShrinksLatentSize) {
  MatrixXd x = anisotropic(6, 50, 10);
  x.row(4) = x.row(0);
  x.row(5) = 2.0 * x.row(1) - x.row(2);
  const PcaCodec c = pca_fit(x, 6);
  EXPECT_EQ(c.latent_dim(), 4);
  EXPECT_LE(mean_sq_error(x, pca_decode(c, pca_encode(c, x))), 1e-18 * x.squaredNorm() + 1e-20);
}

TEST(Pca, DeterministicSigns) {
  const MatrixXd x = anisotropic(8, 100, 11);
  const PcaCodec a = pca_fit(x, 5), b = pca_fit(x, 5);
  EXPECT_EQ(a.projection, b.projection);
  EXPECT_EQ(encode_pca(a), encode_pca(b));
}

TEST(Pca, Errors) {
  const MatrixXd x = anisotropic(4, 10, 12);
  EXPECT_THROW(pca_fit(x, 5), ArgumentError);
  EXPECT_THROW(pca_fit(x, 0), ArgumentError);
  EXPECT_THROW(pca_fit(x.leftCols(3), 3), ArgumentError);  // need N > Z_D
  const PcaCodec c = pca_fit(x, 2);
  EXPECT_THROW(pca_encode(c, MatrixXd::Zero(3, 1)), ArgumentError);
  EXPECT_THROW(pca_decode(c, MatrixXd::Zero(3, 1)), ArgumentError);
  EXPECT_THROW(pca_fit(MatrixXd::Ones(3, 10), 2), NumericError);
}

TEST(Pca, CheckpointLayoutAndRoundTrip) {
  const MatrixXd x = anisotropic(5, 60, 13);
  const PcaCodec c = pca_fit(x, 3);
  const auto bytes = encode_pca(c);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "AVPC");
  EXPECT_EQ(bytes.size(), 16u + 4u * (5 + 2 * 15 + 3));
  const PcaCodec back = decode_pca(bytes);
  EXPECT_EQ(back.latent_dim(), 3);
  EXPECT_EQ(back.input_dim(), 5);
  EXPECT_LE((back.projection - c.projection).cwiseAbs().maxCoeff(), 1e-6 * c.projection.cwiseAbs().maxCoeff());
  EXPECT_LE((back.decoder - c.decoder).cwiseAbs().maxCoeff(), 1e-6 * c.decoder.cwiseAbs().maxCoeff());
  auto truncated = bytes;
  truncated.resize(bytes.size() - 4);
  EXPECT_THROW(decode_pca(truncated), FormatError);
}
