#pragma once

#include "audioviewer/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

namespace av {

inline constexpr double kSnrCapDb = 300.0;

/// 10 log10(sum ref^2 / sum (ref - est)^2), capped at 300 dB for exact matches.
inline double snr_db(const MatrixXd& reference, const MatrixXd& estimate) {
  require(reference.rows() == estimate.rows() && reference.cols() == estimate.cols(), "snr_db: shape mismatch");
  const double signal = reference.squaredNorm();
  if (!(signal > 0.0)) throw ArgumentError("snr_db: all-zero reference");
  const double noise = (reference - estimate).squaredNorm();
  if (noise < 1e-12 * signal) return kSnrCapDb;
  return 10.0 * std::log10(signal / noise);
}

/// Latent positions over time, one row per step.
struct LatentTrajectory {
  MatrixXd points;  // T x d
  double dt = 0.010;
};

/// Mean ||z_{t+1} - z_t|| / dt.
inline double velocity(const LatentTrajectory& traj) {
  require(traj.dt > 0.0, "velocity: dt must be positive");
  const auto T = traj.points.rows();
  if (T < 2) throw ArgumentError("velocity: trajectory needs at least 2 points");
  const MatrixXd diff = traj.points.bottomRows(T - 1) - traj.points.topRows(T - 1);
  return diff.rowwise().norm().mean() / traj.dt;
}

/// Mean ||z_{t+1} - 2 z_t + z_{t-1}|| / dt^2.
inline double acceleration(const LatentTrajectory& traj) {
  require(traj.dt > 0.0, "acceleration: dt must be positive");
  const auto T = traj.points.rows();
  if (T < 3) throw ArgumentError("acceleration: trajectory needs at least 3 points");
  const MatrixXd second =
      traj.points.bottomRows(T - 2) - 2.0 * traj.points.middleRows(1, T - 2) + traj.points.topRows(T - 2);
  return second.rowwise().norm().mean() / (traj.dt * traj.dt);
}

struct MdsResult {
  MatrixXd coords;  // N x k
  VectorXd eigenvalues;
  bool degenerate = false;  // all points identical
};

/// Classical (Torgerson) MDS of the rows of `points`.
inline MdsResult mds_embed(const MatrixXd& points, int k = 3) {
  const auto n = points.rows();
  require(k >= 1, "mds: k must be positive");
  require(n >= k + 1, "mds: need at least k+1 points");
  MatrixXd d2 = MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d2(i, j) = d2(j, i) = (points.row(i) - points.row(j)).squaredNorm();

  MdsResult out;
  out.coords = MatrixXd::Zero(n, k);
  out.eigenvalues = VectorXd::Zero(k);
  if (d2.maxCoeff() <= 0.0) {
    out.degenerate = true;
    log_warn("mds: all points identical, returning zeros");
    return out;
  }
  const MatrixXd centering = MatrixXd::Identity(n, n) - MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const MatrixXd b = -0.5 * centering * d2 * centering;
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(b);
  if (solver.info() != Eigen::Success) throw NumericError("mds: eigendecomposition failed");
  for (int i = 0; i < k; ++i) {
    const Eigen::Index idx = n - 1 - i;  // ascending order from Eigen
    const double lambda = std::max(0.0, solver.eigenvalues()[idx]);
    out.eigenvalues[i] = lambda;
    VectorXd v = solver.eigenvectors().col(idx);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    out.coords.col(i) = v * std::sqrt(lambda);
  }
  return out;
}

/// Sum of consecutive distances between rows.
inline double path_length(const MatrixXd& coords) {
  if (coords.rows() < 2) return 0.0;
  return (coords.bottomRows(coords.rows() - 1) - coords.topRows(coords.rows() - 1)).rowwise().norm().sum();
}

}  // namespace av
