#pragma once

#include "audioviewer/mlp.hpp"
#include "audioviewer/vae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace av {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbations straddling a kink
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradEval {
  double loss = 0.0;
  Tensors<double> grads;
};

/// `floor` keeps round-off on exactly-zero gradients from counting as error.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max(floor, std::abs(analytic) + std::abs(numeric));
}

/// Central-difference check of every parameter.
///
/// `fn(params, trace)` evaluates the loss and its analytic gradient and
/// records branch decisions into `trace`; a coordinate whose +eps and -eps
/// evaluations take different branches is skipped.
template <class Fn>
GradCheckReport grad_check(Tensors<double> params, Fn&& fn, double eps = 1e-4, double floor = 1e-8) {
  BranchTrace base_trace;
  const GradEval base = fn(params, &base_trace);
  require(base.grads.size() == params.size(), "grad_check: gradient tensor count mismatch");

  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Eigen::Index k = 0; k < params[t].size(); ++k) {
      double& p = params[t].data()[k];
      const double saved = p;
      BranchTrace plus_trace, minus_trace;
      p = saved + eps;
      const double fp = fn(params, &plus_trace).loss;
      p = saved - eps;
      const double fm = fn(params, &minus_trace).loss;
      p = saved;
      if (plus_trace.bits != minus_trace.bits || plus_trace.bits != base_trace.bits) {
        ++report.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = base.grads[t].data()[k];
      const double err = relative_error(analytic, numeric, floor);
      ++report.checked;
      if (err > report.max_rel_error || !std::isfinite(err)) {
        report.max_rel_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
        report.worst_tensor = t;
        report.worst_index = static_cast<std::size_t>(k);
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

/// grad_check over every parameter of the ELBO with fixed noise.
inline GradCheckReport grad_check_elbo(const MlpVae<double>& vae, const MatrixXd& x, const MatrixXd& noise,
                                       double eps = 1e-4) {
  MlpVae<double> probe = vae;
  return grad_check(
      vae.params,
      [&](const Tensors<double>& p, BranchTrace* trace) {
        probe.params = p;
        auto r = elbo_loss_and_grads(probe, x, noise, 1.0, trace);
        return GradEval{r.loss, std::move(r.grads)};
      },
      eps);
}

}  // namespace av
