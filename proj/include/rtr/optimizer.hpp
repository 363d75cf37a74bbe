#pragma once

#include "rtr/huber.hpp"
#include "rtr/robust_init.hpp"
#include "rtr/samples.hpp"

#include <optional>
#include <vector>

namespace rtr {

/// Tuning for the robust gradient descent. tau and varpi may be +inf, which
/// turns off response truncation and reduces the Huber loss to least squares.
struct GDConfig
{
  double tau = 1.0;
  double varpi = 1.0;
  double a = 1.0;
  double b = 1.0;
  double eta = 0.1;
  int t_max = 400;
  double rel_tol = 1e-8;
  double delta = 1.0;
  double moment_proxy = 1.0;
  Ranks ranks{1, 1, 1};
  /// Number of times eta may be halved after a divergent run.
  int max_step_halvings = 5;

  void validate() const;
};

/// Scale rules for tau, varpi, a, b and eta computed from the data:
/// tau = varpi = (M n / df)^(1/(1+delta)) with M the winsorized response moment,
/// b = lambda_bar^(1/4), a = lambda_bar / kappa^2, eta = 0.2 / b^6, where the
/// spectrum is read off the truncated moment tensor.
GDConfig default_tuning(const SampleSet& samples, const Ranks& ranks, double delta = 1.0);

/// Same, with a caller-supplied value for the noise moment instead of the plug-in.
GDConfig default_tuning_with_moment(const SampleSet& samples, const Ranks& ranks, double delta, double moment);

/// Scale rules for a, b and eta with truncation and Huber clipping disabled
/// (tau = varpi = +inf): the least-squares baseline.
GDConfig least_squares_tuning(const SampleSet& samples, const Ranks& ranks);

struct FitResult
{
  TuckerFactorsd factors;
  Tensor3d estimate;
  std::vector<double> objective_trace;
  /// Empty unless ground truth was supplied.
  std::vector<double> error_trace;
  int iterations_run = 0;
  bool converged = false;
  bool diverged = false;
  double eta_used = 0;
  int step_halvings = 0;
};

/// Robust gradient descent: truncated moment initializer, HOSVD, b-scaled
/// factors, then simultaneous gradient steps on all factors and the core.
FitResult fit(const SampleSet& samples, const GDConfig& cfg, const std::optional<Tensor3d>& ground_truth = std::nullopt);

double estimation_error(const Tensor3d& a_hat, const Tensor3d& a_star);

} // namespace rtr
