#pragma once

#include "rtr/linalg.hpp"
#include "rtr/samples.hpp"
#include "rtr/tensor.hpp"

#include <string>
#include <vector>

namespace rtr {

/// sign(y) * min(|y|, tau).
double truncate(double y, double tau);

/// (1/n) sum_i truncate(y_i, tau) X_i. tau = +inf gives the plain moment estimator.
Tensor3d robust_moment_tensor(const SampleSet& samples, double tau);

/// Truncated HOSVD: U_k from the leading r_k left singular vectors of each
/// unfolding, core = T x0 U0^T x1 U1^T x2 U2^T.
TuckerFactorsd hosvd(const Tensor3d& t, const Ranks& ranks);

/// HOSVD of A_tilde rescaled to U_k = b * U_k, core = core / b^3.
TuckerFactorsd init_factors(const Tensor3d& a_tilde, const Ranks& ranks, double b);

/// Winsorized (1+delta)-th absolute moment of the responses,
/// (1/n) sum_i min(|y_i|, q)^(1+delta) with q the empirical 99th percentile of |y|.
double response_moment_proxy(const Eigen::VectorXd& y, double delta);

/// (moment * n / df)^(1/(1+delta)); falls back to 1 when the moment is zero.
double scale_threshold(double moment, double n, double df, double delta);

/// Number of singular values above `threshold`, floored at 1 and capped at the
/// smaller matrix dimension.
Index numerical_rank(const Eigen::VectorXd& singular_values, double threshold);

struct RankSelectConfig
{
  double singular_value_ratio_threshold = 0.1;
  int max_outer_iters = 10;
  /// Multiplier on the noise-bulk edge sqrt(mean psi^2 / n) (sqrt(p_k) + sqrt(P / p_k))
  /// below which singular values are not counted. Zero disables the floor.
  double noise_edge_factor = 1.2;

  void validate() const;
};

struct RankSelectStep
{
  double tau = 0;
  Ranks ranks{0, 0, 0};
};

struct RankSelectResult
{
  Ranks ranks{1, 1, 1};
  /// Step 0 is the untruncated moment tensor (tau = +inf).
  std::vector<RankSelectStep> trace;
  bool converged = false;
  bool degenerate = false;
  std::string warning;
};

/// Iterative rank estimation: start from the rank of the plain moment tensor,
/// then alternate between recomputing tau from the current rank guess and
/// re-estimating the rank of the truncated moment tensor until the triple repeats.
RankSelectResult select_rank(const SampleSet& samples, const RankSelectConfig& cfg = {});

/// Ranks of a moment tensor under the select_rank counting rule.
Ranks estimate_ranks(const Tensor3d& moment, const SampleSet& samples, double tau, const RankSelectConfig& cfg);

} // namespace rtr
