#include "rtr/robust_init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rtr {

double truncate(double y, double tau)
{
  if (!(tau > 0))
    throw std::invalid_argument("truncation level must be positive");
  return std::clamp(y, -tau, tau);
}

Tensor3d robust_moment_tensor(const SampleSet& samples, double tau)
{
  samples.validate();
  Eigen::VectorXd clipped(samples.size());
  for (Index i = 0; i < clipped.size(); ++i)
    clipped[i] = truncate(samples.response[i], tau);
  return Tensor3d(samples.dims, (samples.design * clipped) / static_cast<double>(samples.size()));
}

TuckerFactorsd hosvd(const Tensor3d& t, const Ranks& ranks)
{
  TuckerFactorsd f;
  for (int k = 0; k < 3; ++k) {
    const Eigen::MatrixXd m = unfold(t, k);
    if (ranks[k] < 1 || ranks[k] > std::min(m.rows(), m.cols()))
      throw std::invalid_argument("hosvd: rank " + std::to_string(ranks[k]) + " invalid for mode " + std::to_string(k)
                                  + " unfolding of size " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    f.factors[k] = top_left_singular(m, ranks[k]);
  }
  f.core = multilinear_product(t, f.factors, /*transpose=*/true);
  return f;
}

TuckerFactorsd init_factors(const Tensor3d& a_tilde, const Ranks& ranks, double b)
{
  if (!(b > 0))
    throw std::invalid_argument("init_factors: b must be positive");
  TuckerFactorsd f = hosvd(a_tilde, ranks);
  for (auto& u : f.factors)
    u *= b;
  f.core *= 1.0 / (b * b * b);
  return f;
}

double response_moment_proxy(const Eigen::VectorXd& y, double delta)
{
  if (y.size() == 0)
    throw std::invalid_argument("moment proxy of an empty response vector");
  std::vector<double> mags(y.size());
  for (Index i = 0; i < y.size(); ++i)
    mags[i] = std::abs(y[i]);
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  // Linear interpolation between order statistics (type 7).
  const double pos = 0.99 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double q99 = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  double sum = 0;
  for (double m : mags)
    sum += std::pow(std::min(m, q99), 1.0 + delta);
  return sum / static_cast<double>(mags.size());
}

double scale_threshold(double moment, double n, double df, double delta)
{
  if (!(delta > 0 && delta <= 1))
    throw std::invalid_argument("moment exponent delta must lie in (0, 1]");
  if (!(df > 0) || !(n > 0))
    throw std::invalid_argument("threshold needs positive n and df");
  if (!(moment > 0))
    return 1.0;
  return std::pow(moment * n / df, 1.0 / (1.0 + delta));
}

Index numerical_rank(const Eigen::VectorXd& sv, double threshold)
{
  Index count = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > threshold)
      ++count;
  return std::clamp<Index>(count, 1, std::max<Index>(sv.size(), 1));
}

void RankSelectConfig::validate() const
{
  if (!(singular_value_ratio_threshold > 0 && singular_value_ratio_threshold < 1))
    throw std::invalid_argument("singular_value_ratio_threshold must lie in (0, 1)");
  if (max_outer_iters < 1)
    throw std::invalid_argument("max_outer_iters must be at least 1");
  if (!(noise_edge_factor >= 0))
    throw std::invalid_argument("noise_edge_factor must be nonnegative");
}

Ranks estimate_ranks(const Tensor3d& moment, const SampleSet& samples, double tau, const RankSelectConfig& cfg)
{
  const double n = static_cast<double>(samples.size());
  double psi_sq = 0;
  for (Index i = 0; i < samples.size(); ++i) {
    const double v = truncate(samples.response[i], tau);
    psi_sq += v * v;
  }
  const double noise_scale = std::sqrt(psi_sq / n / n);
  const double total = static_cast<double>(dims_product(moment.dims()));

  Ranks r{};
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd sv = singular_values(unfold(moment, k));
    const double pk = static_cast<double>(moment.dim(k));
    const double edge = cfg.noise_edge_factor * noise_scale * (std::sqrt(pk) + std::sqrt(total / pk));
    r[k] = numerical_rank(sv, std::max(cfg.singular_value_ratio_threshold * sv[0], edge));
  }
  return r;
}

RankSelectResult select_rank(const SampleSet& samples, const RankSelectConfig& cfg)
{
  samples.validate();
  cfg.validate();
  RankSelectResult out;

  if (samples.response.cwiseAbs().maxCoeff() == 0) {
    out.degenerate = true;
    out.converged = true;
    out.warning = "all responses are zero; returning rank (1,1,1)";
    out.trace.push_back({std::numeric_limits<double>::infinity(), out.ranks});
    return out;
  }

  const double inf = std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(samples.size());
  // Second moment of winsorized responses, the plug-in for M.
  const double moment = response_moment_proxy(samples.response, 1.0);

  Ranks current = estimate_ranks(robust_moment_tensor(samples, inf), samples, inf, cfg);
  out.trace.push_back({inf, current});

  for (int iter = 0; iter < cfg.max_outer_iters; ++iter) {
    const double tau = scale_threshold(moment, n, degrees_of_freedom(samples.dims, current), 1.0);
    const Ranks next = estimate_ranks(robust_moment_tensor(samples, tau), samples, tau, cfg);
    out.trace.push_back({tau, next});
    if (next == current) {
      out.converged = true;
      break;
    }
    current = next;
  }
  out.ranks = out.trace.back().ranks;
  return out;
}

} // namespace rtr
