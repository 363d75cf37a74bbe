#include "rtr/optimizer.hpp"

#include <cmath>
#include <limits>

namespace rtr {

namespace {

constexpr double kStepScale = 0.2;
constexpr int kDefaultMaxIters = 400;
// Objective growth beyond this factor of its starting value counts as divergence.
constexpr double kBlowupFactor = 1e12;

bool positive_or_inf(double v) { return v > 0; }

} // namespace

void GDConfig::validate() const
{
  if (!positive_or_inf(tau))
    throw std::invalid_argument("tau must be positive");
  if (!positive_or_inf(varpi))
    throw std::invalid_argument("varpi must be positive");
  if (!(a >= 0) || !std::isfinite(a))
    throw std::invalid_argument("a must be finite and nonnegative");
  if (!(b > 0) || !std::isfinite(b))
    throw std::invalid_argument("b must be finite and positive");
  if (!(eta > 0) || !std::isfinite(eta))
    throw std::invalid_argument("eta must be finite and positive");
  if (t_max < 1)
    throw std::invalid_argument("t_max must be at least 1");
  if (!(rel_tol >= 0))
    throw std::invalid_argument("rel_tol must be nonnegative");
  if (!(delta > 0 && delta <= 1))
    throw std::invalid_argument("delta must lie in (0, 1]");
  if (!(moment_proxy > 0))
    throw std::invalid_argument("moment_proxy must be positive");
  if (max_step_halvings < 0)
    throw std::invalid_argument("max_step_halvings must be nonnegative");
  for (Index r : ranks)
    if (r < 1)
      throw std::invalid_argument("ranks must be positive");
}

namespace {

void check_ranks(const SampleSet& samples, const Ranks& ranks)
{
  for (int k = 0; k < 3; ++k)
    if (ranks[k] < 1 || ranks[k] > samples.dims[k])
      throw std::invalid_argument("rank " + std::to_string(ranks[k]) + " invalid for mode " + std::to_string(k));
}

// Fills a, b and eta from the spectrum of the moment tensor truncated at cfg.tau.
void set_scale_from_spectrum(const SampleSet& samples, GDConfig& cfg)
{
  const auto spectrum = spectrum_summary(robust_moment_tensor(samples, cfg.tau), cfg.ranks);
  if (spectrum.lambda_bar > 0 && std::isfinite(spectrum.lambda_bar)) {
    cfg.b = std::pow(spectrum.lambda_bar, 0.25);
    cfg.a = spectrum.rank_deficient ? 0.0 : spectrum.lambda_bar / (spectrum.kappa * spectrum.kappa);
  } else {
    cfg.b = 1.0;
    cfg.a = 1.0;
  }
  // Curvature along every block scales like lambda_bar^(3/2) = b^6.
  cfg.eta = kStepScale / std::pow(cfg.b, 6);
}

} // namespace

GDConfig default_tuning_with_moment(const SampleSet& samples, const Ranks& ranks, double delta, double moment)
{
  samples.validate();
  check_ranks(samples, ranks);
  if (!(delta > 0 && delta <= 1))
    throw std::invalid_argument("delta must lie in (0, 1]");

  GDConfig cfg;
  cfg.ranks = ranks;
  cfg.delta = delta;
  cfg.moment_proxy = moment > 0 ? moment : 1.0;
  cfg.t_max = kDefaultMaxIters;
  const double df = degrees_of_freedom(samples.dims, ranks);
  cfg.tau = scale_threshold(moment, static_cast<double>(samples.size()), df, delta);
  cfg.varpi = cfg.tau;
  set_scale_from_spectrum(samples, cfg);
  return cfg;
}

GDConfig least_squares_tuning(const SampleSet& samples, const Ranks& ranks)
{
  samples.validate();
  check_ranks(samples, ranks);
  GDConfig cfg;
  cfg.ranks = ranks;
  cfg.t_max = kDefaultMaxIters;
  cfg.tau = std::numeric_limits<double>::infinity();
  cfg.varpi = cfg.tau;
  set_scale_from_spectrum(samples, cfg);
  return cfg;
}

GDConfig default_tuning(const SampleSet& samples, const Ranks& ranks, double delta)
{
  samples.validate();
  return default_tuning_with_moment(samples, ranks, delta, response_moment_proxy(samples.response, delta));
}

double estimation_error(const Tensor3d& a_hat, const Tensor3d& a_star)
{
  a_hat.check_same_dims(a_star);
  return (a_hat.data() - a_star.data()).stableNorm();
}

namespace {

FitResult run_descent(const SampleSet& samples, const GDConfig& cfg, double eta, const TuckerFactorsd& init,
                      const std::optional<Tensor3d>& truth)
{
  const HuberParams huber(cfg.varpi);
  FitResult out;
  out.eta_used = eta;
  TuckerFactorsd f = init;
  Tensor3d estimate = tucker_reconstruct(f);

  Eigen::VectorXd r = residuals(samples, estimate);
  double prev = empirical_loss_from_residuals(r, huber) + balance_penalty(f, cfg.a, cfg.b);
  const double blowup = kBlowupFactor * std::max(1.0, prev);
  out.objective_trace.push_back(prev);
  if (truth)
    out.error_trace.push_back(estimation_error(estimate, *truth));

  for (int t = 0; t < cfg.t_max; ++t) {
    const Tensor3d g = loss_gradient_from_residuals(samples, r, huber);
    const FactorGradients grads = factor_gradients(g, f, cfg.a, cfg.b);
    for (int k = 0; k < 3; ++k)
      f.factors[k] -= eta * grads.factors[k];
    f.core -= eta * grads.core;

    estimate = tucker_reconstruct(f);
    r = residuals(samples, estimate);
    const double obj = empirical_loss_from_residuals(r, huber) + balance_penalty(f, cfg.a, cfg.b);
    out.objective_trace.push_back(obj);
    if (truth)
      out.error_trace.push_back(estimation_error(estimate, *truth));
    out.iterations_run = t + 1;

    if (!std::isfinite(obj) || obj > blowup) {
      out.diverged = true;
      break;
    }
    if (std::abs(obj - prev) <= cfg.rel_tol * std::max(1.0, prev)) {
      out.converged = true;
      break;
    }
    prev = obj;
  }
  out.factors = std::move(f);
  out.estimate = std::move(estimate);
  return out;
}

} // namespace

FitResult fit(const SampleSet& samples, const GDConfig& cfg, const std::optional<Tensor3d>& ground_truth)
{
  samples.validate();
  cfg.validate();
  if (ground_truth)
    samples.check_tensor(*ground_truth);
  for (int k = 0; k < 3; ++k)
    if (cfg.ranks[k] > samples.dims[k])
      throw std::invalid_argument("rank exceeds dimension in mode " + std::to_string(k));

  const TuckerFactorsd init = init_factors(robust_moment_tensor(samples, cfg.tau), cfg.ranks, cfg.b);

  double eta = cfg.eta;
  FitResult result = run_descent(samples, cfg, eta, init, ground_truth);
  int halvings = 0;
  while (result.diverged && halvings < cfg.max_step_halvings) {
    ++halvings;
    eta *= 0.5;
    result = run_descent(samples, cfg, eta, init, ground_truth);
  }
  result.step_halvings = halvings;
  return result;
}

} // namespace rtr
