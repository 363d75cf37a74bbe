#include "rtr/diagnostics.hpp"

#include "rtr/linalg.hpp"
#include "rtr/moments.hpp"
#include "rtr/parallel.hpp"
#include "rtr/robust_init.hpp"
#include "rtr/stats.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rtr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd gaussian_matrix(Index rows, Index cols, Rng& rng)
{
  Eigen::MatrixXd m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r)
      m(r, c) = rng.normal();
  return m;
}

Eigen::MatrixXd random_orthonormal(Index rows, Index cols, Rng& rng)
{
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(rows, cols, rng));
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

Tensor3d gaussian_tensor(const Dims& dims, Rng& rng)
{
  Tensor3d t(dims);
  for (Index i = 0; i < t.size(); ++i)
    t.data()[i] = rng.normal();
  return t;
}

// Unit direction in one block: 0 is the core, 1..3 are the factors.
Eigen::VectorXd random_unit(Index size, Rng& rng)
{
  Eigen::VectorXd v(size);
  for (Index i = 0; i < size; ++i)
    v[i] = rng.normal();
  const double norm = v.norm();
  return norm > 0 ? Eigen::VectorXd(v / norm) : random_unit(size, rng);
}

TuckerFactorsd with_block(const TuckerFactorsd& f, int block, const Eigen::VectorXd& v)
{
  TuckerFactorsd g = f;
  if (block == 0) {
    g.core = Tensor3d(f.core.dims(), v);
  } else {
    auto& u = g.factors[block - 1];
    u = Eigen::Map<const Eigen::MatrixXd>(v.data(), u.rows(), u.cols());
  }
  return g;
}

TuckerFactorsd shifted(const TuckerFactorsd& f, int block, const Eigen::VectorXd& v, double t)
{
  TuckerFactorsd g = f;
  if (block == 0) {
    g.core.data() += t * v;
  } else {
    auto& u = g.factors[block - 1];
    u += t * Eigen::Map<const Eigen::MatrixXd>(v.data(), u.rows(), u.cols());
  }
  return g;
}

double block_dot(const FactorGradients& g, int block, const Eigen::VectorXd& v)
{
  if (block == 0)
    return g.core.data().dot(v);
  const auto& m = g.factors[block - 1];
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()).dot(v);
}

Index block_size(const TuckerFactorsd& f, int block)
{
  return block == 0 ? f.core.size() : f.factors[block - 1].size();
}

} // namespace

std::string_view to_string(FDRegime r) { return r == FDRegime::quadratic ? "quadratic" : "clipped"; }

FDRegime parse_fd_regime(std::string_view name)
{
  if (name == "quadratic")
    return FDRegime::quadratic;
  if (name == "clipped")
    return FDRegime::clipped;
  throw std::invalid_argument("unknown gradient-check regime '" + std::string(name) + "'");
}

FDInstance make_fd_instance(const Dims& dims, const Ranks& ranks, Index n, FDRegime regime, std::uint64_t seed)
{
  SyntheticSpec spec;
  spec.dims = dims;
  spec.ranks = ranks;
  spec.n = n;
  spec.noise = NoiseModel{NoiseFamily::student_t, 3, 1};
  spec.seed = seed;
  Dataset data = gen_dataset(spec);

  FDInstance inst;
  inst.samples = std::move(data.samples);
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(StreamTag::perturbation)}));
  inst.factors.core = gaussian_tensor(ranks, rng);
  for (int k = 0; k < 3; ++k)
    inst.factors.factors[k] = gaussian_matrix(dims[k], ranks[k], rng) / std::sqrt(static_cast<double>(dims[k]));
  if (regime == FDRegime::quadratic) {
    inst.varpi = 1e12;
  } else {
    const Eigen::VectorXd r = residuals(inst.samples, tucker_reconstruct(inst.factors));
    std::vector<double> abs_r(r.size());
    for (Index i = 0; i < r.size(); ++i)
      abs_r[i] = std::abs(r[i]);
    inst.varpi = 0.5 * median(abs_r);
  }
  return inst;
}

FDCheckReport gradient_fd_check(const SampleSet& samples, const TuckerFactorsd& f, const HuberParams& p, double a,
                                double b, const FDCheckOptions& opts)
{
  samples.validate();
  f.validate();
  if (f.dims() != samples.dims)
    throw std::invalid_argument("factor dims " + dims_string(f.dims()) + " do not match sample dims "
                                + dims_string(samples.dims));
  if (!(opts.h > 0))
    throw std::invalid_argument("finite-difference step must be positive");
  if (opts.directions_per_block < 1)
    throw std::invalid_argument("directions_per_block must be at least 1");

  const Tensor3d estimate = tucker_reconstruct(f);
  const Eigen::VectorXd r = residuals(samples, estimate);
  const FactorGradients grad = factor_gradients(loss_gradient_from_residuals(samples, r, p), f, a, b);

  FDCheckReport report;
  Rng rng(derive_seed(opts.seed, {static_cast<std::uint64_t>(StreamTag::direction)}));
  for (int block = 0; block < 4; ++block) {
    for (int d = 0; d < opts.directions_per_block; ++d) {
      Eigen::VectorXd v;
      bool clear = false;
      for (int attempt = 0; attempt <= opts.max_redraws && !clear; ++attempt) {
        v = random_unit(block_size(f, block), rng);
        if (!opts.avoid_kinks || std::isinf(p.varpi))
          break;
        // Moving along a single block changes each residual linearly.
        const Eigen::VectorXd rdot = -(samples.design.transpose() * tucker_reconstruct(with_block(f, block, v)).data());
        clear = true;
        for (Index i = 0; i < r.size() && clear; ++i)
          clear = std::abs(std::abs(r[i]) - p.varpi) > 10.0 * opts.h * std::max(1.0, std::abs(rdot[i]));
      }
      if (opts.avoid_kinks && !std::isinf(p.varpi) && !clear)
        ++report.kink_hits;

      const double analytic = block_dot(grad, block, v);
      const double fd = (objective(samples, shifted(f, block, v, opts.h), p, a, b)
                         - objective(samples, shifted(f, block, v, -opts.h), p, a, b))
                        / (2.0 * opts.h);
      const double rel = std::abs(fd - analytic) / std::max({std::abs(analytic), std::abs(fd), opts.abs_floor});
      report.block_rel_error[block] = std::max(report.block_rel_error[block], rel);
      report.max_rel_error = std::max(report.max_rel_error, rel);
      report.max_analytic_abs = std::max(report.max_analytic_abs, std::abs(analytic));
      report.max_fd_abs = std::max(report.max_fd_abs, std::abs(fd));
      ++report.directions;
    }
  }
  return report;
}

Tensor3d random_low_rank_direction(const Dims& dims, const Ranks& ranks, Rng& rng)
{
  for (int k = 0; k < 3; ++k)
    if (ranks[k] < 1 || ranks[k] > dims[k])
      throw std::invalid_argument("perturbation rank " + std::to_string(ranks[k]) + " invalid for mode "
                                  + std::to_string(k));
  TuckerFactorsd f;
  f.core = gaussian_tensor(ranks, rng);
  for (int k = 0; k < 3; ++k)
    f.factors[k] = random_orthonormal(dims[k], ranks[k], rng);
  Tensor3d t = tucker_reconstruct(f);
  const double norm = t.norm();
  if (!(norm > 0))
    return random_low_rank_direction(dims, ranks, rng);
  t *= 1.0 / norm;
  return t;
}

RSCReport rsc_check(const SampleSet& samples, const Tensor3d& a_star, double radius, const Ranks& ranks,
                    const HuberParams& p, int trials, std::uint64_t seed)
{
  samples.validate();
  samples.check_tensor(a_star);
  if (!(radius > 0) || std::isinf(radius))
    throw std::invalid_argument("RSC radius must be positive and finite");
  if (trials < 1)
    throw std::invalid_argument("RSC check needs at least one trial");

  RSCReport report;
  report.trials = trials;
  report.radius = radius;
  report.varpi = p.varpi;
  report.seed = seed;
  for (int k = 0; k < 3; ++k)
    report.perturbation_ranks[k] = std::min(2 * ranks[k], samples.dims[k]);

  const Tensor3d g_star = loss_gradient_full(samples, a_star, p);
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(StreamTag::perturbation)}));
  report.min_ratio = kInf;
  double sum = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Tensor3d delta = random_low_rank_direction(samples.dims, report.perturbation_ranks, rng);
    // 1 - U lies in (0, 1], so the perturbation is never zero.
    delta *= radius * (1.0 - rng.uniform());
    const double nsq = delta.squaredNorm();
    const double ratio = inner(loss_gradient_full(samples, a_star + delta, p) - g_star, delta) / nsq;
    report.max_perturbation_norm = std::max(report.max_perturbation_norm, std::sqrt(nsq));
    report.min_ratio = std::min(report.min_ratio, ratio);
    sum += ratio;
    if (ratio >= report.threshold)
      ++report.satisfied_count;
  }
  report.mean_ratio = sum / trials;
  return report;
}

double estimate_c1(const SampleSet& samples, int directions, std::uint64_t seed)
{
  samples.validate();
  if (directions < 1)
    throw std::invalid_argument("estimate_c1 needs at least one direction");
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(StreamTag::direction)}));
  double best = 0;
  for (int d = 0; d < directions; ++d) {
    const Eigen::VectorXd v = random_unit(samples.design.rows(), rng);
    const Eigen::ArrayXd proj = (samples.design.transpose() * v).array();
    best = std::max(best, std::pow(proj.pow(4).mean(), 0.25));
  }
  return best;
}

double rsc_varpi(double moment, double delta, double c1, double radius)
{
  if (!(moment >= 0) || !(delta > 0) || !(c1 >= 0) || !(radius > 0))
    throw std::invalid_argument("rsc_varpi: invalid arguments");
  return std::max(std::pow(4.0 * moment, 1.0 / (1.0 + delta)), 4.0 * c1 * c1 * radius);
}

// ---------------------------------------------------------------------------

void SingularBoundsConfig::validate() const
{
  noise.validate();
  if (n < 1 || d1 < 1 || d2 < 1)
    throw std::invalid_argument("singular bounds: n, d1 and d2 must be positive");
  if (!(tau > 0))
    throw std::invalid_argument("singular bounds: tau must be positive");
  if (!(t > 0))
    throw std::invalid_argument("singular bounds: t must be positive");
  if (!(constant_c >= 0))
    throw std::invalid_argument("singular bounds: constant must be non-negative");
  if (reps < 1)
    throw std::invalid_argument("singular bounds: reps must be at least 1");
}

namespace {

struct BoundValues
{
  double upper;
  double lower;
};

BoundValues bound_values(const SingularBoundsConfig& cfg, double psi2, double c, double t)
{
  const double n = static_cast<double>(cfg.n);
  const double slack = std::isinf(cfg.tau) ? (psi2 > 0 ? kInf : 0.0) : cfg.tau * cfg.tau * std::sqrt(2.0 * t / n);
  const double s1 = std::sqrt(static_cast<double>(cfg.d1));
  const double s2 = std::sqrt(static_cast<double>(cfg.d2));
  const double st = std::sqrt(2.0 * t);
  const double hi = s1 + c * s2 + st;
  const double lo = std::max(0.0, s1 - c * s2 - st);
  return {(psi2 + slack) / n * hi * hi, std::max(0.0, psi2 - slack) / n * lo * lo};
}

} // namespace

SingularBoundsCoverage singular_bounds_coverage(const SingularBoundsReport& draws, const SingularBoundsConfig& cfg, double constant_c, double t)
{
  const BoundValues b = bound_values(cfg, draws.psi_second_moment, constant_c, t);
  SingularBoundsCoverage cov;
  const std::size_t reps = draws.sigma_max.size();
  if (reps == 0)
    return cov;
  for (std::size_t i = 0; i < reps; ++i) {
    const double smax2 = draws.sigma_max[i] * draws.sigma_max[i];
    const double smin2 = draws.sigma_min[i] * draws.sigma_min[i];
    if (smax2 <= b.upper)
      cov.upper += 1;
    if (smin2 >= b.lower)
      cov.lower += 1;
  }
  cov.upper /= static_cast<double>(reps);
  cov.lower /= static_cast<double>(reps);
  return cov;
}

SingularBoundsReport truncated_singular_bounds(const SingularBoundsConfig& cfg)
{
  cfg.validate();
  SingularBoundsReport report;
  report.psi_second_moment = truncated_second_moment(cfg.noise, cfg.tau);
  report.sigma_max.assign(cfg.reps, 0.0);
  report.sigma_min.assign(cfg.reps, 0.0);

  parallel_for(static_cast<std::size_t>(cfg.reps), cfg.threads, [&](std::size_t rep) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, {rep});
    const Eigen::VectorXd eta
        = gen_noise(cfg.noise, cfg.n, derive_seed(rep_seed, {static_cast<std::uint64_t>(StreamTag::noise)}));
    Rng rng(derive_seed(rep_seed, {static_cast<std::uint64_t>(StreamTag::design)}));
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(cfg.d1, cfg.d2);
    for (Index i = 0; i < cfg.n; ++i) {
      const double w = truncate(eta[i], cfg.tau);
      for (Index c = 0; c < cfg.d2; ++c)
        for (Index r = 0; r < cfg.d1; ++r)
          a(r, c) += w * rng.normal();
    }
    a /= static_cast<double>(cfg.n);
    const Eigen::VectorXd sv = singular_values(a);
    report.sigma_max[rep] = sv[0];
    report.sigma_min[rep] = sv[sv.size() - 1];
  });

  const BoundValues b = bound_values(cfg, report.psi_second_moment, cfg.constant_c, cfg.t);
  report.upper_bound = b.upper;
  report.lower_bound = b.lower;
  const SingularBoundsCoverage cov = singular_bounds_coverage(report, cfg, cfg.constant_c, cfg.t);
  report.upper_coverage = cov.upper;
  report.lower_coverage = cov.lower;
  return report;
}

double calibrate_singular_bounds_constant(const SingularBoundsConfig& reference, double target, double step, double c_max)
{
  if (!(step > 0) || !(c_max >= step))
    throw std::invalid_argument("calibration grid is invalid");
  const SingularBoundsReport draws = truncated_singular_bounds(reference);
  const int steps = static_cast<int>(std::floor(c_max / step + 1e-9));
  for (int i = 1; i <= steps; ++i) {
    const double c = i * step;
    const SingularBoundsCoverage cov = singular_bounds_coverage(draws, reference, c, reference.t);
    if (cov.upper >= target && cov.lower >= target)
      return c;
  }
  throw std::runtime_error("no constant on the calibration grid reaches the target coverage");
}

double matrix_degrees_of_freedom(Index d1, Index d2, Index rank)
{
  const double r = static_cast<double>(rank);
  return r * r + r * static_cast<double>(d1 + d2);
}

SingularBoundsConfig reference_singular_bounds_config()
{
  SingularBoundsConfig cfg;
  cfg.n = 200;
  cfg.d1 = 100;
  cfg.d2 = 5;
  cfg.noise = NoiseModel{NoiseFamily::gaussian, 0, 1};
  cfg.t = 3.0;
  cfg.reps = 200;
  cfg.seed = 20240601;
  cfg.tau = scale_threshold(cfg.noise.variance(), static_cast<double>(cfg.n),
                              matrix_degrees_of_freedom(cfg.d1, cfg.d2, 1), 1.0);
  cfg.constant_c = kSingularBoundsCalibratedC;
  return cfg;
}

// ---------------------------------------------------------------------------

void ConcentrationConfig::validate() const
{
  noise.validate();
  if (d1 < 1 || d2 < 1)
    throw std::invalid_argument("concentration: d1 and d2 must be positive");
  if (signal_rank < 1 || signal_rank > std::min(d1, d2))
    throw std::invalid_argument("concentration: signal rank must lie in [1, min(d1, d2)]");
  if (!(signal_scale >= 0))
    throw std::invalid_argument("concentration: signal scale must be non-negative");
  if (n_grid.empty())
    throw std::invalid_argument("concentration: n_grid is empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1)
      throw std::invalid_argument("concentration: n_grid entries must be positive");
    if (i > 0 && n_grid[i] <= n_grid[i - 1])
      throw std::invalid_argument("concentration: n_grid must be strictly ascending");
  }
  if (tau_rule == TauRule::fixed && !(fixed_tau > 0))
    throw std::invalid_argument("concentration: fixed tau must be positive");
  if (tau_rule == TauRule::scale_rule && std::isinf(noise.variance()))
    throw std::invalid_argument("concentration: the scale rule needs finite noise variance");
  if (reps < 1)
    throw std::invalid_argument("concentration: reps must be at least 1");
}

ConcentrationReport opnorm_concentration(const ConcentrationConfig& cfg)
{
  cfg.validate();
  Rng target_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(StreamTag::target)}));
  const Eigen::MatrixXd u = random_orthonormal(cfg.d1, cfg.signal_rank, target_rng);
  const Eigen::MatrixXd v = random_orthonormal(cfg.d2, cfg.signal_rank, target_rng);
  const Eigen::MatrixXd a_star = cfg.signal_scale * u * v.transpose();
  const double second_moment = a_star.squaredNorm() + cfg.noise.variance();
  const double df = matrix_degrees_of_freedom(cfg.d1, cfg.d2, cfg.signal_rank);

  std::vector<double> taus(cfg.n_grid.size());
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    switch (cfg.tau_rule) {
    case TauRule::scale_rule:
      taus[g] = scale_threshold(second_moment, static_cast<double>(cfg.n_grid[g]), df, 1.0);
      break;
    case TauRule::infinite:
      taus[g] = kInf;
      break;
    case TauRule::fixed:
      taus[g] = cfg.fixed_tau;
      break;
    }
  }

  const Index n_max = cfg.n_grid.back();
  const Index d = cfg.d1 * cfg.d2;
  const Eigen::Map<const Eigen::VectorXd> a_vec(a_star.data(), d);
  // deviations[rep][g]; each replicate uses nested prefixes of one sample.
  std::vector<std::vector<double>> deviations(cfg.reps, std::vector<double>(cfg.n_grid.size()));
  parallel_for(static_cast<std::size_t>(cfg.reps), cfg.threads, [&](std::size_t rep) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, {rep});
    Rng rng(derive_seed(rep_seed, {static_cast<std::uint64_t>(StreamTag::design)}));
    const Eigen::MatrixXd x = gaussian_matrix(d, n_max, rng);
    const Eigen::VectorXd eps
        = gen_noise(cfg.noise, n_max, derive_seed(rep_seed, {static_cast<std::uint64_t>(StreamTag::noise)}));
    const Eigen::VectorXd y = x.transpose() * a_vec + eps;
    for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
      const Index n = cfg.n_grid[g];
      Eigen::VectorXd w(n);
      for (Index i = 0; i < n; ++i)
        w[i] = truncate(y[i], taus[g]);
      const Eigen::VectorXd m = x.leftCols(n) * w / static_cast<double>(n) - a_vec;
      deviations[rep][g] = singular_values(Eigen::Map<const Eigen::MatrixXd>(m.data(), cfg.d1, cfg.d2))[0];
    }
  });

  ConcentrationReport report;
  std::vector<double> xs, meds;
  bool any_zero = false;
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    ConcentrationRow row;
    row.n = cfg.n_grid[g];
    row.median_tau = taus[g];
    row.deviations.resize(cfg.reps);
    for (int rep = 0; rep < cfg.reps; ++rep)
      row.deviations[rep] = deviations[rep][g];
    row.median_deviation = median(row.deviations);
    any_zero = any_zero || !(row.median_deviation > 0);
    xs.push_back(static_cast<double>(row.n));
    meds.push_back(row.median_deviation);
    report.rows.push_back(std::move(row));
  }
  report.slope = (any_zero || xs.size() < 2) ? std::numeric_limits<double>::quiet_NaN() : loglog_slope(xs, meds);
  int decreases = 0;
  for (int rep = 0; rep < cfg.reps; ++rep)
    if (deviations[rep].back() < deviations[rep].front())
      ++decreases;
  report.paired_decrease_fraction = static_cast<double>(decreases) / cfg.reps;
  return report;
}

} // namespace rtr
