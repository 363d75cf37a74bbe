#pragma once

#include "rtr/huber.hpp"
#include "rtr/simulation.hpp"

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace rtr {

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct FDCheckOptions
{
  double h = 1e-6;
  int directions_per_block = 3;
  /// Redraw directions whose central-difference stencil would cross a Huber kink.
  bool avoid_kinks = true;
  int max_redraws = 200;
  /// Denominator floor for the relative error.
  double abs_floor = 1e-8;
  std::uint64_t seed = 0;
};

struct FDCheckReport
{
  double max_rel_error = 0;
  /// Worst relative error per block: core, U0, U1, U2.
  std::array<double, 4> block_rel_error{};
  double max_analytic_abs = 0;
  double max_fd_abs = 0;
  int directions = 0;
  /// Directions kept even though no kink-free draw was found.
  int kink_hits = 0;
};

enum class FDRegime { quadratic, clipped };
std::string_view to_string(FDRegime r);
FDRegime parse_fd_regime(std::string_view name);

/// Random test problem for gradient_fd_check: Gaussian design and t(3)
/// responses around a random low-rank target, factors drawn independently of
/// the target. The quadratic regime uses varpi = 1e12; the clipped regime sets
/// varpi to half the median absolute residual at the drawn factors.
struct FDInstance
{
  SampleSet samples;
  TuckerFactorsd factors;
  double varpi = 1;
  double a = 0.5;
  double b = 1.1;
};
FDInstance make_fd_instance(const Dims& dims, const Ranks& ranks, Index n, FDRegime regime, std::uint64_t seed);

/// Compares analytic directional derivatives of objective() with central
/// differences along random unit directions in the core and each factor.
FDCheckReport gradient_fd_check(const SampleSet& samples, const TuckerFactorsd& f, const HuberParams& p, double a,
                                double b, const FDCheckOptions& opts = {});

// ---------------------------------------------------------------------------
// Restricted strong convexity

struct RSCReport
{
  int trials = 0;
  int satisfied_count = 0;
  double min_ratio = 0;
  double mean_ratio = 0;
  double threshold = 0.8;
  double radius = 0;
  double varpi = 0;
  Ranks perturbation_ranks{0, 0, 0};
  double max_perturbation_norm = 0;
  std::uint64_t seed = 0;

  double satisfied_fraction() const { return trials ? static_cast<double>(satisfied_count) / trials : 0.0; }
};

/// Random Tucker tensor of multilinear rank `ranks` with unit Frobenius norm.
Tensor3d random_low_rank_direction(const Dims& dims, const Ranks& ranks, Rng& rng);

/// Draws A = A* + D with D a random Tucker perturbation of multilinear rank
/// min(2 r_k, p_k) and 0 < ||D||_F <= radius, and counts how often
/// <grad L(A) - grad L(A*), D> >= (4/5) ||D||_F^2.
RSCReport rsc_check(const SampleSet& samples, const Tensor3d& a_star, double radius, const Ranks& ranks,
                    const HuberParams& p, int trials, std::uint64_t seed);

/// Empirical fourth-moment constant: max over `directions` random unit V of
/// (mean_i <V, X_i>^4)^(1/4).
double estimate_c1(const SampleSet& samples, int directions, std::uint64_t seed);

/// Lower bound on varpi for the RSC regime: max((4 M)^(1/(1+delta)), 4 c1^2 R).
double rsc_varpi(double moment, double delta, double c1, double radius);

// ---------------------------------------------------------------------------
// Singular values of truncated random matrix sums

struct SingularBoundsConfig
{
  Index n = 200;
  Index d1 = 100;
  Index d2 = 5;
  NoiseModel noise{NoiseFamily::gaussian, 0, 1};
  double tau = 1.0;
  double t = 3.0;
  double constant_c = 1.0;
  int reps = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

struct SingularBoundsReport
{
  double upper_coverage = 0;
  double lower_coverage = 0;
  double psi_second_moment = 0;
  double upper_bound = 0;
  double lower_bound = 0;
  std::vector<double> sigma_max;
  std::vector<double> sigma_min;
};

/// Simulates A = (1/n) sum psi_tau(eta_i) X_i with d1 x d2 Gaussian X_i and
/// reports how often
///   sigma_max^2 <= (E psi^2 + tau^2 sqrt(2t/n)) / n (sqrt d1 + C sqrt d2 + sqrt 2t)^2
///   sigma_min^2 >= (E psi^2 - tau^2 sqrt(2t/n)) / n max(0, sqrt d1 - C sqrt d2 - sqrt 2t)^2
/// hold. E psi^2 comes from quadrature, not from the draws.
SingularBoundsReport truncated_singular_bounds(const SingularBoundsConfig& cfg);

struct SingularBoundsCoverage
{
  double upper = 0;
  double lower = 0;
};
/// Coverage of the stored draws re-evaluated for another constant or t.
SingularBoundsCoverage singular_bounds_coverage(const SingularBoundsReport& draws, const SingularBoundsConfig& cfg, double constant_c, double t);

/// Smallest positive C on the grid step, 2 step, ..., c_max for which both
/// coverages reach `target` at the reference configuration.
double calibrate_singular_bounds_constant(const SingularBoundsConfig& reference, double target = 0.95, double step = 0.01,
                                 double c_max = 10.0);

/// Constant frozen from calibrate_singular_bounds_constant on reference_singular_bounds_config().
extern const double kSingularBoundsCalibratedC;
SingularBoundsConfig reference_singular_bounds_config();

/// Matrix degrees of freedom r^2 + r (d1 + d2) used by the threshold rule.
double matrix_degrees_of_freedom(Index d1, Index d2, Index rank);

// ---------------------------------------------------------------------------
// Operator-norm concentration of the truncated moment matrix

enum class TauRule { scale_rule, infinite, fixed };

struct ConcentrationConfig
{
  Index d1 = 10;
  Index d2 = 10;
  Index signal_rank = 2;
  /// Nonzero singular values of the target matrix; zero makes it the zero matrix.
  double signal_scale = 1.0;
  NoiseModel noise{NoiseFamily::student_t, 3, 1};
  std::vector<Index> n_grid{250, 500, 1000, 2000};
  TauRule tau_rule = TauRule::scale_rule;
  double fixed_tau = 1.0;
  int reps = 50;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

struct ConcentrationRow
{
  Index n = 0;
  double median_deviation = 0;
  double median_tau = 0;
  std::vector<double> deviations;
};

struct ConcentrationReport
{
  std::vector<ConcentrationRow> rows;
  /// Log-log slope of median deviation against n; NaN when a median is zero.
  double slope = 0;
  /// Fraction of replicates whose deviation at the largest n is below the one at the smallest n.
  double paired_decrease_fraction = 0;
};

/// For each n, measures ||(1/n) sum psi_tau(y_i) X_i - E[y X]||_op where
/// y = <X, A*> + eps with Gaussian X, so that E[y X] = A*. The scale rule
/// sets tau = (E[y^2] n / df)^(1/2) with E[y^2] = ||A*||_F^2 + E[eps^2].
ConcentrationReport opnorm_concentration(const ConcentrationConfig& cfg);

} // namespace rtr
