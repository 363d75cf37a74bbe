#pragma once

#include "rtr/optimizer.hpp"
#include "rtr/random.hpp"
#include "rtr/samples.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rtr {

enum class NoiseFamily { none, gaussian, student_t, pareto_centered, lognormal_centered };

std::string_view to_string(NoiseFamily f);
NoiseFamily parse_noise_family(std::string_view name);

/// Zero-mean noise law. `param` is the degrees of freedom for student_t,
/// the tail index alpha for pareto_centered, the log-scale sigma for
/// lognormal_centered, and unused otherwise. Draws are multiplied by `scale`.
struct NoiseModel
{
  NoiseFamily family = NoiseFamily::none;
  double param = 0;
  double scale = 1;

  void validate() const;
  /// Analytic E[eps^2]; +inf when the variance does not exist.
  double variance() const;
  /// Density of eps (scale included). Zero outside the support.
  double pdf(double x) const;
  /// P(eps > x).
  double survival(double x) const;
  /// Support of eps; infinite bounds where unbounded.
  std::pair<double, double> support() const;
};

/// A fraction of responses multiplied by a constant after generation.
struct Contamination
{
  double fraction = 0;
  double factor = 1;
};

struct SyntheticSpec
{
  Dims dims{4, 4, 4};
  Ranks ranks{2, 2, 2};
  Index n = 100;
  NoiseModel noise{};
  double lambda_min = 1;
  double lambda_max = 1;
  Contamination contamination{};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Exact multilinear rank tensor with orthonormal factors (QR of Gaussian
/// matrices, sign-normalized) and a core whose unfolding singular values all
/// lie in [lambda_min, lambda_max].
Tensor3d gen_target(const Dims& dims, const Ranks& ranks, double lambda_min, double lambda_max, std::uint64_t seed);

/// n covariates with i.i.d. N(0,1) entries, one per column (Tensor3 order).
Eigen::MatrixXd gen_design(Index n, const Dims& dims, std::uint64_t seed);

Eigen::VectorXd gen_noise(const NoiseModel& model, Index n, std::uint64_t seed);

/// Multiplies round(fraction * n) distinct responses, chosen uniformly, by `factor`.
void contaminate(Eigen::VectorXd& response, const Contamination& c, std::uint64_t seed);

struct Dataset
{
  SampleSet samples;
  Tensor3d truth;
  Eigen::VectorXd noise;
};

/// y_i = <X_i, A*> + eps_i, then optional contamination. Component streams are
/// derived from spec.seed with the StreamTag keys.
Dataset gen_dataset(const SyntheticSpec& spec);

enum class EstimatorKind { robust, least_squares };

std::string_view to_string(EstimatorKind k);
EstimatorKind parse_estimator(std::string_view name);

struct EstimatorConfig
{
  EstimatorKind kind = EstimatorKind::robust;
  double delta = 1.0;
  /// Replaces the plug-in noise moment in the threshold rule.
  std::optional<double> moment;
  std::optional<int> t_max;
  std::optional<double> rel_tol;
};

/// Tuning used by monte_carlo and the CLI: default_tuning for the robust
/// estimator, or the same scale rules with truncation and clipping disabled.
GDConfig resolve_tuning(const SampleSet& samples, const Ranks& ranks, const EstimatorConfig& est);

struct ErrorRow
{
  std::size_t cell = 0;
  std::size_t rep = 0;
  SyntheticSpec spec;
  std::string estimator;
  double error_frobenius = 0;
  double relative_error = 0;
  int iterations = 0;
  double runtime_ms = 0;
  bool converged = false;
  bool diverged = false;
};

struct ErrorTable
{
  std::vector<ErrorRow> rows;

  static const std::vector<std::string>& columns();
  void write_csv(std::ostream& os) const;
  /// One row per (cell, rep, metric).
  void write_tidy_csv(std::ostream& os) const;
  /// Errors of one cell in replicate order.
  std::vector<double> cell_errors(std::size_t cell) const;
};

struct MonteCarloOptions
{
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
  /// When false runtime_ms is written as 0 so the table is reproducible byte for byte.
  bool record_runtime = true;
};

/// Seed of replicate `rep` in cell `cell`.
std::uint64_t replicate_seed(std::uint64_t master, std::size_t cell, std::size_t rep);

/// Runs one fit per (cell, rep). Rows are ordered by (cell, rep) whatever the
/// thread count; divergent fits are recorded, not thrown.
ErrorTable monte_carlo(const std::vector<SyntheticSpec>& cells, std::size_t reps, const EstimatorConfig& est,
                       const MonteCarloOptions& opts);

} // namespace rtr
