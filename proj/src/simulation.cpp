#include "rtr/simulation.hpp"

#include "rtr/linalg.hpp"
#include "rtr/parallel.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace rtr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void write_double(std::ostream& os, double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

} // namespace

std::string_view to_string(NoiseFamily f)
{
  switch (f) {
  case NoiseFamily::none: return "none";
  case NoiseFamily::gaussian: return "gaussian";
  case NoiseFamily::student_t: return "student_t";
  case NoiseFamily::pareto_centered: return "pareto_centered";
  case NoiseFamily::lognormal_centered: return "lognormal_centered";
  }
  return "unknown";
}

NoiseFamily parse_noise_family(std::string_view name)
{
  for (auto f : {NoiseFamily::none, NoiseFamily::gaussian, NoiseFamily::student_t, NoiseFamily::pareto_centered,
                 NoiseFamily::lognormal_centered})
    if (to_string(f) == name)
      return f;
  throw std::invalid_argument("unknown noise family '" + std::string(name) + "'");
}

void NoiseModel::validate() const
{
  if (!(scale > 0) || !std::isfinite(scale))
    throw std::invalid_argument("noise scale must be finite and positive");
  switch (family) {
  case NoiseFamily::student_t:
    if (!(param > 1))
      throw std::invalid_argument("student_t noise needs degrees of freedom > 1");
    break;
  case NoiseFamily::pareto_centered:
    if (!(param > 1))
      throw std::invalid_argument("pareto_centered noise needs tail index > 1");
    break;
  case NoiseFamily::lognormal_centered:
    if (!(param > 0))
      throw std::invalid_argument("lognormal_centered noise needs sigma > 0");
    break;
  default:
    break;
  }
}

double NoiseModel::variance() const
{
  const double s2 = scale * scale;
  switch (family) {
  case NoiseFamily::none: return 0;
  case NoiseFamily::gaussian: return s2;
  case NoiseFamily::student_t: return param > 2 ? s2 * param / (param - 2) : kInf;
  case NoiseFamily::pareto_centered:
    return param > 2 ? s2 * param / ((param - 1) * (param - 1) * (param - 2)) : kInf;
  case NoiseFamily::lognormal_centered: {
    const double v = param * param;
    return s2 * std::expm1(v) * std::exp(v);
  }
  }
  return kInf;
}

std::pair<double, double> NoiseModel::support() const
{
  switch (family) {
  case NoiseFamily::none: return {0, 0};
  case NoiseFamily::pareto_centered: return {scale * (1 - param / (param - 1)), kInf};
  case NoiseFamily::lognormal_centered: return {-scale * std::exp(0.5 * param * param), kInf};
  default: return {-kInf, kInf};
  }
}

double NoiseModel::pdf(double x) const
{
  const double z = x / scale;
  switch (family) {
  case NoiseFamily::none: return 0;
  case NoiseFamily::gaussian: return std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI) / scale;
  case NoiseFamily::student_t: {
    const double nu = param;
    const double logc = std::lgamma(0.5 * (nu + 1)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI);
    return std::exp(logc - 0.5 * (nu + 1) * std::log1p(z * z / nu)) / scale;
  }
  case NoiseFamily::pareto_centered: {
    const double u = z + param / (param - 1);
    return u >= 1 ? param * std::pow(u, -param - 1) / scale : 0;
  }
  case NoiseFamily::lognormal_centered: {
    const double u = z + std::exp(0.5 * param * param);
    if (u <= 0)
      return 0;
    const double l = std::log(u) / param;
    return std::exp(-0.5 * l * l) / (u * param * std::sqrt(2 * M_PI)) / scale;
  }
  }
  return 0;
}

double NoiseModel::survival(double x) const
{
  const double z = x / scale;
  switch (family) {
  case NoiseFamily::none: return x < 0 ? 1 : 0;
  case NoiseFamily::gaussian: return 0.5 * std::erfc(z / std::sqrt(2.0));
  case NoiseFamily::student_t:
    return boost::math::cdf(boost::math::complement(boost::math::students_t(param), z));
  case NoiseFamily::pareto_centered: {
    const double u = z + param / (param - 1);
    return u <= 1 ? 1 : std::pow(u, -param);
  }
  case NoiseFamily::lognormal_centered: {
    const double u = z + std::exp(0.5 * param * param);
    return u <= 0 ? 1 : 0.5 * std::erfc(std::log(u) / param / std::sqrt(2.0));
  }
  }
  return 0;
}

void SyntheticSpec::validate() const
{
  for (int k = 0; k < 3; ++k) {
    if (dims[k] < 1)
      throw std::invalid_argument("dims must be positive");
    if (ranks[k] < 1 || ranks[k] > dims[k])
      throw std::invalid_argument("rank " + std::to_string(ranks[k]) + " invalid for mode " + std::to_string(k)
                                  + " of dimension " + std::to_string(dims[k]));
  }
  if (n < 1)
    throw std::invalid_argument("sample count must be at least 1");
  if (!(lambda_min > 0) || !(lambda_max >= lambda_min) || !std::isfinite(lambda_max))
    throw std::invalid_argument("spectrum must satisfy 0 < lambda_min <= lambda_max < inf");
  if (!(contamination.fraction >= 0 && contamination.fraction <= 1) || !std::isfinite(contamination.factor))
    throw std::invalid_argument("contamination fraction must lie in [0, 1] with a finite factor");
  noise.validate();
}

Tensor3d gen_target(const Dims& dims, const Ranks& ranks, double lambda_min, double lambda_max, std::uint64_t seed)
{
  if (!(lambda_min > 0) || !(lambda_max >= lambda_min) || !std::isfinite(lambda_max))
    throw std::invalid_argument("gen_target: spectrum must satisfy 0 < lambda_min <= lambda_max < inf");
  for (int k = 0; k < 3; ++k) {
    if (ranks[k] < 1 || ranks[k] > dims[k])
      throw std::invalid_argument("gen_target: rank exceeds dimension in mode " + std::to_string(k));
    if (ranks[k] > ranks[(k + 1) % 3] * ranks[(k + 2) % 3])
      throw std::invalid_argument("gen_target: rank " + std::to_string(ranks[k])
                                  + " exceeds the product of the other two ranks");
  }
  Rng rng(seed);
  TuckerFactorsd f;
  for (int k = 0; k < 3; ++k) {
    Eigen::MatrixXd g(dims[k], ranks[k]);
    for (Index c = 0; c < g.cols(); ++c)
      for (Index r = 0; r < g.rows(); ++r)
        g(r, c) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dims[k], ranks[k]);
    fix_column_signs(q);
    f.factors[k] = std::move(q);
  }

  Tensor3d core(ranks);
  for (Index i = 0; i < core.size(); ++i)
    core.data()[i] = rng.normal();

  // Alternately clamp the singular values of each core unfolding into
  // [lambda_min, lambda_max] until all three spectra sit inside the band.
  const double mid = 0.5 * (lambda_min + lambda_max);
  core *= mid / singular_values(unfold(core, 0))[0];
  const double lo = lambda_min * (1 - 1e-9);
  const double hi = lambda_max * (1 + 1e-9);
  bool inside = false;
  for (int sweep = 0; sweep < 5000 && !inside; ++sweep) {
    for (int k = 0; k < 3; ++k) {
      const Eigen::MatrixXd m = unfold(core, k);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Eigen::VectorXd sv = svd.singularValues().head(ranks[k]).cwiseMax(lambda_min).cwiseMin(lambda_max);
      core = fold(svd.matrixU().leftCols(ranks[k]) * sv.asDiagonal() * svd.matrixV().leftCols(ranks[k]).transpose(),
                  k, ranks);
    }
    inside = true;
    for (int k = 0; k < 3 && inside; ++k) {
      const Eigen::VectorXd sv = singular_values(unfold(core, k));
      inside = sv[0] <= hi && sv[ranks[k] - 1] >= lo;
    }
  }
  if (!inside)
    throw std::runtime_error("gen_target: could not place the core spectrum inside the requested band");
  f.core = std::move(core);
  return tucker_reconstruct(f);
}

Eigen::MatrixXd gen_design(Index n, const Dims& dims, std::uint64_t seed)
{
  if (n < 1)
    throw std::invalid_argument("gen_design: n must be at least 1");
  Rng rng(seed);
  Eigen::MatrixXd x(dims_product(dims), n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < x.rows(); ++j)
      x(j, i) = rng.normal();
  return x;
}

Eigen::VectorXd gen_noise(const NoiseModel& model, Index n, std::uint64_t seed)
{
  model.validate();
  if (n < 1)
    throw std::invalid_argument("gen_noise: n must be at least 1");
  Rng rng(seed);
  Eigen::VectorXd e(n);
  for (Index i = 0; i < n; ++i) {
    double v = 0;
    switch (model.family) {
    case NoiseFamily::none: v = 0; break;
    case NoiseFamily::gaussian: v = rng.normal(); break;
    case NoiseFamily::student_t: v = rng.student_t(model.param); break;
    case NoiseFamily::pareto_centered:
      v = std::pow(rng.uniform_open(), -1.0 / model.param) - model.param / (model.param - 1);
      break;
    case NoiseFamily::lognormal_centered:
      v = std::exp(model.param * rng.normal()) - std::exp(0.5 * model.param * model.param);
      break;
    }
    e[i] = model.scale * v;
  }
  return e;
}

void contaminate(Eigen::VectorXd& response, const Contamination& c, std::uint64_t seed)
{
  const auto n = static_cast<std::size_t>(response.size());
  const auto count = static_cast<std::size_t>(std::llround(c.fraction * static_cast<double>(n)));
  if (count == 0)
    return;
  Rng rng(seed);
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  // Partial Fisher-Yates: the first `count` slots are a uniform subset.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
    response[idx[i]] *= c.factor;
  }
}

Dataset gen_dataset(const SyntheticSpec& spec)
{
  spec.validate();
  Dataset ds;
  ds.truth = gen_target(spec.dims, spec.ranks, spec.lambda_min, spec.lambda_max,
                        derive_seed(spec.seed, {static_cast<std::uint64_t>(StreamTag::target)}));
  ds.samples.dims = spec.dims;
  ds.samples.design = gen_design(spec.n, spec.dims, derive_seed(spec.seed, {static_cast<std::uint64_t>(StreamTag::design)}));
  ds.noise = gen_noise(spec.noise, spec.n, derive_seed(spec.seed, {static_cast<std::uint64_t>(StreamTag::noise)}));
  ds.samples.response = ds.samples.design.transpose() * ds.truth.data() + ds.noise;
  contaminate(ds.samples.response, spec.contamination,
              derive_seed(spec.seed, {static_cast<std::uint64_t>(StreamTag::contamination)}));
  ds.samples.ground_truth = ds.truth;
  return ds;
}

std::string_view to_string(EstimatorKind k) { return k == EstimatorKind::robust ? "robust" : "least_squares"; }

EstimatorKind parse_estimator(std::string_view name)
{
  if (name == "robust")
    return EstimatorKind::robust;
  if (name == "least_squares")
    return EstimatorKind::least_squares;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

GDConfig resolve_tuning(const SampleSet& samples, const Ranks& ranks, const EstimatorConfig& est)
{
  GDConfig cfg = est.kind == EstimatorKind::least_squares
                     ? least_squares_tuning(samples, ranks)
                     : (est.moment ? default_tuning_with_moment(samples, ranks, est.delta, *est.moment)
                                   : default_tuning(samples, ranks, est.delta));
  if (est.t_max)
    cfg.t_max = *est.t_max;
  if (est.rel_tol)
    cfg.rel_tol = *est.rel_tol;
  return cfg;
}

const std::vector<std::string>& ErrorTable::columns()
{
  static const std::vector<std::string> cols{
      "cell",          "rep",        "seed",         "p1",
      "p2",            "p3",         "r1",           "r2",
      "r3",            "n",          "noise_family", "noise_param",
      "noise_scale",   "lambda_min", "lambda_max",   "contamination_fraction",
      "contamination_factor",        "estimator",    "error_frobenius",
      "relative_error", "iterations", "runtime_ms",   "converged"};
  return cols;
}

void ErrorTable::write_csv(std::ostream& os) const
{
  const auto& cols = columns();
  for (std::size_t i = 0; i < cols.size(); ++i)
    os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : rows) {
    const auto& s = r.spec;
    os << r.cell << ',' << r.rep << ',' << s.seed << ',' << s.dims[0] << ',' << s.dims[1] << ',' << s.dims[2] << ','
       << s.ranks[0] << ',' << s.ranks[1] << ',' << s.ranks[2] << ',' << s.n << ',' << to_string(s.noise.family)
       << ',';
    for (double v : {s.noise.param, s.noise.scale, s.lambda_min, s.lambda_max, s.contamination.fraction,
                     s.contamination.factor}) {
      write_double(os, v);
      os << ',';
    }
    os << r.estimator << ',';
    write_double(os, r.error_frobenius);
    os << ',';
    write_double(os, r.relative_error);
    os << ',' << r.iterations << ',';
    write_double(os, r.runtime_ms);
    os << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

void ErrorTable::write_tidy_csv(std::ostream& os) const
{
  os << "cell,rep,n,metric,value\n";
  for (const auto& r : rows) {
    const std::pair<const char*, double> metrics[] = {{"error_frobenius", r.error_frobenius},
                                                      {"relative_error", r.relative_error},
                                                      {"iterations", static_cast<double>(r.iterations)},
                                                      {"runtime_ms", r.runtime_ms}};
    for (const auto& [name, value] : metrics) {
      os << r.cell << ',' << r.rep << ',' << r.spec.n << ',' << name << ',';
      write_double(os, value);
      os << '\n';
    }
  }
}

std::vector<double> ErrorTable::cell_errors(std::size_t cell) const
{
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.cell == cell)
      out.push_back(r.error_frobenius);
  return out;
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t cell, std::size_t rep)
{
  return derive_seed(master, {static_cast<std::uint64_t>(cell), static_cast<std::uint64_t>(rep)});
}

ErrorTable monte_carlo(const std::vector<SyntheticSpec>& cells, std::size_t reps, const EstimatorConfig& est,
                       const MonteCarloOptions& opts)
{
  if (reps < 1)
    throw std::invalid_argument("monte_carlo: reps must be at least 1");
  for (const auto& c : cells)
    c.validate();

  ErrorTable table;
  table.rows.resize(cells.size() * reps);
  parallel_for(table.rows.size(), opts.threads, [&](std::size_t job) {
    const std::size_t cell = job / reps;
    const std::size_t rep = job % reps;
    ErrorRow& row = table.rows[job];
    row.cell = cell;
    row.rep = rep;
    row.spec = cells[cell];
    row.spec.seed = replicate_seed(opts.master_seed, cell, rep);
    row.estimator = std::string(to_string(est.kind));

    const auto start = std::chrono::steady_clock::now();
    const Dataset ds = gen_dataset(row.spec);
    const GDConfig cfg = resolve_tuning(ds.samples, row.spec.ranks, est);
    const FitResult res = fit(ds.samples, cfg);
    const auto stop = std::chrono::steady_clock::now();

    row.error_frobenius = estimation_error(res.estimate, ds.truth);
    row.relative_error = row.error_frobenius / ds.truth.norm();
    row.iterations = res.iterations_run;
    row.converged = res.converged;
    row.diverged = res.diverged;
    row.runtime_ms = opts.record_runtime ? std::chrono::duration<double, std::milli>(stop - start).count() : 0.0;
  });
  return table;
}

} // namespace rtr
