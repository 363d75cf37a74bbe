#include "rtr/moments.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <vector>
#include <limits>

namespace rtr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename F>
double integrate(F f, double a, double b)
{
  if (!(b > a))
    return 0;
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  double err = 0;
  if (std::isinf(a) || std::isinf(b))
    return GK::integrate(f, a, b, 20, 1e-12, &err);
  // Finite ranges are mapped onto [0, 1] and normalized by the integrand's
  // size, since the quadrature's error floor is absolute.
  const double w = b - a;
  double mag = 0;
  for (double u : {0.125, 0.375, 0.5, 0.625, 0.875})
    mag = std::max(mag, std::abs(f(a + u * w)));
  if (!(mag > 0) || !std::isfinite(mag))
    mag = 1;
  auto g = [&](double u) { return f(a + u * w) / mag; };
  return w * mag * GK::integrate(g, 0.0, 1.0, 20, 1e-12, &err);
}

// Integral of g(x) f(x) over [a, b] intersected with the support. The range
// is split at zero, at the support edge and at geometrically spaced points
// scale * 4^k so that wide finite ranges do not miss the mass near zero.
template <typename G>
double integrate_against_density(const NoiseModel& noise, G g, double a, double b)
{
  const auto [lo, hi] = noise.support();
  a = std::max(a, lo);
  b = std::min(b, hi);
  if (!(b > a))
    return 0;
  auto integrand = [&](double x) { return g(x) * noise.pdf(x); };
  std::vector<double> cuts{a};
  if (a < 0 && b > 0)
    cuts.push_back(0.0);
  const double reach = std::min(std::max(std::abs(a), std::abs(b)), 1e8 * noise.scale);
  for (double c = noise.scale; c < reach; c *= 4) {
    if (c > a && c < b)
      cuts.push_back(c);
    if (-c > a && -c < b)
      cuts.push_back(-c);
  }
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  double sum = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    sum += integrate(integrand, cuts[i], cuts[i + 1]);
  return sum;
}

} // namespace

double truncated_second_moment(const NoiseModel& noise, double tau)
{
  noise.validate();
  if (!(tau > 0))
    throw std::invalid_argument("truncation level must be positive");
  if (noise.family == NoiseFamily::none)
    return 0;
  if (std::isinf(tau))
    return noise.variance();
  const double body = integrate_against_density(noise, [](double x) { return x * x; }, -tau, tau);
  const double below = noise.support().first < -tau ? 1.0 - noise.survival(-tau) : 0.0;
  return body + tau * tau * (noise.survival(tau) + below);
}

double absolute_moment(const NoiseModel& noise, double s)
{
  noise.validate();
  if (!(s > 0))
    throw std::invalid_argument("moment order must be positive");
  const double scale_s = std::pow(noise.scale, s);
  switch (noise.family) {
  case NoiseFamily::none:
    return 0;
  case NoiseFamily::gaussian:
    return scale_s * std::pow(2.0, 0.5 * s) * std::tgamma(0.5 * (s + 1)) / std::sqrt(M_PI);
  case NoiseFamily::student_t: {
    const double nu = noise.param;
    if (s >= nu)
      return kInf;
    return scale_s * std::pow(nu, 0.5 * s) * std::exp(std::lgamma(0.5 * (s + 1)) + std::lgamma(0.5 * (nu - s))
                                                      - std::lgamma(0.5 * nu)) / std::sqrt(M_PI);
  }
  case NoiseFamily::pareto_centered:
    if (s >= noise.param)
      return kInf;
    break;
  case NoiseFamily::lognormal_centered:
    break;
  }
  return integrate_against_density(noise, [s](double x) { return std::pow(std::abs(x), s); }, -kInf, kInf);
}

} // namespace rtr
