#pragma once

#include "rtr/simulation.hpp"

namespace rtr {

/// E[psi_tau(eps)^2] = E[min(eps^2, tau^2)] by adaptive Gauss-Kronrod
/// quadrature against the noise density. tau = +inf returns the variance.
double truncated_second_moment(const NoiseModel& noise, double tau);

/// E|eps|^s; +inf when the moment does not exist.
double absolute_moment(const NoiseModel& noise, double s);

} // namespace rtr
