#pragma once

#include <span>
#include <vector>

namespace rtr {

/// Median; averages the two middle values for even sizes.
double median(std::span<const double> values);

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::span<const double> values, double q);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

} // namespace rtr
