#pragma once

#include "rtr/samples.hpp"
#include "rtr/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace rtr {

struct HuberParams
{
  /// Robustification threshold; +inf turns the loss into x^2 / 2.
  double varpi = 1.0;

  explicit HuberParams(double v) : varpi(v)
  {
    if (!(v > 0))
      throw std::invalid_argument("Huber threshold must be positive");
  }
};

template <typename Scalar>
Scalar huber_value(Scalar x, const HuberParams& p)
{
  const Scalar ax = std::abs(x);
  const Scalar w = static_cast<Scalar>(p.varpi);
  return ax <= w ? Scalar(0.5) * x * x : w * ax - Scalar(0.5) * w * w;
}

/// Derivative of huber_value; at |x| = varpi the clipped value is returned.
template <typename Scalar>
Scalar huber_psi(Scalar x, const HuberParams& p)
{
  const Scalar w = static_cast<Scalar>(p.varpi);
  return std::clamp(x, -w, w);
}

/// r_i = y_i - <X_i, A>.
Eigen::VectorXd residuals(const SampleSet& samples, const Tensor3d& a);

double empirical_loss(const SampleSet& samples, const Tensor3d& a, const HuberParams& p);
double empirical_loss_from_residuals(const Eigen::VectorXd& r, const HuberParams& p);

/// Gradient of empirical_loss with respect to A: -(1/n) sum_i psi(r_i) X_i.
Tensor3d loss_gradient_full(const SampleSet& samples, const Tensor3d& a, const HuberParams& p);
Tensor3d loss_gradient_from_residuals(const SampleSet& samples, const Eigen::VectorXd& r, const HuberParams& p);

struct FactorGradients
{
  Tensor3d core;
  std::array<Eigen::MatrixXd, 3> factors;
};

/// (a/2) sum_k ||U_k^T U_k - b^2 I||_F^2
double balance_penalty(const TuckerFactorsd& f, double a, double b);

/// Gradients of L([[S; U]]) + balance_penalty with respect to S and each U_k,
/// given G = dL/dA at the current reconstruction:
///   dS   = G x0 U0^T x1 U1^T x2 U2^T
///   dU_k = unfold(G, k) * (kron of the other two factors) * unfold(S, k)^T
///          + 2a U_k (U_k^T U_k - b^2 I)
FactorGradients factor_gradients(const Tensor3d& g, const TuckerFactorsd& f, double a, double b);

double objective(const SampleSet& samples, const TuckerFactorsd& f, const HuberParams& p, double a, double b);

} // namespace rtr
