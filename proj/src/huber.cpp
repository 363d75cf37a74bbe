#include "rtr/huber.hpp"

namespace rtr {

Eigen::VectorXd residuals(const SampleSet& samples, const Tensor3d& a)
{
  samples.check_tensor(a);
  return samples.response - samples.design.transpose() * a.data();
}

double empirical_loss(const SampleSet& samples, const Tensor3d& a, const HuberParams& p)
{
  return empirical_loss_from_residuals(residuals(samples, a), p);
}

double empirical_loss_from_residuals(const Eigen::VectorXd& r, const HuberParams& p)
{
  double sum = 0;
  for (Index i = 0; i < r.size(); ++i)
    sum += huber_value(r[i], p);
  return sum / static_cast<double>(r.size());
}

Tensor3d loss_gradient_full(const SampleSet& samples, const Tensor3d& a, const HuberParams& p)
{
  return loss_gradient_from_residuals(samples, residuals(samples, a), p);
}

Tensor3d loss_gradient_from_residuals(const SampleSet& samples, const Eigen::VectorXd& r, const HuberParams& p)
{
  Eigen::VectorXd psi = r;
  for (Index i = 0; i < psi.size(); ++i)
    psi[i] = huber_psi(psi[i], p);
  const double scale = -1.0 / static_cast<double>(psi.size());
  return Tensor3d(samples.dims, scale * (samples.design * psi));
}

double balance_penalty(const TuckerFactorsd& f, double a, double b)
{
  if (a == 0)
    return 0;
  double sum = 0;
  for (const auto& u : f.factors) {
    Eigen::MatrixXd gram = u.transpose() * u;
    gram.diagonal().array() -= b * b;
    sum += gram.squaredNorm();
  }
  return 0.5 * a * sum;
}

FactorGradients factor_gradients(const Tensor3d& g, const TuckerFactorsd& f, double a, double b)
{
  f.validate();
  if (g.dims() != f.dims())
    throw std::invalid_argument("factor_gradients: gradient dims " + dims_string(g.dims())
                                + " do not match factor dims " + dims_string(f.dims()));

  FactorGradients out;
  out.core = multilinear_product(g, f.factors, /*transpose=*/true);

  for (int k = 0; k < 3; ++k) {
    // Project G onto the other two factors; its mode-k unfolding against the
    // core unfolding gives the chain-rule term.
    Tensor3d projected = g;
    for (int m = 0; m < 3; ++m)
      if (m != k)
        projected = mode_product(projected, f.factors[m].transpose(), m);
    Eigen::MatrixXd du = unfold(projected, k) * unfold(f.core, k).transpose();

    const Eigen::MatrixXd& u = f.factors[k];
    if (a != 0) {
      Eigen::MatrixXd gram = u.transpose() * u;
      gram.diagonal().array() -= b * b;
      du += 2.0 * a * u * gram;
    }
    out.factors[k] = std::move(du);
  }
  return out;
}

double objective(const SampleSet& samples, const TuckerFactorsd& f, const HuberParams& p, double a, double b)
{
  return empirical_loss(samples, tucker_reconstruct(f), p) + balance_penalty(f, a, b);
}

} // namespace rtr
