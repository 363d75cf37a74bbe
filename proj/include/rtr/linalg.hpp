#pragma once

#include "rtr/tensor.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <limits>

namespace rtr {

/// Flips each column so that its largest-magnitude entry is positive.
/// Ties resolve to the lowest row index.
template <typename Derived>
void fix_column_signs(Eigen::MatrixBase<Derived>& u)
{
  for (Index c = 0; c < u.cols(); ++c) {
    Index arg = 0;
    u.col(c).cwiseAbs().maxCoeff(&arg);
    if (u(arg, c) < 0)
      u.col(c) = -u.col(c);
  }
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> singular_values(const Eigen::MatrixBase<Derived>& m)
{
  return Eigen::JacobiSVD<Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>>(m).singularValues();
}

/// Leading r left singular vectors of m, columns orthonormal, sign-normalized.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
top_left_singular(const Eigen::MatrixBase<Derived>& m, Index r)
{
  using Matrix = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (r < 1 || r > std::min(m.rows(), m.cols()))
    throw std::invalid_argument("top_left_singular: rank " + std::to_string(r) + " invalid for "
                                + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " matrix");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU);
  Matrix u = svd.matrixU().leftCols(r);
  fix_column_signs(u);
  return u;
}

template <typename Scalar>
struct SpectrumSummary
{
  Scalar lambda_bar = 0;
  Scalar lambda_underbar = 0;
  /// Infinite when rank_deficient.
  Scalar kappa = std::numeric_limits<Scalar>::infinity();
  bool rank_deficient = true;
};

/// Extreme singular values across the three unfoldings: the largest top
/// singular value and the smallest r_k-th singular value.
template <typename Scalar>
SpectrumSummary<Scalar> spectrum_summary(const Tensor3<Scalar>& t, const Ranks& ranks)
{
  SpectrumSummary<Scalar> s;
  s.lambda_underbar = std::numeric_limits<Scalar>::infinity();
  for (int k = 0; k < 3; ++k) {
    const auto m = unfold(t, k);
    if (ranks[k] < 1 || ranks[k] > std::min(m.rows(), m.cols()))
      throw std::invalid_argument("spectrum_summary: rank " + std::to_string(ranks[k]) + " invalid for mode "
                                  + std::to_string(k));
    const auto sv = singular_values(m);
    s.lambda_bar = std::max(s.lambda_bar, sv[0]);
    s.lambda_underbar = std::min(s.lambda_underbar, sv[ranks[k] - 1]);
  }
  s.rank_deficient = !(s.lambda_underbar > 0);
  s.kappa = s.rank_deficient ? std::numeric_limits<Scalar>::infinity() : s.lambda_bar / s.lambda_underbar;
  return s;
}

} // namespace rtr
