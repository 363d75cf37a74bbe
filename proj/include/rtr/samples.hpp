#pragma once

#include "rtr/tensor.hpp"

#include <optional>

namespace rtr {

/// n regression pairs (X_i, y_i). Covariate i is stored as column i of
/// `design`, in Tensor3 linearization order, so <X_i, A> = design.col(i).dot(A.data()).
struct SampleSet
{
  Dims dims{0, 0, 0};
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
  std::optional<Tensor3d> ground_truth;

  Index size() const { return response.size(); }

  Tensor3d covariate(Index i) const { return Tensor3d(dims, design.col(i)); }

  /// Throws unless design, response and dims agree and n >= 1.
  void validate() const
  {
    if (response.size() < 1)
      throw std::invalid_argument("sample set is empty");
    if (design.rows() != dims_product(dims) || design.cols() != response.size())
      throw std::invalid_argument("sample set design is " + std::to_string(design.rows()) + "x"
                                  + std::to_string(design.cols()) + ", expected " + std::to_string(dims_product(dims))
                                  + "x" + std::to_string(response.size()));
    if (ground_truth && ground_truth->dims() != dims)
      throw std::invalid_argument("ground truth dims do not match sample dims");
  }

  void check_tensor(const Tensor3d& a) const
  {
    if (a.dims() != dims)
      throw std::invalid_argument("tensor dims " + dims_string(a.dims()) + " do not match sample dims "
                                  + dims_string(dims));
  }
};

/// df = r1 r2 r3 + sum_k p_k r_k.
inline double degrees_of_freedom(const Dims& dims, const Ranks& ranks)
{
  double df = static_cast<double>(ranks[0] * ranks[1] * ranks[2]);
  for (int k = 0; k < 3; ++k)
    df += static_cast<double>(dims[k] * ranks[k]);
  return df;
}

} // namespace rtr
