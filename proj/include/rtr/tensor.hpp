#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace rtr {

using Index = Eigen::Index;
using Dims = std::array<Index, 3>;
using Ranks = std::array<Index, 3>;

inline Index dims_product(const Dims& d) { return d[0] * d[1] * d[2]; }

inline std::string dims_string(const Dims& d)
{
  return "(" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) + ")";
}

inline void check_mode(int mode)
{
  if (mode < 0 || mode > 2)
    throw std::invalid_argument("mode index must be 0, 1 or 2, got " + std::to_string(mode));
}

/// Dense order-3 tensor.
///
/// Entries are stored with the first index running fastest:
/// T(i, j, k) lives at data[i + p1 * (j + p2 * k)]. This is the same layout
/// as vec(unfold(T, 0)) for a column-major matrix, so the mode-0 unfolding is
/// a plain reshape.
template <typename Scalar>
class Tensor3
{
public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Tensor3() : dims_{0, 0, 0} {}

  explicit Tensor3(const Dims& dims) : dims_(dims)
  {
    check_dims(dims);
    data_ = Vector::Zero(dims_product(dims));
  }

  Tensor3(const Dims& dims, Vector data) : dims_(dims), data_(std::move(data))
  {
    check_dims(dims);
    if (data_.size() != dims_product(dims))
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size())
                                  + " does not match dims " + dims_string(dims));
  }

  static Tensor3 Zero(const Dims& dims) { return Tensor3(dims); }

  const Dims& dims() const { return dims_; }
  Index dim(int mode) const { return dims_[mode]; }
  Index size() const { return data_.size(); }

  Scalar& operator()(Index i, Index j, Index k) { return data_[i + dims_[0] * (j + dims_[1] * k)]; }
  const Scalar& operator()(Index i, Index j, Index k) const { return data_[i + dims_[0] * (j + dims_[1] * k)]; }

  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  Scalar squaredNorm() const { return data_.squaredNorm(); }
  Scalar norm() const { return data_.stableNorm(); }

  Tensor3& operator+=(const Tensor3& other)
  {
    check_same_dims(other);
    data_ += other.data_;
    return *this;
  }
  Tensor3& operator-=(const Tensor3& other)
  {
    check_same_dims(other);
    data_ -= other.data_;
    return *this;
  }
  Tensor3& operator*=(Scalar s)
  {
    data_ *= s;
    return *this;
  }

  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
  friend Tensor3 operator*(Tensor3 a, Scalar s) { return a *= s; }
  friend Tensor3 operator*(Scalar s, Tensor3 a) { return a *= s; }

  bool operator==(const Tensor3& other) const { return dims_ == other.dims_ && data_ == other.data_; }

  void check_same_dims(const Tensor3& other) const
  {
    if (dims_ != other.dims_)
      throw std::invalid_argument("tensor dims mismatch: " + dims_string(dims_) + " vs "
                                  + dims_string(other.dims_));
  }

private:
  static void check_dims(const Dims& dims)
  {
    for (Index d : dims)
      if (d <= 0)
        throw std::invalid_argument("tensor dims must be positive, got " + dims_string(dims));
  }

  Dims dims_;
  Vector data_;
};

using Tensor3d = Tensor3<double>;

/// Mode-k unfolding. Row index is the mode-k index; the column index runs over
/// the remaining two modes with the lower-numbered mode fastest:
///   mode 0: col = j + p2 * k
///   mode 1: col = i + p1 * k
///   mode 2: col = i + p1 * j
/// With this ordering unfold(S x0 U0 x1 U1 x2 U2, 0) = U0 * unfold(S, 0) * kron(U2, U1)^T.
template <typename Scalar>
typename Tensor3<Scalar>::Matrix unfold(const Tensor3<Scalar>& t, int mode)
{
  check_mode(mode);
  using Matrix = typename Tensor3<Scalar>::Matrix;
  const auto [p1, p2, p3] = t.dims();
  const Scalar* src = t.data().data();
  switch (mode) {
  case 0:
    return Eigen::Map<const Matrix>(src, p1, p2 * p3);
  case 1: {
    Matrix m(p2, p1 * p3);
    for (Index k = 0; k < p3; ++k)
      m.middleCols(k * p1, p1) = Eigen::Map<const Matrix>(src + k * p1 * p2, p1, p2).transpose();
    return m;
  }
  default:
    return Eigen::Map<const Matrix>(src, p1 * p2, p3).transpose();
  }
}

/// Inverse of unfold.
template <typename Derived>
Tensor3<typename Derived::Scalar> fold(const Eigen::MatrixBase<Derived>& m, int mode, const Dims& dims)
{
  check_mode(mode);
  using Scalar = typename Derived::Scalar;
  using Matrix = typename Tensor3<Scalar>::Matrix;
  const auto [p1, p2, p3] = dims;
  const Index rows = dims[mode];
  const Index cols = dims_product(dims) / rows;
  if (m.rows() != rows || m.cols() != cols)
    throw std::invalid_argument("fold: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols())
                                + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  Tensor3<Scalar> t(dims);
  Scalar* dst = t.data().data();
  switch (mode) {
  case 0:
    Eigen::Map<Matrix>(dst, p1, p2 * p3) = m;
    break;
  case 1:
    for (Index k = 0; k < p3; ++k)
      Eigen::Map<Matrix>(dst + k * p1 * p2, p1, p2) = m.middleCols(k * p1, p1).transpose();
    break;
  default:
    Eigen::Map<Matrix>(dst, p1 * p2, p3) = m.transpose();
    break;
  }
  return t;
}

/// T x_k M: contracts mode k of T with the columns of M (M is q x p_k).
template <typename Scalar, typename Derived>
Tensor3<Scalar> mode_product(const Tensor3<Scalar>& t, const Eigen::MatrixBase<Derived>& m, int mode)
{
  check_mode(mode);
  if (m.cols() != t.dim(mode))
    throw std::invalid_argument("mode_product: matrix has " + std::to_string(m.cols()) + " columns, mode "
                                + std::to_string(mode) + " has dimension " + std::to_string(t.dim(mode)));
  Dims out = t.dims();
  out[mode] = m.rows();
  return fold(m * unfold(t, mode), mode, out);
}

template <typename Scalar>
Scalar inner(const Tensor3<Scalar>& a, const Tensor3<Scalar>& b)
{
  a.check_same_dims(b);
  return a.data().dot(b.data());
}

/// Tucker representation [[core; U0, U1, U2]] with U_k of shape p_k x r_k.
template <typename Scalar>
struct TuckerFactors
{
  using Matrix = typename Tensor3<Scalar>::Matrix;

  Tensor3<Scalar> core;
  std::array<Matrix, 3> factors;

  Ranks ranks() const { return core.dims(); }
  Dims dims() const { return {factors[0].rows(), factors[1].rows(), factors[2].rows()}; }

  void validate() const
  {
    for (int k = 0; k < 3; ++k) {
      if (factors[k].cols() != core.dim(k))
        throw std::invalid_argument("Tucker factor " + std::to_string(k) + " has " + std::to_string(factors[k].cols())
                                    + " columns but core mode dimension is " + std::to_string(core.dim(k)));
      if (factors[k].rows() < factors[k].cols())
        throw std::invalid_argument("Tucker factor " + std::to_string(k) + " has rank exceeding its dimension");
    }
  }
};

using TuckerFactorsd = TuckerFactors<double>;

/// Applies U_k (or U_k^T when `transpose` is set) along every mode.
template <typename Scalar, typename MatrixArray>
Tensor3<Scalar> multilinear_product(const Tensor3<Scalar>& t, const MatrixArray& mats, bool transpose = false)
{
  Tensor3<Scalar> out = t;
  for (int k = 0; k < 3; ++k)
    out = transpose ? mode_product(out, mats[k].transpose(), k) : mode_product(out, mats[k], k);
  return out;
}

template <typename Scalar>
Tensor3<Scalar> tucker_reconstruct(const TuckerFactors<Scalar>& f)
{
  f.validate();
  return multilinear_product(f.core, f.factors);
}

} // namespace rtr
