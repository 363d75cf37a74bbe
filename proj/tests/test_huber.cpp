#include "rtr/diagnostics.hpp"
#include "rtr/huber.hpp"
#include "rtr/simulation.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace rtr;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor3d random_tensor(const Dims& dims, Rng& rng)
{
  Tensor3d t(dims);
  for (Index i = 0; i < t.size(); ++i)
    t.data()[i] = rng.normal();
  return t;
}

Eigen::MatrixXd random_matrix(Index r, Index c, Rng& rng)
{
  Eigen::MatrixXd m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i)
      m(i, j) = rng.normal();
  return m;
}

SampleSet random_samples(const Dims& dims, Index n, std::uint64_t seed)
{
  SyntheticSpec spec;
  spec.dims = dims;
  spec.ranks = {1, 1, 1};
  spec.n = n;
  spec.noise = {NoiseFamily::student_t, 3, 1};
  spec.seed = seed;
  return gen_dataset(spec).samples;
}

double loss_oracle(const SampleSet& s, const Tensor3d& a, double w)
{
  double sum = 0;
  for (Index i = 0; i < s.size(); ++i) {
    double fit = 0;
    for (Index j = 0; j < a.size(); ++j)
      fit += s.design(j, i) * a.data()[j];
    const double r = s.response[i] - fit;
    sum += std::abs(r) <= w ? 0.5 * r * r : w * std::abs(r) - 0.5 * w * w;
  }
  return sum / static_cast<double>(s.size());
}

} // namespace

TEST(HuberValue, DefinitionValues)
{
  EXPECT_DOUBLE_EQ(huber_value(1.0, HuberParams(2.0)), 0.5);
  EXPECT_DOUBLE_EQ(huber_value(3.0, HuberParams(1.0)), 2.5);
  EXPECT_DOUBLE_EQ(huber_value(-3.0, HuberParams(1.0)), 2.5);
  for (double w : {0.1, 1.0, 50.0})
    EXPECT_EQ(huber_value(0.0, HuberParams(w)), 0.0);
  EXPECT_DOUBLE_EQ(huber_value(1e3, HuberParams(kInf)), 5e5);
}

TEST(HuberParams, RejectsNonPositive)
{
  EXPECT_THROW(HuberParams(0.0), std::invalid_argument);
  EXPECT_THROW(HuberParams(-1.0), std::invalid_argument);
  EXPECT_THROW(HuberParams(std::nan("")), std::invalid_argument);
}

TEST(HuberPsi, ClippedAndQuadraticRegions)
{
  EXPECT_EQ(huber_psi(3.0, HuberParams(1.0)), 1.0);
  EXPECT_EQ(huber_psi(-0.5, HuberParams(1.0)), -0.5);
  EXPECT_EQ(huber_psi(-4.0, HuberParams(1.0)), -1.0);
  EXPECT_EQ(huber_psi(1.0, HuberParams(1.0)), 1.0);
}

TEST(HuberPsi, MatchesFiniteDifference)
{
  const HuberParams p(1.0);
  const double h = 1e-6;
  for (double x : {0.3, -0.3, 2.7, -2.7}) {
    const double fd = (huber_value(x + h, p) - huber_value(x - h, p)) / (2 * h);
    EXPECT_NEAR(fd, huber_psi(x, p), 1e-6);
  }
}

TEST(HuberValue, ConvexBoundedByQuadraticAndBoundedInfluence)
{
  Rng rng(1);
  const HuberParams p(0.8);
  for (int i = 0; i < 2000; ++i) {
    const double x = 3 * rng.normal(), y = 3 * rng.normal(), l = rng.uniform();
    EXPECT_LE(huber_value(l * x + (1 - l) * y, p), l * huber_value(x, p) + (1 - l) * huber_value(y, p) + 1e-12);
    const double q = 0.5 * x * x;
    if (std::abs(x) <= p.varpi)
      EXPECT_EQ(huber_value(x, p), q);
    else
      EXPECT_LT(huber_value(x, p), q);
    EXPECT_LE(std::abs(huber_psi(x, p)), p.varpi);
  }
}

TEST(EmpiricalLoss, ZeroAtTruthOnNoiselessData)
{
  SyntheticSpec spec;
  spec.dims = {3, 4, 3};
  spec.n = 25;
  spec.seed = 2;
  const Dataset d = gen_dataset(spec);
  EXPECT_EQ(empirical_loss(d.samples, d.truth, HuberParams(1.0)), 0.0);
}

TEST(EmpiricalLoss, SingleSample)
{
  SampleSet s;
  s.dims = {1, 1, 1};
  s.design = Eigen::MatrixXd::Ones(1, 1);
  s.response = Eigen::VectorXd::Constant(1, 2.0);
  Tensor3d a({1, 1, 1});
  a(0, 0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(empirical_loss(s, a, HuberParams(5.0)), 0.5);
}

TEST(EmpiricalLoss, MatchesResummationOracle)
{
  const SampleSet s = random_samples({3, 2, 4}, 40, 3);
  Rng rng(4);
  const Tensor3d a = random_tensor(s.dims, rng);
  for (double w : {0.2, 1.0, 1e6})
    EXPECT_NEAR(empirical_loss(s, a, HuberParams(w)), loss_oracle(s, a, w), 1e-12 * loss_oracle(s, a, w));
  EXPECT_THROW(empirical_loss(s, Tensor3d({3, 3, 4}), HuberParams(1.0)), std::invalid_argument);
}

TEST(LossGradient, ZeroResidualsGiveZero)
{
  SyntheticSpec spec;
  spec.dims = {3, 3, 3};
  spec.n = 20;
  spec.seed = 5;
  const Dataset d = gen_dataset(spec);
  EXPECT_EQ(loss_gradient_full(d.samples, d.truth, HuberParams(1.0)).norm(), 0.0);
}

TEST(LossGradient, LargeVarpiIsSquaredLossGradient)
{
  const SampleSet s = random_samples({3, 3, 2}, 30, 6);
  Rng rng(7);
  const Tensor3d a = random_tensor(s.dims, rng);
  const Eigen::VectorXd r = residuals(s, a);
  const Eigen::VectorXd ls = -(s.design * r) / 30.0;
  const Tensor3d g = loss_gradient_full(s, a, HuberParams(r.cwiseAbs().maxCoeff()));
  EXPECT_LE((g.data() - ls).norm(), 1e-12 * ls.norm());
  EXPECT_LE(std::abs(empirical_loss(s, a, HuberParams(r.cwiseAbs().maxCoeff())) - 0.5 * r.squaredNorm() / 30.0),
            1e-12 * r.squaredNorm());
}

TEST(LossGradient, DirectionalFiniteDifference)
{
  const SampleSet s = random_samples({3, 4, 2}, 30, 8);
  Rng rng(9);
  const Tensor3d a = random_tensor(s.dims, rng);
  const HuberParams p(1.0);
  const Tensor3d g = loss_gradient_full(s, a, p);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor3d v = random_tensor(s.dims, rng);
    v *= 1.0 / v.norm();
    const double fd = (empirical_loss(s, a + v * h, p) - empirical_loss(s, a - v * h, p)) / (2 * h);
    EXPECT_NEAR(fd, inner(g, v), 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(FactorGradients, StationaryRegularizer)
{
  TuckerFactorsd f;
  Rng rng(10);
  f.core = random_tensor({2, 2, 2}, rng);
  const double b = 1.3;
  for (int k = 0; k < 3; ++k) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(4, 2, rng));
    f.factors[k] = b * (qr.householderQ() * Eigen::MatrixXd::Identity(4, 2));
  }
  const FactorGradients g = factor_gradients(Tensor3d({4, 4, 4}), f, 0.7, b);
  EXPECT_EQ(g.core.norm(), 0.0);
  for (int k = 0; k < 3; ++k)
    EXPECT_LE(g.factors[k].norm(), 1e-13);
}

TEST(FactorGradients, RankOneHandComputation)
{
  Rng rng(11);
  TuckerFactorsd f;
  f.core = Tensor3d({1, 1, 1});
  const double s = 1.7;
  f.core(0, 0, 0) = s;
  const Eigen::VectorXd u1 = random_matrix(3, 1, rng).col(0).normalized();
  const Eigen::VectorXd u2 = random_matrix(4, 1, rng).col(0).normalized();
  const Eigen::VectorXd u3 = random_matrix(5, 1, rng).col(0).normalized();
  f.factors = {u1, u2, u3};
  const Tensor3d g = random_tensor({3, 4, 5}, rng);
  const FactorGradients out = factor_gradients(g, f, 0.0, 1.0);
  for (Index i = 0; i < 3; ++i) {
    double want = 0;
    for (Index j = 0; j < 4; ++j)
      for (Index k = 0; k < 5; ++k)
        want += g(i, j, k) * u2[j] * u3[k];
    EXPECT_NEAR(out.factors[0](i, 0), want * s, 1e-13);
  }
  double ds = 0;
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j)
      for (Index k = 0; k < 5; ++k)
        ds += g(i, j, k) * u1[i] * u2[j] * u3[k];
  EXPECT_NEAR(out.core(0, 0, 0), ds, 1e-13);
}

TEST(FactorGradients, ShapeMismatchRejected)
{
  TuckerFactorsd f;
  f.core = Tensor3d({2, 2, 2});
  f.factors = {Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 2)};
  EXPECT_THROW(factor_gradients(Tensor3d({3, 3, 4}), f, 1.0, 1.0), std::invalid_argument);
}

TEST(Objective, GradientConsistencyQuadraticRegime)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FDInstance inst = make_fd_instance({4, 5, 6}, {2, 2, 2}, 30, FDRegime::quadratic, seed);
    FDCheckOptions o;
    o.seed = seed;
    const FDCheckReport r = gradient_fd_check(inst.samples, inst.factors, HuberParams(inst.varpi), inst.a, inst.b, o);
    EXPECT_LE(r.max_rel_error, 1e-5) << "seed " << seed;
  }
}

TEST(Objective, GradientConsistencyClippedRegime)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FDInstance inst = make_fd_instance({4, 5, 6}, {2, 2, 2}, 30, FDRegime::clipped, seed);
    FDCheckOptions o;
    o.seed = seed;
    const FDCheckReport r = gradient_fd_check(inst.samples, inst.factors, HuberParams(inst.varpi), inst.a, inst.b, o);
    EXPECT_LE(r.max_rel_error, 1e-5) << "seed " << seed;
    EXPECT_EQ(r.kink_hits, 0);
    for (double e : r.block_rel_error)
      EXPECT_LE(e, 1e-5);
  }
}

TEST(Objective, ZeroAtBalancedTruthAndLossOnlyWithoutPenalty)
{
  SyntheticSpec spec;
  spec.dims = {4, 4, 4};
  spec.ranks = {2, 2, 2};
  spec.n = 30;
  spec.seed = 12;
  const Dataset d = gen_dataset(spec);
  TuckerFactorsd f = hosvd(d.truth, spec.ranks);
  EXPECT_LE(objective(d.samples, f, HuberParams(1.0), 1.0, 1.0), 1e-20);

  Rng rng(13);
  f.core = random_tensor({2, 2, 2}, rng);
  for (auto& u : f.factors)
    u = random_matrix(4, 2, rng);
  const HuberParams p(0.9);
  EXPECT_EQ(objective(d.samples, f, p, 0.0, 1.3), empirical_loss(d.samples, tucker_reconstruct(f), p));
  double pen = 0;
  for (const auto& u : f.factors)
    pen += (u.transpose() * u - 1.69 * Eigen::MatrixXd::Identity(2, 2)).squaredNorm();
  const double want = loss_oracle(d.samples, tucker_reconstruct(f), 0.9) + 0.5 * 0.4 * pen;
  EXPECT_NEAR(objective(d.samples, f, p, 0.4, 1.3), want, 1e-12 * want);
}

TEST(Objective, LargeVarpiMatchesSquaredLoss)
{
  const FDInstance inst = make_fd_instance({4, 5, 6}, {2, 2, 2}, 30, FDRegime::quadratic, 14);
  const Eigen::VectorXd r = residuals(inst.samples, tucker_reconstruct(inst.factors));
  const HuberParams p(r.cwiseAbs().maxCoeff());
  const double ls = 0.5 * r.squaredNorm() / 30.0 + balance_penalty(inst.factors, inst.a, inst.b);
  EXPECT_NEAR(objective(inst.samples, inst.factors, p, inst.a, inst.b), ls, 1e-12 * ls);
  const FactorGradients g1 = factor_gradients(loss_gradient_full(inst.samples, tucker_reconstruct(inst.factors), p),
                                              inst.factors, inst.a, inst.b);
  const FactorGradients g2
      = factor_gradients(loss_gradient_full(inst.samples, tucker_reconstruct(inst.factors), HuberParams(kInf)),
                         inst.factors, inst.a, inst.b);
  EXPECT_LE((g1.core - g2.core).norm(), 1e-12 * g2.core.norm());
  for (int k = 0; k < 3; ++k)
    EXPECT_LE((g1.factors[k] - g2.factors[k]).norm(), 1e-12 * g2.factors[k].norm());
}
