#include "rtr/robust_init.hpp"
#include "rtr/simulation.hpp"
#include "rtr/stats.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

using namespace rtr;

namespace {

SampleSet tiny_samples()
{
  SampleSet s;
  s.dims = {2, 1, 1};
  s.design.resize(2, 2);
  s.design << 1.0, 3.0, -2.0, 0.5;
  s.response.resize(2);
  s.response << 4.0, -1.0;
  return s;
}

double rel_diff(const Tensor3d& a, const Tensor3d& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

} // namespace

TEST(Truncate, ClipsSymmetrically)
{
  EXPECT_EQ(truncate(5, 2), 2);
  EXPECT_EQ(truncate(-0.5, 2), -0.5);
  EXPECT_EQ(truncate(-7, 3), -3);
  EXPECT_EQ(truncate(1e300, std::numeric_limits<double>::infinity()), 1e300);
  EXPECT_THROW(truncate(1, 0), std::invalid_argument);
  EXPECT_THROW(truncate(1, -1), std::invalid_argument);
}

TEST(RobustMoment, ZeroResponsesGiveZeroTensor)
{
  SampleSet s = tiny_samples();
  s.response.setZero();
  EXPECT_EQ(robust_moment_tensor(s, 1.0).norm(), 0.0);
}

TEST(RobustMoment, InactiveTruncationIsNaiveMoment)
{
  const SampleSet s = tiny_samples();
  const Tensor3d a = robust_moment_tensor(s, 4.0);
  const Tensor3d b = robust_moment_tensor(s, std::numeric_limits<double>::infinity());
  EXPECT_EQ(a, b);
  const Eigen::VectorXd naive = s.design * s.response / 2.0;
  EXPECT_LE((a.data() - naive).norm(), 1e-15);
}

TEST(RobustMoment, TwoSampleHandComputation)
{
  const SampleSet s = tiny_samples();
  // tau = 2: psi(4) = 2, psi(-1) = -1.
  const Tensor3d a = robust_moment_tensor(s, 2.0);
  EXPECT_DOUBLE_EQ(a(0, 0, 0), 0.5 * (2.0 * 1.0 + -1.0 * 3.0));
  EXPECT_DOUBLE_EQ(a(1, 0, 0), 0.5 * (2.0 * -2.0 + -1.0 * 0.5));
}

TEST(RobustMoment, EmptySampleRejected)
{
  SampleSet s;
  s.dims = {2, 2, 2};
  s.design.resize(8, 0);
  EXPECT_THROW(robust_moment_tensor(s, 1.0), std::invalid_argument);
}

TEST(RobustMoment, LipschitzInTau)
{
  SyntheticSpec spec;
  spec.dims = {3, 3, 3};
  spec.ranks = {1, 1, 1};
  spec.n = 50;
  spec.noise = {NoiseFamily::student_t, 2.5, 1};
  spec.seed = 3;
  const Dataset d = gen_dataset(spec);
  const Eigen::VectorXd bound = d.samples.design.cwiseAbs().rowwise().mean();
  for (auto [t1, t2] : {std::pair{0.3, 0.7}, std::pair{1.0, 4.0}, std::pair{0.1, 10.0}}) {
    const Tensor3d a = robust_moment_tensor(d.samples, t1);
    const Tensor3d b = robust_moment_tensor(d.samples, t2);
    const Eigen::VectorXd diff = (a.data() - b.data()).cwiseAbs();
    for (Index i = 0; i < diff.size(); ++i)
      EXPECT_LE(diff[i], std::abs(t1 - t2) * bound[i] + 1e-14);
  }
}

TEST(Hosvd, ExactlyLowRankInputRecovered)
{
  const Tensor3d t = gen_target({5, 6, 4}, {2, 3, 2}, 1.0, 3.0, 7);
  const TuckerFactorsd f = hosvd(t, {2, 3, 2});
  EXPECT_LE(rel_diff(tucker_reconstruct(f), t), 1e-8);
  for (int k = 0; k < 3; ++k) {
    const auto& u = f.factors[k];
    EXPECT_LE((u.transpose() * u - Eigen::MatrixXd::Identity(u.cols(), u.cols())).norm(), 1e-10);
  }
  EXPECT_LE(f.core.norm(), t.norm() * (1 + 1e-12));
}

TEST(Hosvd, ZeroTensorIsDeterministic)
{
  const TuckerFactorsd a = hosvd(Tensor3d({3, 3, 3}), {2, 2, 2});
  const TuckerFactorsd b = hosvd(Tensor3d({3, 3, 3}), {2, 2, 2});
  EXPECT_EQ(a.core.norm(), 0.0);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(a.factors[k], b.factors[k]);
    EXPECT_LE((a.factors[k].transpose() * a.factors[k] - Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-12);
  }
}

TEST(Hosvd, QuasiOptimalityBound)
{
  Rng rng(8);
  Tensor3d t({5, 4, 6});
  for (Index i = 0; i < t.size(); ++i)
    t.data()[i] = rng.normal();
  const Ranks r{2, 2, 3};
  const double err = (t - tucker_reconstruct(hosvd(t, r))).squaredNorm();
  double discarded = 0;
  for (int k = 0; k < 3; ++k) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(unfold(t, k));
    const Eigen::VectorXd sv = svd.singularValues();
    discarded += sv.tail(sv.size() - r[k]).squaredNorm();
  }
  EXPECT_LE(err, discarded * (1 + 1e-12));
  EXPECT_GT(err, 0.0);
}

TEST(Hosvd, RankTooLargeRejected) { EXPECT_THROW(hosvd(Tensor3d({2, 3, 3}), {3, 1, 1}), std::invalid_argument); }

TEST(InitFactors, ScalingCancelsInReconstruction)
{
  const Tensor3d t = gen_target({5, 5, 5}, {2, 2, 2}, 1.0, 2.0, 9);
  const TuckerFactorsd h = hosvd(t, {2, 2, 2});
  const TuckerFactorsd one = init_factors(t, {2, 2, 2}, 1.0);
  EXPECT_EQ(one.core, h.core);
  for (int k = 0; k < 3; ++k)
    EXPECT_EQ(one.factors[k], h.factors[k]);
  const Tensor3d base = tucker_reconstruct(h);
  for (double b : {0.5, 2.0, 10.0}) {
    const TuckerFactorsd f = init_factors(t, {2, 2, 2}, b);
    EXPECT_LE(rel_diff(tucker_reconstruct(f), base), 1e-10);
    for (int k = 0; k < 3; ++k)
      EXPECT_LE((f.factors[k].transpose() * f.factors[k] - b * b * Eigen::MatrixXd::Identity(2, 2)).norm(),
                1e-10 * b * b);
  }
  EXPECT_THROW(init_factors(t, {2, 2, 2}, 0.0), std::invalid_argument);
}

TEST(Threshold, ScaleRule)
{
  EXPECT_NEAR(scale_threshold(1.0, 680, 68, 1.0), std::sqrt(10.0), 1e-12);
  EXPECT_NEAR(scale_threshold(1.0, 680, 68, 0.5), std::pow(10.0, 2.0 / 3.0), 1e-12);
  EXPECT_EQ(scale_threshold(0.0, 680, 68, 1.0), 1.0);
}

TEST(Threshold, MomentProxyIsWinsorized)
{
  Eigen::VectorXd y(1000);
  for (Index i = 0; i < 1000; ++i)
    y[i] = static_cast<double>(i % 2 ? i + 1 : -(i + 1));
  y[999] = 1e9;
  std::vector<double> a(1000);
  for (Index i = 0; i < 1000; ++i)
    a[i] = std::abs(y[i]);
  const double q = quantile(a, 0.99);
  double want = 0;
  for (double v : a)
    want += std::pow(std::min(v, q), 2.0);
  EXPECT_NEAR(response_moment_proxy(y, 1.0), want / 1000, 1e-9 * want);
  EXPECT_LT(response_moment_proxy(y, 1.0), 1e6);
}

TEST(NumericalRank, FlooredAndCapped)
{
  Eigen::VectorXd sv(4);
  sv << 10, 5, 0.5, 0.1;
  EXPECT_EQ(numerical_rank(sv, 1.0), 2);
  EXPECT_EQ(numerical_rank(sv, 100.0), 1);
  EXPECT_EQ(numerical_rank(sv, 0.0), 4);
}

TEST(RankSelect, ZeroResponsesGiveDegenerateFloor)
{
  SyntheticSpec spec;
  spec.dims = {4, 4, 4};
  spec.n = 40;
  spec.seed = 1;
  Dataset d = gen_dataset(spec);
  d.samples.response.setZero();
  const RankSelectResult r = select_rank(d.samples);
  EXPECT_EQ(r.ranks, (Ranks{1, 1, 1}));
  EXPECT_TRUE(r.degenerate);
  EXPECT_FALSE(r.warning.empty());
}

TEST(RankSelect, FirstStepMatchesDirectThresholdingOracle)
{
  SyntheticSpec spec;
  spec.dims = {6, 6, 6};
  spec.ranks = {2, 2, 2};
  spec.n = 400;
  spec.noise = {NoiseFamily::student_t, 3, 1};
  spec.lambda_min = 2;
  spec.lambda_max = 3;
  spec.seed = 4;
  const Dataset d = gen_dataset(spec);
  RankSelectConfig cfg;
  cfg.noise_edge_factor = 0;
  const RankSelectResult r = select_rank(d.samples, cfg);
  ASSERT_FALSE(r.trace.empty());
  EXPECT_TRUE(std::isinf(r.trace.front().tau));
  const Eigen::VectorXd naive = d.samples.design * d.samples.response / static_cast<double>(spec.n);
  const Tensor3d t(spec.dims, naive);
  for (int k = 0; k < 3; ++k) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(unfold(t, k));
    const Eigen::VectorXd sv = svd.singularValues();
    Index count = 0;
    for (Index i = 0; i < sv.size(); ++i)
      count += sv[i] > 0.1 * sv[0] ? 1 : 0;
    EXPECT_EQ(r.trace.front().ranks[k], std::max<Index>(1, count));
  }
}

TEST(RankSelect, NoiselessRecoveryRate)
{
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticSpec spec;
    spec.dims = {6, 6, 6};
    spec.ranks = {2, 2, 2};
    spec.n = static_cast<Index>(50 * degrees_of_freedom(spec.dims, spec.ranks));
    spec.lambda_min = 2;
    spec.lambda_max = 3;
    spec.seed = 1000 + seed;
    const RankSelectResult r = select_rank(gen_dataset(spec).samples);
    hits += r.ranks == spec.ranks ? 1 : 0;
    EXPECT_LE(static_cast<int>(r.trace.size()) - 1, 10);
  }
  EXPECT_GE(hits, 18);
}

TEST(RankSelect, TerminatesWithinBoundsOnHeavyTails)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.dims = {5, 6, 4};
    spec.ranks = {2, 2, 2};
    spec.n = 200;
    spec.noise = {NoiseFamily::student_t, 1.5, 1};
    spec.seed = seed;
    RankSelectConfig cfg;
    cfg.max_outer_iters = 3;
    const RankSelectResult r = select_rank(gen_dataset(spec).samples, cfg);
    EXPECT_LE(static_cast<int>(r.trace.size()) - 1, 3);
    for (int k = 0; k < 3; ++k) {
      EXPECT_GE(r.ranks[k], 1);
      EXPECT_LE(r.ranks[k], spec.dims[k]);
    }
  }
}

TEST(RankSelect, ConfigValidation)
{
  RankSelectConfig cfg;
  cfg.singular_value_ratio_threshold = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.singular_value_ratio_threshold = 0.1;
  cfg.max_outer_iters = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Initializer, TruncationHelpsUnderOutliers)
{
  std::vector<double> robust, naive;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticSpec spec;
    spec.dims = {6, 6, 6};
    spec.ranks = {2, 2, 2};
    spec.n = static_cast<Index>(20 * degrees_of_freedom(spec.dims, spec.ranks));
    spec.noise = {NoiseFamily::student_t, 3, 1};
    spec.lambda_min = 2;
    spec.lambda_max = 3;
    spec.contamination = {0.05, 100};
    spec.seed = 500 + seed;
    const Dataset d = gen_dataset(spec);
    const double df = degrees_of_freedom(spec.dims, spec.ranks);
    const double tau = scale_threshold(response_moment_proxy(d.samples.response, 1.0), spec.n, df, 1.0);
    robust.push_back((tucker_reconstruct(hosvd(robust_moment_tensor(d.samples, tau), spec.ranks)) - d.truth).norm());
    naive.push_back((tucker_reconstruct(hosvd(robust_moment_tensor(d.samples, std::numeric_limits<double>::infinity()),
                                              spec.ranks))
                     - d.truth)
                        .norm());
  }
  EXPECT_LT(median(robust), median(naive));
}
