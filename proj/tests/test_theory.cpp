#include <gtest/gtest.h>

#include "dgdrf/theory.hpp"
#include "oracles.hpp"

using namespace dgdrf;

TEST(PrescribeBasic, Examples) {
  const auto p = prescribe_basic(4, 100, 0.0);
  EXPECT_EQ(p.M_star, 20u);
  EXPECT_EQ(p.t_star_iters, 20u);
  EXPECT_EQ(p.m_min, 64.0);
  EXPECT_TRUE(p.satisfied);
  EXPECT_TRUE(p.violated.empty());

  const auto q = prescribe_basic(4, 50, 0.0);
  EXPECT_EQ(q.m_min, 64.0);
  EXPECT_FALSE(q.satisfied);
  EXPECT_FALSE(q.violated.empty());

  const auto single = prescribe_basic(1, 37, 0.0);
  EXPECT_EQ(single.m_min, 1.0);
  EXPECT_TRUE(single.satisfied);
  EXPECT_EQ(single.M_star, 7u);
  EXPECT_EQ(single.t_star_iters, 7u);
  EXPECT_FALSE(p.caveat.empty());
}

TEST(PrescribeBasic, MixingHorizonAndGap) {
  // log(4 * 100 * 20) / (1 - 0.5) = 17.95...
  EXPECT_EQ(prescribe_basic(4, 100, 0.5).t_mix, 18u);
  EXPECT_EQ(prescribe_basic(4, 100, 0.5).m_min, 1024.0);
  EXPECT_THROW(prescribe_basic(4, 100, 1.0), DivergenceError);
  EXPECT_THROW(prescribe_basic(0, 100, 0.1), ParameterError);
}

TEST(PrescribeRefined, ReducesToBasicAtHalfOne) {
  TheoryParams params;
  params.r = 0.5;
  params.gamma = 1.0;
  for (int n : {1, 2, 4, 9, 16, 25, 64})
    for (long m : {1L, 10L, 100L, 1000L, 12345L, 1000000L})
      for (double s2 : {0.0, 0.1, 0.5, 0.8, 0.95, 0.99}) {
        const auto b = prescribe_basic(n, m, s2);
        const auto r = prescribe_refined(n, m, s2, params);
        EXPECT_EQ(r.M_star, b.M_star);
        EXPECT_EQ(r.t_star_iters, b.t_star_iters);
        EXPECT_EQ(r.m_min, b.m_min) << n << " " << m << " " << s2;
        EXPECT_EQ(r.t_mix, b.t_mix);
        EXPECT_EQ(r.satisfied, b.satisfied);
      }
}

TEST(PrescribeRefined, ExponentsAtThreeQuartersHalf) {
  TheoryParams params;
  params.r = 0.75;
  params.gamma = 0.5;
  const auto p = prescribe_refined(9, 10000, 0.5, params);
  EXPECT_EQ(p.M_star, static_cast<std::uint64_t>(std::ceil(std::pow(90000.0, 0.625))));
  EXPECT_EQ(p.t_star_iters, 300u);
  EXPECT_EQ(p.conditions.size(), 3u);
  EXPECT_FALSE(p.note.empty());
}

TEST(PrescribeRefined, SmallGammaExplodesThreshold) {
  TheoryParams a, b;
  a.r = b.r = 1.0;
  a.gamma = 0.2;
  b.gamma = 0.5;
  EXPECT_GT(prescribe_refined(4, 100, 0.3, a).m_min, prescribe_refined(4, 100, 0.3, b).m_min);
}

TEST(PrescribeRefined, OutOfRegimeAndValidation) {
  TheoryParams params;
  params.r = 0.5;
  params.gamma = 0.4;
  EXPECT_THROW(prescribe_refined(4, 100, 0.3, params), OutOfRegimeError);
  params.gamma = 1.5;
  EXPECT_THROW(prescribe_refined(4, 100, 0.3, params), ParameterError);
  params = {};
  params.r = 0.4;
  EXPECT_THROW(prescribe_refined(4, 100, 0.3, params), ParameterError);
}

TEST(LeadingTerms, Examples) {
  TheoryParams params;
  params.r = 0.5;
  params.gamma = 1.0;
  const auto lt = leading_terms(10, 1000, 100, 0.5, 100, 10, params);
  EXPECT_NEAR(lt.network_variance, 0.002, 1e-15);
  EXPECT_NEAR(lt.network_residual, 1.0, 1e-12);
  EXPECT_NEAR(lt.network(), 1.002, 1e-12);
  EXPECT_NEAR(lt.bias, 0.01, 1e-15);  // (1 / (eta t))^(2r) at eta t = 100, r = 1/2
  EXPECT_NEAR(lt.total(), lt.network() + lt.statistical(), 1e-15);
  const auto far = leading_terms(10, 1e12, 100, 0.5, 100, 10, params);
  EXPECT_LT(far.network(), 1e-10);
  EXPECT_THROW(leading_terms(10, 1000, 100, 1.0, 100, 10, params), DivergenceError);
  EXPECT_THROW(leading_terms(10, 0, 100, 0.5, 100, 10, params), ParameterError);
}

TEST(LeadingTerms, NetworkMonotonicity) {
  TheoryParams params;
  params.r = 0.75;
  params.gamma = 0.5;
  for (double m : {10.0, 100.0, 1000.0})
    for (double t : {1.0, 10.0, 100.0})
      for (double ts : {1.0, 5.0, 50.0}) {
        const double base = leading_terms(4, m, 50, 0.3, t, ts, params).network();
        EXPECT_LT(leading_terms(4, 2 * m, 50, 0.3, t, ts, params).network(), base);
        EXPECT_GT(leading_terms(4, m, 50, 0.3, 2 * t, ts, params).network(), base);
        EXPECT_GT(leading_terms(4, m, 50, 0.3, t, 2 * ts, params).network(), base);
      }
}

TEST(EffectiveDimension, ExamplesAndLimits) {
  EXPECT_DOUBLE_EQ(effective_dimension(Eigen::Matrix2d::Identity(), 1.0), 1.0);
  EXPECT_LT(effective_dimension(Eigen::Matrix2d::Identity(), 1e12), 1e-11);
  Eigen::Matrix3d C = Eigen::Vector3d(2.0, 0.5, 0.0).asDiagonal();
  EXPECT_NEAR(effective_dimension(C, 1e-12), 2.0, 1e-10);
  EXPECT_THROW(effective_dimension(C, 0.0), ParameterError);
  EXPECT_THROW(effective_dimension(Eigen::MatrixXd::Zero(2, 3), 1.0), ParameterError);
}

TEST(EffectiveDimension, MonotoneAndBounded) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::MatrixXd C = random_unit_psd(12, seed) * 3.0;
    double previous = std::numeric_limits<double>::infinity();
    for (double lambda : {1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0}) {
      const double d = effective_dimension(C, lambda);
      EXPECT_LT(d, previous);
      EXPECT_LE(d, 12.0);
      EXPECT_LE(d, C.trace() / lambda + 1e-12);
      EXPECT_GE(d, 0.0);
      previous = d;
    }
  }
}

TEST(VerifyContraction, Examples) {
  const auto identity = verify_contraction(Eigen::Matrix3d::Identity(), 1.0, 20, 1.0);
  EXPECT_TRUE(identity.holds());
  EXPECT_EQ(identity.checks, 20);
  // diag(0.5), s = 2, a = 1: value 0.125, bound 0.5
  const auto half = verify_contraction(Eigen::MatrixXd::Constant(1, 1, 0.5), 1.0, 2, 1.0);
  EXPECT_TRUE(half.holds());
  EXPECT_NEAR(half.worst_slack, std::min(1.0 - 0.25, 0.5 - 0.125), 1e-15);
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (double a : {0.5, 1.0}) EXPECT_TRUE(verify_contraction(random_unit_psd(20, seed), 1.0, 100, a).holds());
}

TEST(VerifyContraction, Preconditions) {
  EXPECT_THROW(verify_contraction(Eigen::MatrixXd::Identity(2, 2) * 2.0, 1.0, 10, 1.0), PreconditionError);
  Eigen::Matrix2d indefinite = Eigen::Vector2d(1.0, -0.5).asDiagonal();
  EXPECT_THROW(verify_contraction(indefinite, 1.0, 10, 1.0), PreconditionError);
  EXPECT_THROW(verify_contraction(Eigen::Matrix2d::Identity(), 1.0, 10, 0.0), ParameterError);
}

TEST(VerifySpectralBound, UniformCycleAndSinkhorn) {
  const auto uniform = verify_spectral_bound(uniform_mixing(5).P, 10);
  EXPECT_TRUE(uniform.holds());
  EXPECT_EQ(uniform.checks, 50);
  const auto cyc = mixing_matrix(build_graph(GraphKind::cycle, 8), MixingScheme::lazy_uniform);
  EXPECT_TRUE(verify_spectral_bound(cyc.P, 50).holds());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(seed % 7);
    const CounterRng rng(seed, 77);
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) A(i, j) = A(j, i) = rng.uniform(static_cast<std::uint64_t>(i * n + j)) + 1e-3;
    const Eigen::MatrixXd P = oracle::sinkhorn_symmetric(A);
    ASSERT_LT((P.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_TRUE(verify_spectral_bound(P, 30).holds()) << seed;
  }
}

TEST(RandomUnitPsd, NormOneAndPsd) {
  const Eigen::MatrixXd L = random_unit_psd(20, 3);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L);
  EXPECT_NEAR(solver.eigenvalues().maxCoeff(), 1.0, 1e-12);
  EXPECT_GE(solver.eigenvalues().minCoeff(), -1e-12);
  EXPECT_EQ(L, L.transpose());
}
