#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dgdrf/topology.hpp"
#include "oracles.hpp"

using namespace dgdrf;

namespace {

void expect_doubly_stochastic_symmetric(const Eigen::MatrixXd& P, double tol = 1e-12) {
  EXPECT_LT((P.rowwise().sum().array() - 1.0).abs().maxCoeff(), tol);
  EXPECT_LT((P.colwise().sum().array() - 1.0).abs().maxCoeff(), tol);
  EXPECT_LT((P - P.transpose()).cwiseAbs().maxCoeff(), tol);
  EXPECT_GE(P.minCoeff(), 0.0);
}

void expect_supported_on_graph(const MixingMatrix& mix) {
  const auto adj = mix.graph.adjacency();
  for (int v = 0; v < mix.n(); ++v)
    for (int w = 0; w < mix.n(); ++w) {
      if (v == w || mix.P(v, w) == 0.0) continue;
      const auto& nb = adj[static_cast<std::size_t>(v)];
      EXPECT_TRUE(std::find(nb.begin(), nb.end(), w) != nb.end()) << v << "," << w;
    }
}

}  // namespace

TEST(BuildGraph, CycleOfFour) {
  const Graph g = build_graph(GraphKind::cycle, 4);
  const std::vector<std::pair<int, int>> expected{{0, 1}, {0, 3}, {1, 2}, {2, 3}};
  EXPECT_EQ(g.edges, expected);
}

TEST(BuildGraph, CompleteAndGridEdgeCounts) {
  EXPECT_EQ(build_graph(GraphKind::complete, 3).edges.size(), 3u);
  // 2 k (k - 1) edges for a k x k lattice
  EXPECT_EQ(build_graph(GraphKind::grid, 9).edges.size(), 12u);
  EXPECT_EQ(build_graph(GraphKind::grid, 16).edges.size(), 24u);
  EXPECT_EQ(build_graph(GraphKind::grid, 16, {.toroidal = true}).edges.size(), 32u);
  EXPECT_TRUE(build_graph(GraphKind::grid, 16, {.toroidal = true}).is_regular());
}

TEST(BuildGraph, SmallCycles) {
  EXPECT_TRUE(build_graph(GraphKind::cycle, 1).edges.empty());
  EXPECT_EQ(build_graph(GraphKind::cycle, 2).edges.size(), 1u);
  EXPECT_TRUE(build_graph(GraphKind::cycle, 1).connected());
}

TEST(BuildGraph, InvalidParametersThrow) {
  EXPECT_THROW(build_graph(GraphKind::grid, 10), ParameterError);
  EXPECT_THROW(build_graph(GraphKind::grid, 1), ParameterError);
  EXPECT_THROW(build_graph(GraphKind::cycle, 0), ParameterError);
  EXPECT_THROW(build_graph(GraphKind::expander, 7, {.degree = 3}), ParameterError);  // odd d*n
  EXPECT_THROW(build_graph(GraphKind::expander, 5, {.degree = 5}), ParameterError);
  EXPECT_THROW(custom_graph(3, {{0, 0}}), ParameterError);
  EXPECT_THROW(custom_graph(4, {{0, 1}, {2, 3}}), ParameterError);  // disconnected
}

TEST(BuildGraph, ExpanderIsConnectedRegularAndSeeded) {
  GraphParams params{.degree = 6, .seed = 17};
  const Graph a = build_graph(GraphKind::expander, 16, params);
  const Graph b = build_graph(GraphKind::expander, 16, params);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_TRUE(a.connected());
  EXPECT_TRUE(a.is_regular());
  EXPECT_EQ(a.max_degree(), 6);
  EXPECT_EQ(a.edges.size(), 48u);
  EXPECT_LT(mixing_matrix(a, MixingScheme::lazy_uniform).sigma2, 0.9);
}

TEST(MixingMatrix, CompleteLazyUniformIsJOverN) {
  const auto mix = mixing_matrix(build_graph(GraphKind::complete, 4), MixingScheme::lazy_uniform);
  EXPECT_LT((mix.P.array() - 0.25).abs().maxCoeff(), 1e-15);
  EXPECT_NEAR(mix.sigma2, 0.0, 1e-12);
}

TEST(MixingMatrix, LazyCycleOfFour) {
  const auto mix = mixing_matrix(build_graph(GraphKind::cycle, 4), MixingScheme::lazy_uniform);
  Eigen::RowVector4d row0(1.0 / 3, 1.0 / 3, 0.0, 1.0 / 3);
  EXPECT_LT((mix.P.row(0) - row0).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(mix.sigma2, oracle::lazy_cycle_sigma2(4), 1e-12);
  EXPECT_NEAR(mix.sigma2, 1.0 / 3.0, 1e-12);
}

TEST(MixingMatrix, MetropolisGridHandEvaluation) {
  const auto mix = mixing_matrix(build_graph(GraphKind::grid, 9), MixingScheme::metropolis);
  // corners 0, 2, 6, 8 (deg 2); edge midpoints 1, 3, 5, 7 (deg 3); centre 4 (deg 4)
  EXPECT_DOUBLE_EQ(mix.P(0, 8), 0.0);
  EXPECT_DOUBLE_EQ(mix.P(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(mix.P(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(mix.P(0, 3), 0.25);
  EXPECT_DOUBLE_EQ(mix.P(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(mix.P(1, 4), 0.2);
  EXPECT_NEAR(mix.P(1, 1), 0.3, 1e-15);
  EXPECT_NEAR(mix.P(4, 4), 0.2, 1e-15);
  expect_doubly_stochastic_symmetric(mix.P);
  expect_supported_on_graph(mix);
}

TEST(MixingMatrix, LazyUniformRejectsIrregularGraphs) {
  EXPECT_THROW(mixing_matrix(build_graph(GraphKind::grid, 9), MixingScheme::lazy_uniform), SchemeError);
}

TEST(MixingMatrix, InvariantsAcrossTopologies) {
  for (int n : {3, 5, 8, 16}) {
    for (auto scheme : {MixingScheme::lazy_uniform, MixingScheme::metropolis}) {
      const auto mix = mixing_matrix(build_graph(GraphKind::cycle, n), scheme);
      expect_doubly_stochastic_symmetric(mix.P);
      expect_supported_on_graph(mix);
      EXPECT_GE(mix.sigma2, 0.0);
      EXPECT_LT(mix.sigma2, 1.0);
    }
  }
  for (int n : {9, 16, 25}) {
    const auto mix = mixing_matrix(build_graph(GraphKind::grid, n), MixingScheme::metropolis);
    expect_doubly_stochastic_symmetric(mix.P);
    expect_supported_on_graph(mix);
    EXPECT_LT(mix.sigma2, 1.0);
  }
}

TEST(MixingMatrix, PowersStayDoublyStochastic) {
  const auto mix = mixing_matrix(build_graph(GraphKind::grid, 16), MixingScheme::metropolis);
  Eigen::MatrixXd power = mix.P;
  for (int s = 1; s <= 100; ++s) {
    if (s > 1) power = power * mix.P;
    EXPECT_LT((power.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
    EXPECT_LT((power.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
  }
}

TEST(Sigma2, IdentityAndAsymmetric) {
  EXPECT_DOUBLE_EQ(sigma2(Eigen::MatrixXd::Identity(2, 2)), 1.0);
  Eigen::Matrix2d asym;
  asym << 0.5, 0.5, 0.4, 0.6;
  EXPECT_THROW(sigma2(asym), ParameterError);
  EXPECT_NEAR(sigma2(Eigen::MatrixXd::Constant(5, 5, 0.2)), 0.0, 1e-12);
}

TEST(Sigma2, MatchesClosedFormForLazyCycles) {
  for (int n : {3, 4, 8, 16, 33}) {
    const auto mix = mixing_matrix(build_graph(GraphKind::cycle, n), MixingScheme::lazy_uniform);
    EXPECT_NEAR(mix.sigma2, oracle::lazy_cycle_sigma2(n), 1e-10) << n;
    EXPECT_EQ(sigma2(mix.P), mix.sigma2);
  }
}

TEST(DeviationL1, ValuesAndLimits) {
  EXPECT_NEAR(deviation_l1(Eigen::MatrixXd::Constant(4, 4, 0.25), 3, 1), 0.0, 1e-15);
  const auto cyc4 = mixing_matrix(build_graph(GraphKind::cycle, 4), MixingScheme::lazy_uniform);
  EXPECT_NEAR(deviation_l1(cyc4.P, 1, 0), 0.5, 1e-15);
  const auto cyc8 = mixing_matrix(build_graph(GraphKind::cycle, 8), MixingScheme::lazy_uniform);
  EXPECT_LT(deviation_l1(cyc8.P, 200, 0), 1e-6);
  for (int s : {1, 2, 5, 13})
    for (int v = 0; v < 8; ++v) EXPECT_NEAR(deviation_l1(cyc8.P, s, v), oracle::deviation(cyc8.P, s, v), 1e-12);
  EXPECT_THROW(deviation_l1(cyc8.P, 0, 0), ParameterError);
  EXPECT_THROW(deviation_l1(cyc8.P, 1, 8), ParameterError);
}

TEST(DeviationL1, NeverExceedsSpectralBound) {
  for (int n : {4, 8, 16}) {
    const auto mix = mixing_matrix(build_graph(GraphKind::cycle, n), MixingScheme::lazy_uniform);
    for (int s = 1; s <= 50; ++s)
      for (int v = 0; v < n; ++v)
        EXPECT_LE(deviation_l1(mix.P, s, v), 2.0 * std::min(std::sqrt(double(n)) * std::pow(mix.sigma2, s), 1.0) + 1e-12);
  }
}

TEST(MixingTime, UniformIsOneStep) {
  EXPECT_EQ(mixing_time(Eigen::MatrixXd::Constant(3, 3, 1.0 / 3), 1e-3).steps, 1);
}

TEST(MixingTime, LazyCycleAgainstExhaustiveScan) {
  const auto mix = mixing_matrix(build_graph(GraphKind::cycle, 8), MixingScheme::lazy_uniform);
  const auto result = mixing_time(mix.P, 1e-3);
  EXPECT_EQ(result.steps, oracle::mixing_steps(mix.P, 1e-3));
  EXPECT_GE(result.theory_estimate, result.steps);
  EXPECT_LE(result.theory_estimate, 4 * result.steps);
}

TEST(MixingTime, LooseToleranceAndDivergence) {
  const auto mix = mixing_matrix(build_graph(GraphKind::cycle, 8), MixingScheme::lazy_uniform);
  EXPECT_EQ(mixing_time(mix.P, 2.0).steps, 1);
  EXPECT_THROW(mixing_time(Eigen::MatrixXd::Identity(2, 2), 1e-3), DivergenceError);
}

TEST(Export, EdgeAndMatrixCsv) {
  std::ostringstream edges, matrix;
  const auto mix = mixing_matrix(build_graph(GraphKind::cycle, 3), MixingScheme::lazy_uniform);
  write_edges_csv(edges, mix.graph);
  write_matrix_csv(matrix, mix.P);
  EXPECT_EQ(edges.str(), "source,target\n0,1\n0,2\n1,2\n");
  std::istringstream in(matrix.str());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 2);
  }
  EXPECT_EQ(rows, 3);
}
