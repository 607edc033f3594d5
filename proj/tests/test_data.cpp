#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dgdrf/data.hpp"

using namespace dgdrf;

namespace {

Dataset planted(Eigen::Index N, double noise, std::uint64_t seed, Eigen::Index D = 3) {
  const auto map = sample_feature_map(FeatureKind::gaussian_rff, D, 20, 1.0, 5);
  return gen_synthetic(N, D, map, sample_target_weights(20, 6), noise, seed);
}

}  // namespace

TEST(GenSynthetic, ZeroWeightsNoNoiseGivesZeroResponses) {
  const auto map = sample_feature_map(FeatureKind::gaussian_rff, 2, 8, 1.0, 1);
  const auto ds = gen_synthetic(50, 2, map, Eigen::VectorXd::Zero(8), 0.0, 3);
  EXPECT_EQ(ds.y, Eigen::VectorXd::Zero(50));
  ASSERT_TRUE(ds.ground_truth.has_value());
}

TEST(GenSynthetic, CovariatesInCubeAndNoiselessTargetsRegenerate) {
  const auto ds = planted(200, 0.5, 7);
  EXPECT_LE(ds.X.cwiseAbs().maxCoeff(), 1.0);
  const auto& gt = *ds.ground_truth;
  EXPECT_EQ(feature_matrix(gt.map, ds.X) * gt.weights, ds.noiseless);
}

TEST(GenSynthetic, PlantedPredictorHasZeroRiskOnFreshDraws) {
  const auto train = planted(30, 0.0, 1);
  const auto fresh = planted(100, 0.0, 2);
  const auto& gt = *train.ground_truth;
  const Eigen::VectorXd predictions = feature_matrix(gt.map, fresh.X) * gt.weights;
  EXPECT_EQ((predictions - fresh.noiseless).squaredNorm(), 0.0);
  EXPECT_EQ(fresh.y, fresh.noiseless);
}

TEST(GenSynthetic, NoiseVarianceMomentCheck) {
  const auto ds = planted(10000, 0.1, 11);
  const Eigen::VectorXd e = ds.y - ds.noiseless;
  const double mean = e.mean();
  const double var = (e.array() - mean).square().sum() / static_cast<double>(e.size() - 1);
  EXPECT_GE(var, 0.008);
  EXPECT_LE(var, 0.012);
}

TEST(GenSynthetic, ReproducibleAndSeedSensitive) {
  const auto a = planted(40, 0.3, 9);
  const auto b = planted(40, 0.3, 9);
  const auto c = planted(40, 0.3, 10);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(a.X, c.X);
}

TEST(GenSynthetic, ErrorPaths) {
  const auto map = sample_feature_map(FeatureKind::gaussian_rff, 2, 8, 1.0, 1);
  EXPECT_THROW(gen_synthetic(10, 2, map, Eigen::VectorXd::Zero(8), -0.1, 0), ParameterError);
  EXPECT_THROW(gen_synthetic(10, 2, map, Eigen::VectorXd::Zero(7), 0.1, 0), ParameterError);
  EXPECT_THROW(gen_synthetic(10, 3, map, Eigen::VectorXd::Zero(8), 0.1, 0), ParameterError);
}

TEST(KernelExpansion, RootMeanSquareOnFreshCovariates) {
  const auto map = sample_feature_map(FeatureKind::gaussian_rff, 4, 300, 1.0, 2);
  const Eigen::VectorXd w = kernel_expansion_weights(map, 10, 0.3, 17);
  const auto ds = gen_synthetic(20000, 4, map, w, 0.0, 99);
  const double rms = std::sqrt(ds.noiseless.squaredNorm() / 20000.0);
  EXPECT_NEAR(rms, 0.3, 0.03);
}

TEST(KernelExpansion, DeterministicAndErrorPaths) {
  const auto map = sample_feature_map(FeatureKind::gaussian_rff, 3, 50, 1.0, 2);
  EXPECT_EQ(kernel_expansion_weights(map, 5, 1.0, 4), kernel_expansion_weights(map, 5, 1.0, 4));
  EXPECT_NE(kernel_expansion_weights(map, 5, 1.0, 4), kernel_expansion_weights(map, 5, 1.0, 5));
  EXPECT_THROW(kernel_expansion_weights(map, 0, 1.0, 4), ParameterError);
  EXPECT_THROW(kernel_expansion_weights(map, 5, 0.0, 4), ParameterError);
}

TEST(LoadCsv, ThreeRowsLabelFirst) {
  std::istringstream in("1,0.5,2\n0,1.5,-1\n1,2.5,3e-1\n");
  const auto ds = load_csv(in);
  EXPECT_EQ(ds.size(), 3);
  EXPECT_EQ(ds.dim(), 2);
  EXPECT_FALSE(ds.ground_truth.has_value());
  EXPECT_EQ(ds.y, Eigen::Vector3d(1, 0, 1));
  EXPECT_DOUBLE_EQ(ds.X(2, 1), 0.3);
  EXPECT_DOUBLE_EQ(ds.X(1, 0), 1.5);
}

TEST(LoadCsv, LimitStopsEarly) {
  std::ostringstream big;
  for (int i = 0; i < 5000; ++i) big << (i % 2) << ',' << i << ',' << -i << '\n';
  std::istringstream in(big.str());
  CsvOptions opts;
  opts.limit = 100;
  const auto ds = load_csv(in, opts);
  EXPECT_EQ(ds.size(), 100);
  EXPECT_DOUBLE_EQ(ds.X(99, 0), 99.0);
}

TEST(LoadCsv, MalformedRowNamesLine) {
  std::ostringstream text;
  for (int i = 1; i <= 10; ++i) text << (i == 7 ? "1,abc,2" : "1,2,3") << '\n';
  std::istringstream in(text.str());
  try {
    load_csv(in);
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_EQ(e.line, 7u);
    EXPECT_NE(std::string(e.what()).find("row 7"), std::string::npos);
  }
}

TEST(LoadCsv, HeaderColumnsDelimiterAndLabels) {
  std::istringstream in("a;b;label;c\n1;2;0;3\n4;5;1;6\n");
  CsvOptions opts;
  opts.delimiter = ';';
  opts.has_header = true;
  opts.label_column = 2;
  opts.feature_columns = {3, 0};
  opts.require_binary_labels = true;
  const auto ds = load_csv(in, opts);
  EXPECT_EQ(ds.size(), 2);
  EXPECT_EQ(ds.X.row(1), Eigen::RowVector2d(6, 4));
  EXPECT_EQ(ds.y, Eigen::Vector2d(0, 1));

  std::istringstream bad("0.5,1\n");
  CsvOptions binary;
  binary.require_binary_labels = true;
  EXPECT_THROW(load_csv(bad, binary), IngestionError);
  std::istringstream ragged("1,2,3\n1,2\n");
  EXPECT_THROW(load_csv(ragged), IngestionError);
  std::istringstream nonfinite("1,inf\n");
  EXPECT_THROW(load_csv(nonfinite), IngestionError);
}

TEST(LoadCsv, RoundTripThroughWriter) {
  const auto ds = planted(12, 0.2, 4);
  std::stringstream buffer;
  write_dataset_csv(buffer, ds);
  CsvOptions opts;
  opts.has_header = true;
  opts.label_column = 3;
  opts.feature_columns = {0, 1, 2};
  const auto back = load_csv(buffer, opts);
  EXPECT_EQ(back.X, ds.X);
  EXPECT_EQ(back.y, ds.y);
}

TEST(Standardizer, FitsTrainAndHandlesConstantColumns) {
  Eigen::MatrixXd X(4, 2);
  X << 1, 5, 2, 5, 3, 5, 4, 5;
  const auto s = Standardizer::fit(X);
  const Eigen::MatrixXd Z = s.transform(X);
  EXPECT_NEAR(Z.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(Z.col(0).squaredNorm() / 4.0, 1.0, 1e-14);
  EXPECT_EQ(Z.col(1), Eigen::VectorXd::Zero(4));
}

TEST(Shard, DisjointCoverage) {
  const auto ds = planted(15, 0.1, 1);
  const auto sh = shard(ds, 3, 5, 42, "toy");
  ASSERT_EQ(sh.n(), 3);
  EXPECT_EQ(sh.m(), 5);
  std::set<Eigen::Index> all;
  for (const auto& s : sh.shards) {
    EXPECT_EQ(s.data.size(), 5);
    all.insert(s.indices.begin(), s.indices.end());
    for (std::size_t k = 0; k < s.indices.size(); ++k)
      EXPECT_EQ(s.data.X.row(static_cast<Eigen::Index>(k)), ds.X.row(s.indices[k]));
  }
  EXPECT_EQ(all.size(), 15u);
  EXPECT_EQ(sh.dataset_id, "toy");
  EXPECT_EQ(sh.permutation_seed, 42u);
}

TEST(Shard, DeterministicAndSingleAgent) {
  const auto ds = planted(40, 0.1, 2);
  EXPECT_EQ(shard(ds, 4, 10, 3).shards[2].indices, shard(ds, 4, 10, 3).shards[2].indices);
  const auto perm = random_permutation(40, 3);
  const auto single = shard(ds, 1, 7, 3);
  EXPECT_EQ(single.shards[0].indices, std::vector<Eigen::Index>(perm.begin(), perm.begin() + 7));
}

TEST(Shard, LabelMultisetPreserved) {
  const auto ds = planted(60, 0.4, 8);
  const auto sh = shard(ds, 5, 11, 13);
  const auto perm = random_permutation(60, 13);
  const Eigen::VectorXd pooled_y = sh.pooled().y;
  std::vector<double> pooled(pooled_y.begin(), pooled_y.end());
  std::vector<double> direct;
  for (std::size_t i = 0; i < 55; ++i) direct.push_back(ds.y(perm[i]));
  std::sort(pooled.begin(), pooled.end());
  std::sort(direct.begin(), direct.end());
  EXPECT_EQ(pooled, direct);
}

TEST(Shard, PermutationIsUniformish) {
  // Position of element 0 over 4000 seeds is roughly uniform on 0..3.
  std::array<int, 4> counts{};
  for (std::uint64_t s = 0; s < 4000; ++s) {
    const auto p = random_permutation(4, s);
    counts[static_cast<std::size_t>(std::find(p.begin(), p.end(), 0) - p.begin())]++;
  }
  for (int c : counts) EXPECT_NEAR(c, 1000, 120);
}

TEST(Shard, InsufficientSamples) {
  const auto ds = planted(10, 0.1, 1);
  EXPECT_THROW(shard(ds, 3, 4, 0), ParameterError);
  EXPECT_THROW(shard(ds, 0, 4, 0), ParameterError);
}
