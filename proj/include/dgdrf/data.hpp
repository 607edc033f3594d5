#pragma once

// Datasets: planted-truth synthetic generation, CSV ingestion, i.i.d. sharding.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dgdrf/errors.hpp"
#include "dgdrf/features.hpp"
#include "dgdrf/random.hpp"

namespace dgdrf {

/// Planted regression function f_H(x) = <weights, phi(x)> and the noise level used.
struct GroundTruth {
  FeatureMap map;
  Eigen::VectorXd weights;
  double noise_sigma = 0.0;
};

struct Dataset {
  Eigen::MatrixXd X;  // N x D
  Eigen::VectorXd y;  // N
  std::optional<GroundTruth> ground_truth;
  Eigen::VectorXd noiseless;  // f_H(x_i), present iff ground_truth

  [[nodiscard]] Eigen::Index size() const { return X.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return X.cols(); }

  /// Rows selected by `idx`, in that order, with ground truth carried over.
  [[nodiscard]] Dataset subset(const std::vector<Eigen::Index>& idx) const {
    Dataset out;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    out.y.resize(static_cast<Eigen::Index>(idx.size()));
    if (ground_truth) out.noiseless.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      out.X.row(i) = X.row(idx[k]);
      out.y(i) = y(idx[k]);
      if (ground_truth) out.noiseless(i) = noiseless(idx[k]);
    }
    out.ground_truth = ground_truth;
    return out;
  }
};

/// Weights for a planted target: i.i.d. standard normal, so f_H has unit
/// order variance independent of the number of target features.
inline Eigen::VectorXd sample_target_weights(Eigen::Index M, std::uint64_t seed) {
  const CounterRng rng(seed, Stream::target_weights);
  Eigen::VectorXd w(M);
  for (Eigen::Index j = 0; j < M; ++j) w(j) = rng.normal(static_cast<std::uint64_t>(j));
  return w;
}

/// Weights of a kernel expansion f(x) = sum_c alpha_c k_M(x, z_c) in the span of
/// `map`: w = Phi(Z)^T alpha, with centers z_c uniform on [-1, 1]^D and
/// alpha_c standard normal. Rescaled so the root mean square of f over the
/// covariate law (4096-point Monte Carlo) equals `signal_rms`.
inline Eigen::VectorXd kernel_expansion_weights(const FeatureMap& map, Eigen::Index centers, double signal_rms,
                                                std::uint64_t seed) {
  if (centers < 1) throw ParameterError("kernel_expansion_weights: need at least one center");
  if (!(signal_rms > 0.0)) throw ParameterError("kernel_expansion_weights: signal_rms must be > 0");
  const CounterRng rng(seed, Stream::target_weights);
  Eigen::MatrixXd Z(centers, map.D);
  Eigen::VectorXd alpha(centers);
  for (Eigen::Index c = 0; c < centers; ++c) {
    const CounterRng row = rng.split(static_cast<std::uint64_t>(c));
    alpha(c) = row.normal(0);
    for (Eigen::Index d = 0; d < map.D; ++d) Z(c, d) = 2.0 * row.uniform(static_cast<std::uint64_t>(16 + d)) - 1.0;
  }
  Eigen::VectorXd w = feature_matrix(map, Z).transpose() * alpha;

  constexpr Eigen::Index kReference = 4096;
  const CounterRng ref = rng.split(~std::uint64_t{0});
  Eigen::MatrixXd R(kReference, map.D);
  for (Eigen::Index i = 0; i < kReference; ++i) {
    const CounterRng row = ref.split(static_cast<std::uint64_t>(i));
    for (Eigen::Index d = 0; d < map.D; ++d) R(i, d) = 2.0 * row.uniform(static_cast<std::uint64_t>(d)) - 1.0;
  }
  const double rms = std::sqrt((feature_matrix(map, R) * w).squaredNorm() / static_cast<double>(kReference));
  if (!(rms > 0.0)) throw ParameterError("kernel_expansion_weights: degenerate target");
  return w * (signal_rms / rms);
}

/// X uniform on [-1, 1]^D; y = <target_weights, phi(x)> + N(0, noise_sigma^2).
/// `covariate_stream`/`noise_stream` let train and test draws share a seed
/// without sharing samples.
inline Dataset gen_synthetic(Eigen::Index N, Eigen::Index D, const FeatureMap& target_map,
                             const Eigen::VectorXd& target_weights, double noise_sigma, std::uint64_t seed,
                             Stream covariate_stream = Stream::covariates, Stream noise_stream = Stream::noise) {
  if (N < 1 || D < 1) throw ParameterError("gen_synthetic: N and D must be >= 1");
  if (target_weights.size() != target_map.M)
    throw ParameterError("gen_synthetic: target_weights length does not match target_map.M");
  if (target_map.D != D) throw ParameterError("gen_synthetic: target_map.D does not match D");
  if (!(noise_sigma >= 0.0)) throw ParameterError("gen_synthetic: noise_sigma must be >= 0");

  Dataset ds;
  ds.X.resize(N, D);
  const CounterRng cov(seed, covariate_stream);
  for (Eigen::Index i = 0; i < N; ++i) {
    const CounterRng row = cov.split(static_cast<std::uint64_t>(i));
    for (Eigen::Index d = 0; d < D; ++d) ds.X(i, d) = 2.0 * row.uniform(static_cast<std::uint64_t>(d)) - 1.0;
  }
  ds.noiseless = feature_matrix(target_map, ds.X) * target_weights;
  ds.y = ds.noiseless;
  if (noise_sigma > 0.0) {
    const CounterRng noise(seed, noise_stream);
    for (Eigen::Index i = 0; i < N; ++i) ds.y(i) += noise_sigma * noise.normal(static_cast<std::uint64_t>(i));
  }
  ds.ground_truth = GroundTruth{target_map, target_weights, noise_sigma};
  return ds;
}

struct CsvOptions {
  int label_column = 0;               // 0-based
  std::vector<int> feature_columns;   // empty: every column except the label
  std::size_t limit = 0;              // 0: no limit
  char delimiter = ',';
  bool has_header = false;
  bool require_binary_labels = false;
};

/// Streams rows from a delimited text file. Row order is preserved.
inline Dataset load_csv(std::istream& in, const CsvOptions& opts = {}) {
  std::vector<double> values;
  std::vector<double> labels;
  std::vector<int> columns = opts.feature_columns;
  std::vector<double> fields;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while ((opts.limit == 0 || labels.size() < opts.limit) && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && opts.has_header) continue;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    fields.clear();
    std::string_view rest(line);
    for (;;) {
      const auto pos = rest.find(opts.delimiter);
      std::string_view tok = rest.substr(0, pos);
      while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
      while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.remove_suffix(1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v))
        throw IngestionError(line_no, "cannot parse field " + std::to_string(fields.size()) + " ('" +
                                          std::string(tok) + "') as a finite number");
      fields.push_back(v);
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }

    if (width == 0) {
      width = fields.size();
      if (opts.label_column < 0 || static_cast<std::size_t>(opts.label_column) >= width)
        throw IngestionError(line_no, "label column " + std::to_string(opts.label_column) + " out of range");
      if (columns.empty())
        for (int c = 0; c < static_cast<int>(width); ++c)
          if (c != opts.label_column) columns.push_back(c);
      for (int c : columns)
        if (c < 0 || static_cast<std::size_t>(c) >= width)
          throw IngestionError(line_no, "feature column " + std::to_string(c) + " out of range");
      if (columns.empty()) throw IngestionError(line_no, "no feature columns");
    } else if (fields.size() != width) {
      throw IngestionError(line_no, "expected " + std::to_string(width) + " fields, found " +
                                        std::to_string(fields.size()));
    }

    const double label = fields[static_cast<std::size_t>(opts.label_column)];
    if (opts.require_binary_labels && label != 0.0 && label != 1.0)
      throw IngestionError(line_no, "non-binary label " + std::to_string(label) + " in classification task");
    labels.push_back(label);
    for (int c : columns) values.push_back(fields[static_cast<std::size_t>(c)]);
  }

  Dataset ds;
  const auto N = static_cast<Eigen::Index>(labels.size());
  const auto D = static_cast<Eigen::Index>(columns.size());
  ds.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), N, D);
  ds.y = Eigen::Map<const Eigen::VectorXd>(labels.data(), N);
  return ds;
}

inline Dataset load_csv(const std::string& path, const CsvOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open '" + path + "'");
  return load_csv(in, opts);
}

/// Dataset snapshot: columns x0..x{D-1}, y[, f_star].
inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  const auto old = os.precision(17);
  for (Eigen::Index d = 0; d < ds.dim(); ++d) os << 'x' << d << ',';
  os << 'y' << (ds.ground_truth ? ",f_star" : "") << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index d = 0; d < ds.dim(); ++d) os << ds.X(i, d) << ',';
    os << ds.y(i);
    if (ds.ground_truth) os << ',' << ds.noiseless(i);
    os << '\n';
  }
  os.precision(old);
}

/// Per-feature affine standardization fitted on a training split.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::Ref<const Eigen::MatrixXd>& X) {
    if (X.rows() < 1) throw ParameterError("Standardizer::fit: empty input");
    Standardizer s;
    s.mean = X.colwise().mean();
    const Eigen::MatrixXd centered = X.rowwise() - s.mean;
    s.scale = (centered.colwise().squaredNorm() / static_cast<double>(X.rows())).cwiseSqrt();
    for (Eigen::Index d = 0; d < s.scale.size(); ++d)
      if (!(s.scale(d) > 0.0)) s.scale(d) = 1.0;
    return s;
  }

  [[nodiscard]] Eigen::MatrixXd transform(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    return (X.rowwise() - mean).array().rowwise() / scale.array();
  }
};

struct AgentShard {
  Dataset data;
  std::vector<Eigen::Index> indices;  // rows of the source dataset
};

struct ShardedData {
  std::vector<AgentShard> shards;
  std::string dataset_id;
  std::uint64_t permutation_seed = 0;

  [[nodiscard]] int n() const { return static_cast<int>(shards.size()); }
  [[nodiscard]] Eigen::Index m() const { return shards.empty() ? 0 : shards.front().data.size(); }

  /// All shards stacked in agent order.
  [[nodiscard]] Dataset pooled() const {
    std::vector<Eigen::Index> all;
    for (const auto& s : shards) all.insert(all.end(), s.indices.begin(), s.indices.end());
    Dataset out;
    if (shards.empty()) return out;
    const auto D = shards.front().data.dim();
    out.X.resize(static_cast<Eigen::Index>(all.size()), D);
    out.y.resize(static_cast<Eigen::Index>(all.size()));
    out.ground_truth = shards.front().data.ground_truth;
    if (out.ground_truth) out.noiseless.resize(out.y.size());
    Eigen::Index row = 0;
    for (const auto& s : shards) {
      const auto k = s.data.size();
      out.X.middleRows(row, k) = s.data.X;
      out.y.segment(row, k) = s.data.y;
      if (out.ground_truth) out.noiseless.segment(row, k) = s.data.noiseless;
      row += k;
    }
    return out;
  }
};

/// Uniform random permutation of 0..N-1 (Fisher-Yates on a counter stream).
inline std::vector<Eigen::Index> random_permutation(Eigen::Index N, std::uint64_t seed) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  const CounterRng rng(seed, Stream::permutation);
  std::uint64_t counter = 0;
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i, counter)]);
  return perm;
}

/// First n*m points of a uniformly random permutation, split into n blocks of m.
inline ShardedData shard(const Dataset& ds, int n, Eigen::Index m, std::uint64_t seed, std::string dataset_id = {}) {
  if (n < 1 || m < 1) throw ParameterError("shard: n and m must be >= 1");
  if (static_cast<Eigen::Index>(n) * m > ds.size())
    throw ParameterError("shard: need n*m = " + std::to_string(static_cast<Eigen::Index>(n) * m) +
                         " samples, dataset has " + std::to_string(ds.size()));
  const auto perm = random_permutation(ds.size(), seed);
  ShardedData out;
  out.dataset_id = std::move(dataset_id);
  out.permutation_seed = seed;
  out.shards.reserve(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    const auto begin = perm.begin() + static_cast<std::ptrdiff_t>(v) * m;
    std::vector<Eigen::Index> idx(begin, begin + m);
    out.shards.push_back(AgentShard{ds.subset(idx), std::move(idx)});
  }
  return out;
}

}  // namespace dgdrf
