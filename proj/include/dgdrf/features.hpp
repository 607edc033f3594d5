#pragma once

// Random feature maps phi_M : R^D -> R^M whose inner products approximate a
// kernel given as an integral k(x, x') = E_w[psi(x, w) psi(x', w)].

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

#include "dgdrf/errors.hpp"
#include "dgdrf/random.hpp"

namespace dgdrf {

enum class FeatureKind { gaussian_rff, linear_sketch };

inline std::string_view to_string(FeatureKind kind) {
  return kind == FeatureKind::gaussian_rff ? "gaussian_rff" : "linear_sketch";
}

inline FeatureKind feature_kind_from_string(std::string_view name) {
  if (name == "gaussian_rff" || name == "gaussian") return FeatureKind::gaussian_rff;
  if (name == "linear_sketch" || name == "linear") return FeatureKind::linear_sketch;
  throw ParameterError("unknown feature kind '" + std::string(name) + "'");
}

/// Sampled feature parameters. Immutable once built by sample_feature_map.
///
/// gaussian_rff: phi_j(x) = s * sqrt(2/M) * cos(xi * W_j.x + b_j), with s = 1
/// by default and s = 1/sqrt(2) under `legacy_experiment_scaling` (the
/// psi = cos(.) variant without the sqrt(2) factor). Frequencies W are stored
/// unscaled; xi is applied at evaluation time.
///
/// linear_sketch: phi_j(x) = W_j.x / sqrt(M). xi is recorded but unused.
struct FeatureMap {
  FeatureKind kind = FeatureKind::gaussian_rff;
  Eigen::Index M = 0;
  Eigen::Index D = 0;
  Eigen::MatrixXd W;  // M x D
  Eigen::VectorXd b;  // length M for gaussian_rff, empty otherwise
  double xi = 1.0;
  std::uint64_t seed = 0;
  bool legacy_experiment_scaling = false;

  /// Bound kappa on |psi(x, w)|. Only defined for gaussian_rff; linear
  /// sketches have a data-dependent bound (see feature_bound_squared).
  [[nodiscard]] double kappa() const {
    if (kind != FeatureKind::gaussian_rff)
      throw ParameterError("kappa: linear_sketch features have no data-independent bound");
    return legacy_experiment_scaling ? 1.0 : std::numbers::sqrt2;
  }

  [[nodiscard]] bool operator==(const FeatureMap&) const = default;
};

inline FeatureMap sample_feature_map(FeatureKind kind, Eigen::Index D, Eigen::Index M, double xi,
                                     std::uint64_t seed, bool legacy_experiment_scaling = false) {
  if (M < 1) throw ParameterError("sample_feature_map: M must be >= 1");
  if (D < 1) throw ParameterError("sample_feature_map: D must be >= 1");
  if (!(xi > 0.0) || !std::isfinite(xi)) throw ParameterError("sample_feature_map: xi must be > 0");

  FeatureMap map;
  map.kind = kind;
  map.M = M;
  map.D = D;
  map.xi = xi;
  map.seed = seed;
  map.legacy_experiment_scaling = legacy_experiment_scaling;
  map.W.resize(M, D);

  const CounterRng weights(seed, Stream::feature_weights);
  for (Eigen::Index j = 0; j < M; ++j) {
    const CounterRng row = weights.split(static_cast<std::uint64_t>(j));
    for (Eigen::Index d = 0; d < D; ++d) map.W(j, d) = row.normal(static_cast<std::uint64_t>(d));
  }
  if (kind == FeatureKind::gaussian_rff) {
    const CounterRng offsets(seed, Stream::feature_offsets);
    map.b.resize(M);
    for (Eigen::Index j = 0; j < M; ++j)
      map.b(j) = 2.0 * std::numbers::pi * offsets.uniform(static_cast<std::uint64_t>(j));
  }
  return map;
}

namespace detail {

inline double feature_amplitude(const FeatureMap& map) {
  const auto m = static_cast<double>(map.M);
  if (map.kind == FeatureKind::linear_sketch) return 1.0 / std::sqrt(m);
  return map.legacy_experiment_scaling ? 1.0 / std::sqrt(m) : std::sqrt(2.0 / m);
}

}  // namespace detail

/// Feature matrix: row i is phi_M(X.row(i)). Shape rows(X) x M.
inline Eigen::MatrixXd feature_matrix(const FeatureMap& map, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() != map.D)
    throw ParameterError("feature_matrix: input has " + std::to_string(X.cols()) + " columns, map expects " +
                         std::to_string(map.D));
  const double amp = detail::feature_amplitude(map);
  Eigen::MatrixXd Z = X * map.W.transpose();
  if (map.kind == FeatureKind::linear_sketch) return amp * Z;
  Z *= map.xi;
  Z.rowwise() += map.b.transpose();
  return amp * Z.array().cos().matrix();
}

inline Eigen::VectorXd apply(const FeatureMap& map, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != map.D)
    throw ParameterError("apply: input has dimension " + std::to_string(x.size()) + ", map expects " +
                         std::to_string(map.D));
  const double amp = detail::feature_amplitude(map);
  if (map.kind == FeatureKind::linear_sketch) return amp * (map.W * x);
  Eigen::VectorXd z = map.xi * (map.W * x) + map.b;
  return amp * z.array().cos().matrix();
}

/// Kernel the feature map approximates: exp(-xi^2 |x - x'|^2 / 2) or x.x'.
inline double kernel_exact(FeatureKind kind, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& x_prime, double xi) {
  if (x.size() != x_prime.size()) throw ParameterError("kernel_exact: dimension mismatch");
  if (kind == FeatureKind::linear_sketch) return x.dot(x_prime);
  return std::exp(-0.5 * xi * xi * (x - x_prime).squaredNorm());
}

inline double kernel_approx(const FeatureMap& map, const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& x_prime) {
  if (x.size() != x_prime.size()) throw ParameterError("kernel_approx: dimension mismatch");
  return apply(map, x).dot(apply(map, x_prime));
}

/// Empirical covariance (1/m) sum_i phi(x_i) phi(x_i)^T from a precomputed feature matrix.
inline Eigen::MatrixXd covariance_from_features(const Eigen::Ref<const Eigen::MatrixXd>& Phi) {
  if (Phi.rows() < 1) throw ParameterError("empirical_covariance: need at least one sample");
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(Phi.cols(), Phi.cols());
  C.selfadjointView<Eigen::Lower>().rankUpdate(Phi.transpose(), 1.0 / static_cast<double>(Phi.rows()));
  return C.selfadjointView<Eigen::Lower>();
}

inline Eigen::MatrixXd empirical_covariance(const FeatureMap& map, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.rows() < 1) throw ParameterError("empirical_covariance: need at least one sample");
  return covariance_from_features(feature_matrix(map, X));
}

/// Largest squared feature norm over the rows of Phi; the data-dependent
/// kappa^2 used for step-size admissibility when no analytic bound exists.
inline double feature_bound_squared(const FeatureMap& map, const Eigen::Ref<const Eigen::MatrixXd>& Phi) {
  if (map.kind == FeatureKind::gaussian_rff) return map.kappa() * map.kappa();
  return Phi.rows() ? Phi.rowwise().squaredNorm().maxCoeff() : 0.0;
}

}  // namespace dgdrf
