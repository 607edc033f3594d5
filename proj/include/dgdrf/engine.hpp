#pragma once

// Synchronous Distributed Gradient Descent with random features, and the
// single-machine full-batch baseline.
//
// Round t (t = 1..T), for every agent v:
//   g_w          = w_{t,w} - (eta/m) Phi_w^T (Phi_w w_{t,w} - y_w)
//   w_{t+1,v}    = sum_w P(v, w) g_w
// starting from w_{1,v} = 0. The mixing sum runs over w in index order so
// results do not depend on the worker count.

#include <Eigen/Dense>

#include <algorithm>
#include <barrier>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dgdrf/data.hpp"
#include "dgdrf/errors.hpp"
#include "dgdrf/features.hpp"
#include "dgdrf/topology.hpp"

namespace dgdrf {

struct RunConfig {
  std::optional<double> eta;  // unset: 1 / kappa^2
  long T = 100;
  long checkpoint_every = 0;  // 0: automatic thinning (<= ~512 checkpoints)
  bool allow_large_step = false;
  int threads = 1;

  bool operator==(const RunConfig&) const = default;
};

/// Iterates w_{t,v} at the checkpointed t. weights[c] is M x n, column v = agent v.
struct TrainTrace {
  std::vector<long> checkpoints;
  std::vector<Eigen::MatrixXd> weights;
  RunConfig config;
  double eta = 0.0;
  FeatureMap map;
  Eigen::MatrixXd mixing;  // n x n; [1] for single-machine runs

  [[nodiscard]] int agents() const { return static_cast<int>(mixing.rows()); }
  [[nodiscard]] Eigen::Index M() const { return map.M; }
  [[nodiscard]] std::size_t size() const { return checkpoints.size(); }

  /// Position of iteration t in `checkpoints`, or nullopt.
  [[nodiscard]] std::optional<std::size_t> index_of(long t) const {
    const auto it = std::lower_bound(checkpoints.begin(), checkpoints.end(), t);
    if (it == checkpoints.end() || *it != t) return std::nullopt;
    return static_cast<std::size_t>(it - checkpoints.begin());
  }
};

/// Checkpointed iteration indices in [1, T+1]. Stride 0 picks one that keeps
/// at most ~512 entries; 1, T+1 and every power of two are always included.
inline std::vector<long> checkpoint_schedule(long T, long stride) {
  if (T < 0) throw ParameterError("checkpoint_schedule: T must be >= 0");
  if (stride <= 0) stride = std::max(1L, (T + 479) / 480);
  std::set<long> out;
  for (long t = 1; t <= T + 1; t += stride) out.insert(t);
  for (long p = 1; p <= T + 1; p *= 2) out.insert(p);
  out.insert(T + 1);
  return {out.begin(), out.end()};
}

namespace detail {

// One agent's least-squares problem with its cached feature matrix. When
// M <= m the gradient uses the M x M covariance; otherwise the m x M features.
struct LocalProblem {
  Eigen::MatrixXd Phi;
  Eigen::VectorXd y;
  Eigen::MatrixXd C;
  Eigen::VectorXd s;
  bool covariance_form = false;

  LocalProblem(const FeatureMap& map, const Dataset& data) : Phi(feature_matrix(map, data.X)), y(data.y) {
    if (Phi.rows() < 1) throw ParameterError("run: every shard needs at least one sample");
    covariance_form = Phi.cols() <= Phi.rows();
    if (covariance_form) {
      C = covariance_from_features(Phi);
      s = Phi.transpose() * y / static_cast<double>(Phi.rows());
    }
  }

  void step(const Eigen::Ref<const Eigen::VectorXd>& w, double eta, Eigen::Ref<Eigen::VectorXd> out) const {
    if (covariance_form) {
      out.noalias() = w - eta * (C * w - s);
    } else {
      const Eigen::VectorXd residual = Phi * w - y;
      out.noalias() = w - (eta / static_cast<double>(Phi.rows())) * (Phi.transpose() * residual);
    }
  }
};

inline double resolve_eta(const RunConfig& config, const FeatureMap& map, const std::vector<LocalProblem>& problems) {
  double kappa2 = 0.0;
  for (const auto& p : problems) kappa2 = std::max(kappa2, feature_bound_squared(map, p.Phi));
  if (config.T < 0) throw ConfigError("run.T", "must be >= 0");
  double eta = config.eta.value_or(kappa2 > 0.0 ? 1.0 / kappa2 : 1.0);
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("run.eta", "step size must be > 0");
  if (eta * kappa2 > 1.0 + 1e-12 && !config.allow_large_step)
    throw ConfigError("run.eta", "eta * kappa^2 = " + std::to_string(eta * kappa2) +
                                     " exceeds 1; set allow_large_step to override");
  return eta;
}

inline TrainTrace run_rounds(const std::vector<LocalProblem>& problems, const FeatureMap& map,
                             const Eigen::MatrixXd& P, const RunConfig& config, const Eigen::MatrixXd& initial) {
  const auto n = static_cast<Eigen::Index>(problems.size());
  if (P.rows() != n || P.cols() != n)
    throw ParameterError("run: mixing matrix is " + std::to_string(P.rows()) + "x" + std::to_string(P.cols()) +
                         " but there are " + std::to_string(n) + " shards");
  const double eta = resolve_eta(config, map, problems);

  TrainTrace trace;
  trace.config = config;
  trace.eta = eta;
  trace.map = map;
  trace.mixing = P;
  trace.checkpoints = checkpoint_schedule(config.T, config.checkpoint_every);
  trace.weights.reserve(trace.checkpoints.size());

  Eigen::MatrixXd state = Eigen::MatrixXd::Zero(map.M, n);
  if (initial.size() != 0) {
    if (initial.rows() != map.M || initial.cols() != n) throw ParameterError("run: initial weights must be M x n");
    state = initial;
  }
  trace.weights.push_back(state);
  if (config.T == 0) return trace;

  // Nonzero neighbours of each agent, ascending.
  std::vector<std::vector<Eigen::Index>> support(static_cast<std::size_t>(n));
  for (Eigen::Index v = 0; v < n; ++v)
    for (Eigen::Index w = 0; w < n; ++w)
      if (P(v, w) != 0.0) support[static_cast<std::size_t>(v)].push_back(w);

  Eigen::MatrixXd local(map.M, n);
  Eigen::MatrixXd next(map.M, n);
  std::size_t next_checkpoint = 1;
  long t = 1;

  auto local_steps = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index w = begin; w < end; ++w)
      problems[static_cast<std::size_t>(w)].step(state.col(w), eta, local.col(w));
  };
  auto mix = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index v = begin; v < end; ++v) {
      auto out = next.col(v);
      out.setZero();
      for (Eigen::Index w : support[static_cast<std::size_t>(v)]) out += P(v, w) * local.col(w);
    }
  };
  auto finish_round = [&]() noexcept {
    state.swap(next);
    ++t;
    if (next_checkpoint < trace.checkpoints.size() && trace.checkpoints[next_checkpoint] == t) {
      trace.weights.push_back(state);
      ++next_checkpoint;
    }
  };

  const int workers = static_cast<int>(std::clamp<Eigen::Index>(config.threads, 1, n));
  if (workers == 1) {
    for (long round = 0; round < config.T; ++round) {
      local_steps(0, n);
      mix(0, n);
      finish_round();
    }
    return trace;
  }

  std::barrier mid(workers);
  std::barrier end(workers, finish_round);
  auto worker = [&](int id) {
    const Eigen::Index begin = n * id / workers;
    const Eigen::Index stop = n * (id + 1) / workers;
    for (long round = 0; round < config.T; ++round) {
      local_steps(begin, stop);
      mid.arrive_and_wait();
      mix(begin, stop);
      end.arrive_and_wait();
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int id = 1; id < workers; ++id) pool.emplace_back(worker, id);
    worker(0);
  }
  return trace;
}

}  // namespace detail

/// Distributed run over `shards` with gossip matrix P. `initial` (M x n)
/// replaces the zero initialization when non-empty.
inline TrainTrace run_distributed(const ShardedData& shards, const FeatureMap& map,
                                  const Eigen::Ref<const Eigen::MatrixXd>& P, const RunConfig& config,
                                  const Eigen::MatrixXd& initial = {}) {
  if (shards.shards.empty()) throw ParameterError("run_distributed: no shards");
  const auto m = shards.shards.front().data.size();
  std::vector<detail::LocalProblem> problems;
  problems.reserve(shards.shards.size());
  for (const auto& s : shards.shards) {
    if (s.data.size() != m) throw ParameterError("run_distributed: shards must all hold m samples");
    problems.emplace_back(map, s.data);
  }
  return detail::run_rounds(problems, map, P, config, initial);
}

inline TrainTrace run_distributed(const ShardedData& shards, const FeatureMap& map, const MixingMatrix& P,
                                  const RunConfig& config) {
  return run_distributed(shards, map, P.P, config);
}

/// Full-batch gradient descent on every sample of `dataset` (one pseudo-agent).
inline TrainTrace run_centralized(const Dataset& dataset, const FeatureMap& map, const RunConfig& config) {
  if (dataset.size() < 1) throw ParameterError("run_centralized: empty dataset");
  std::vector<detail::LocalProblem> problems;
  problems.emplace_back(map, dataset);
  RunConfig single = config;
  single.threads = 1;
  return detail::run_rounds(problems, map, Eigen::MatrixXd::Ones(1, 1), single, {});
}

inline Eigen::VectorXd predict(const Eigen::Ref<const Eigen::VectorXd>& weights, const FeatureMap& map,
                               const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (weights.size() != map.M) throw ParameterError("predict: weight vector length does not match M");
  return feature_matrix(map, X) * weights;
}

}  // namespace dgdrf
