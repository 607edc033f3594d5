#pragma once

// Communication graphs, doubly stochastic mixing matrices and their spectral
// quantities. Dense n x n storage throughout.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dgdrf/errors.hpp"
#include "dgdrf/random.hpp"

namespace dgdrf {

enum class GraphKind { cycle, grid, complete, expander, custom };

inline std::string_view to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::cycle: return "cycle";
    case GraphKind::grid: return "grid";
    case GraphKind::complete: return "complete";
    case GraphKind::expander: return "expander";
    case GraphKind::custom: return "custom";
  }
  return "custom";
}

inline GraphKind graph_kind_from_string(std::string_view name) {
  if (name == "cycle") return GraphKind::cycle;
  if (name == "grid") return GraphKind::grid;
  if (name == "complete") return GraphKind::complete;
  if (name == "expander") return GraphKind::expander;
  if (name == "custom") return GraphKind::custom;
  throw ParameterError("unknown graph kind '" + std::string(name) + "'");
}

struct GraphParams {
  int degree = 6;          // expander only
  std::uint64_t seed = 0;  // expander only
  bool toroidal = false;   // grid only
  int max_attempts = 10000;
};

/// Undirected simple graph. Edges are stored once with first < second, sorted.
struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  GraphKind kind = GraphKind::custom;
  std::uint64_t seed = 0;  // sampling seed actually used (expander)

  [[nodiscard]] std::vector<int> degrees() const {
    std::vector<int> deg(static_cast<std::size_t>(n), 0);
    for (auto [v, w] : edges) {
      ++deg[static_cast<std::size_t>(v)];
      ++deg[static_cast<std::size_t>(w)];
    }
    return deg;
  }

  [[nodiscard]] std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (auto [v, w] : edges) {
      adj[static_cast<std::size_t>(v)].push_back(w);
      adj[static_cast<std::size_t>(w)].push_back(v);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
  }

  [[nodiscard]] bool is_regular() const {
    const auto deg = degrees();
    return deg.empty() || std::all_of(deg.begin(), deg.end(), [&](int d) { return d == deg.front(); });
  }

  [[nodiscard]] int max_degree() const {
    const auto deg = degrees();
    return deg.empty() ? 0 : *std::max_element(deg.begin(), deg.end());
  }

  [[nodiscard]] bool connected() const {
    if (n <= 1) return n == 1;
    const auto adj = adjacency();
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = 1;
    int count = 1;
    while (!frontier.empty()) {
      const int v = frontier.front();
      frontier.pop();
      for (int w : adj[static_cast<std::size_t>(v)])
        if (!seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          ++count;
          frontier.push(w);
        }
    }
    return count == n;
  }
};

namespace detail {

inline void normalize_edges(Graph& g) {
  for (auto& [v, w] : g.edges)
    if (v > w) std::swap(v, w);
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
}

inline int exact_sqrt(int n) {
  int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  return k * k == n ? k : -1;
}

// Pairing (configuration) model; returns nullopt when the matching produced
// a self-loop or a repeated edge.
// Sequential stub pairing: draw two free stubs, keep the pair unless it is a
// loop or a repeated edge. Returns nullopt when no admissible pair remains.
inline std::optional<std::vector<std::pair<int, int>>> pairing_attempt(int n, int d, const CounterRng& rng) {
  std::vector<int> stubs;
  stubs.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
  for (int v = 0; v < n; ++v)
    for (int k = 0; k < d; ++k) stubs.push_back(v);
  std::set<std::pair<int, int>> edges;
  std::uint64_t counter = 0;
  while (!stubs.empty()) {
    bool placed = false;
    for (int tries = 0; tries < 64 && !placed; ++tries) {
      const auto i = rng.below(stubs.size(), counter);
      const auto j = rng.below(stubs.size(), counter);
      const auto [v, w] = std::minmax(stubs[i], stubs[j]);
      if (i == j || v == w || edges.count({v, w})) continue;
      edges.emplace(v, w);
      const auto hi = std::max(i, j), lo = std::min(i, j);
      stubs[hi] = stubs.back();
      stubs.pop_back();
      stubs[lo] = stubs.back();
      stubs.pop_back();
      placed = true;
    }
    if (!placed) return std::nullopt;
  }
  return std::vector<std::pair<int, int>>(edges.begin(), edges.end());
}

}  // namespace detail

inline Graph custom_graph(int n, std::vector<std::pair<int, int>> edges) {
  if (n < 1) throw ParameterError("custom_graph: n must be >= 1");
  Graph g{n, std::move(edges), GraphKind::custom, 0};
  for (auto [v, w] : g.edges) {
    if (v == w) throw ParameterError("custom_graph: self-loop at node " + std::to_string(v));
    if (v < 0 || w < 0 || v >= n || w >= n) throw ParameterError("custom_graph: edge endpoint out of range");
  }
  detail::normalize_edges(g);
  if (!g.connected()) throw ParameterError("custom_graph: graph is not connected");
  return g;
}

enum class MixingScheme { lazy_uniform, metropolis };

inline std::string_view to_string(MixingScheme scheme) {
  return scheme == MixingScheme::lazy_uniform ? "lazy_uniform" : "metropolis";
}

inline MixingScheme mixing_scheme_from_string(std::string_view name) {
  if (name == "lazy_uniform") return MixingScheme::lazy_uniform;
  if (name == "metropolis") return MixingScheme::metropolis;
  throw ParameterError("unknown mixing scheme '" + std::string(name) + "'");
}

/// Symmetric doubly stochastic gossip matrix supported on `graph`.
struct MixingMatrix {
  Eigen::MatrixXd P;
  double sigma2 = 0.0;
  Graph graph;
  MixingScheme scheme = MixingScheme::lazy_uniform;

  [[nodiscard]] int n() const { return static_cast<int>(P.rows()); }
  [[nodiscard]] double inverse_spectral_gap() const {
    if (sigma2 >= 1.0) throw DivergenceError("inverse_spectral_gap: sigma2 >= 1");
    return 1.0 / (1.0 - sigma2);
  }
};

/// Second-largest eigenvalue of P in absolute value, computed as the spectral
/// norm of P - J/n (P symmetric doubly stochastic, so 1 is the top eigenvalue
/// with eigenvector 1/sqrt(n)).
inline double sigma2(const Eigen::Ref<const Eigen::MatrixXd>& P) {
  if (P.rows() != P.cols() || P.rows() < 1) throw ParameterError("sigma2: P must be square and non-empty");
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ParameterError("sigma2: P must be symmetric");
  const auto n = P.rows();
  if (n == 1) return 0.0;
  const Eigen::MatrixXd centered = P - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered, Eigen::EigenvaluesOnly);
  return std::min(1.0, solver.eigenvalues().cwiseAbs().maxCoeff());
}

inline MixingMatrix mixing_matrix(const Graph& graph, MixingScheme scheme) {
  if (!graph.connected()) throw ParameterError("mixing_matrix: graph is not connected");
  const auto n = static_cast<Eigen::Index>(graph.n);
  const auto deg = graph.degrees();
  MixingMatrix out;
  out.graph = graph;
  out.scheme = scheme;
  out.P = Eigen::MatrixXd::Zero(n, n);
  if (scheme == MixingScheme::lazy_uniform) {
    if (!graph.is_regular()) throw SchemeError("mixing_matrix: lazy_uniform requires a regular graph");
    const double w = 1.0 / (deg.empty() ? 1.0 : deg.front() + 1.0);
    for (auto [v, u] : graph.edges) out.P(v, u) = out.P(u, v) = w;
    for (Eigen::Index v = 0; v < n; ++v) out.P(v, v) = w;
  } else {
    for (auto [v, u] : graph.edges)
      out.P(v, u) = out.P(u, v) =
          1.0 / (1.0 + std::max(deg[static_cast<std::size_t>(v)], deg[static_cast<std::size_t>(u)]));
    for (Eigen::Index v = 0; v < n; ++v) out.P(v, v) = 1.0 - (out.P.row(v).sum() - out.P(v, v));
  }
  out.sigma2 = dgdrf::sigma2(out.P);
  return out;
}

/// cycle / grid (n = k^2, k >= 2) / complete / random d-regular expander.
inline Graph build_graph(GraphKind kind, int n, const GraphParams& params = {}) {
  if (n < 1) throw ParameterError("build_graph: n must be >= 1");
  Graph g;
  g.n = n;
  g.kind = kind;
  switch (kind) {
    case GraphKind::cycle:
      for (int v = 0; v + 1 < n; ++v) g.edges.emplace_back(v, v + 1);
      if (n > 2) g.edges.emplace_back(0, n - 1);
      break;
    case GraphKind::grid: {
      const int k = detail::exact_sqrt(n);
      if (k < 2) throw ParameterError("build_graph: grid requires n = k^2 with k >= 2, got n = " + std::to_string(n));
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) {
          const int v = r * k + c;
          if (c + 1 < k) g.edges.emplace_back(v, v + 1);
          else if (params.toroidal && k > 2) g.edges.emplace_back(r * k, v);
          if (r + 1 < k) g.edges.emplace_back(v, v + k);
          else if (params.toroidal && k > 2) g.edges.emplace_back(c, v);
        }
      break;
    }
    case GraphKind::complete:
      for (int v = 0; v < n; ++v)
        for (int w = v + 1; w < n; ++w) g.edges.emplace_back(v, w);
      break;
    case GraphKind::expander: {
      const int d = params.degree;
      if (d < 1 || d >= n || (static_cast<long>(d) * n) % 2 != 0)
        throw ParameterError("build_graph: no simple " + std::to_string(d) + "-regular graph on " +
                             std::to_string(n) + " nodes");
      const CounterRng base(params.seed, Stream::expander);
      for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
        auto edges = detail::pairing_attempt(n, d, base.split(static_cast<std::uint64_t>(attempt)));
        if (!edges) continue;
        Graph candidate{n, std::move(*edges), GraphKind::expander, params.seed};
        if (!candidate.connected()) continue;
        Graph copy = candidate;
        if (sigma2(mixing_matrix(copy, MixingScheme::lazy_uniform).P) >= 0.9) continue;
        return candidate;
      }
      throw ParameterError("build_graph: failed to sample a connected " + std::to_string(d) +
                           "-regular expander with sigma2 < 0.9");
    }
    case GraphKind::custom:
      throw ParameterError("build_graph: use custom_graph for explicit edge lists");
  }
  detail::normalize_edges(g);
  return g;
}

/// Uniform averaging P = J/n (complete graph with lazy uniform weights).
inline MixingMatrix uniform_mixing(int n) { return mixing_matrix(build_graph(GraphKind::complete, n), MixingScheme::lazy_uniform); }

/// sum_w |P^s(v, w) - 1/n|.
inline double deviation_l1(const Eigen::Ref<const Eigen::MatrixXd>& P, int s, int v) {
  if (s < 1) throw ParameterError("deviation_l1: s must be >= 1");
  if (v < 0 || v >= P.rows()) throw ParameterError("deviation_l1: node index out of range");
  Eigen::RowVectorXd row = P.row(v);
  for (int k = 1; k < s; ++k) row = row * P;
  return (row.array() - 1.0 / static_cast<double>(P.rows())).abs().sum();
}

struct MixingTime {
  int steps = 1;           // smallest s with max_v deviation_l1(P, s, v) <= tol
  long theory_estimate = 1;  // ceil(log(1/tol) / (1 - sigma2)), at least 1
};

inline MixingTime mixing_time(const Eigen::Ref<const Eigen::MatrixXd>& P, double tol, int max_steps = 1000000) {
  const double s2 = sigma2(P);
  if (s2 >= 1.0 - 1e-15) throw DivergenceError("mixing_time: sigma2 >= 1, the chain does not mix");
  if (!(tol > 0.0)) throw ParameterError("mixing_time: tol must be > 0");
  MixingTime out;
  out.theory_estimate = std::max(1L, static_cast<long>(std::ceil(std::log(1.0 / tol) / (1.0 - s2))));
  const auto n = P.rows();
  const double uniform = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd power = P;
  for (int s = 1; s <= max_steps; ++s) {
    if ((power.array() - uniform).abs().rowwise().sum().maxCoeff() <= tol) {
      out.steps = s;
      return out;
    }
    power = power * P;
  }
  throw DivergenceError("mixing_time: no convergence within " + std::to_string(max_steps) + " steps");
}

/// Edge list as CSV: header "source,target".
inline void write_edges_csv(std::ostream& os, const Graph& g) {
  os << "source,target\n";
  for (auto [v, w] : g.edges) os << v << ',' << w << '\n';
}

/// Dense matrix as CSV, full round-trip precision, no header.
inline void write_matrix_csv(std::ostream& os, const Eigen::Ref<const Eigen::MatrixXd>& P) {
  const auto old = os.precision(17);
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.cols(); ++j) os << (j ? "," : "") << P(i, j);
    os << '\n';
  }
  os.precision(old);
}

}  // namespace dgdrf
