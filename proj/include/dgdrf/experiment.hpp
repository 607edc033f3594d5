#pragma once

// Experiment harness behind the command line tool: configuration, problem
// construction, single runs with output directories, figure sweeps and the
// theory report.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dgdrf/analysis.hpp"
#include "dgdrf/data.hpp"
#include "dgdrf/engine.hpp"
#include "dgdrf/errors.hpp"
#include "dgdrf/features.hpp"
#include "dgdrf/io.hpp"
#include "dgdrf/theory.hpp"
#include "dgdrf/topology.hpp"

namespace dgdrf {

inline const double kExperimentXi = 1.0 / std::sqrt(10.0);

struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | csv
  long D = 8;
  long m = 25;  // samples per agent
  long test_size = 1000;
  double noise_sigma = 0.3;
  long target_features = 1000;
  long target_centers = 10;  // 0: i.i.d. normal weights over the target map
  double signal_rms = 0.3;
  // csv only
  std::string path;
  int label_column = 0;
  std::vector<int> feature_columns;
  std::string delimiter = ",";
  bool has_header = false;
  long limit = 0;
  bool standardize = true;
};

struct TopologySpec {
  std::string kind = "cycle";
  int n = 4;
  std::string scheme = "auto";  // auto | lazy_uniform | metropolis
  int degree = 6;
  bool toroidal = false;
};

struct FeatureSpec {
  std::string kind = "gaussian_rff";
  long M = 10;
  double xi = kExperimentXi;
  bool legacy_experiment_scaling = false;
};

struct RunSpec {
  RunConfig config;
  bool centralized_baseline = true;
};

struct EvaluationSpec {
  std::string metric = "excess_risk";
  bool network_error = true;
};

struct SeedSpec {
  std::uint64_t data = 1;
  std::uint64_t features = 2;
  std::uint64_t shard = 3;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  TopologySpec topology;
  FeatureSpec features;
  RunSpec run;
  EvaluationSpec evaluation;
  SeedSpec seeds;
  int repetitions = 1;
  std::string output = "run";
};

// ---------------------------------------------------------------------------
// JSON (comments allowed on input; unknown keys rejected)

namespace detail {

inline void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(section.empty() ? "config" : section, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(section.empty() ? key : section + "." + key, "unknown key");
  }
}

template <class T>
void read_key(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(section + "." + key, std::string("bad value: ") + e.what());
  }
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"kind", c.dataset.kind},
                  {"D", c.dataset.D},
                  {"m", c.dataset.m},
                  {"test_size", c.dataset.test_size},
                  {"noise_sigma", c.dataset.noise_sigma},
                  {"target_features", c.dataset.target_features},
                  {"target_centers", c.dataset.target_centers},
                  {"signal_rms", c.dataset.signal_rms},
                  {"path", c.dataset.path},
                  {"label_column", c.dataset.label_column},
                  {"feature_columns", c.dataset.feature_columns},
                  {"delimiter", c.dataset.delimiter},
                  {"has_header", c.dataset.has_header},
                  {"limit", c.dataset.limit},
                  {"standardize", c.dataset.standardize}};
  j["topology"] = {{"kind", c.topology.kind},
                   {"n", c.topology.n},
                   {"scheme", c.topology.scheme},
                   {"degree", c.topology.degree},
                   {"toroidal", c.topology.toroidal}};
  j["features"] = {{"kind", c.features.kind},
                   {"M", c.features.M},
                   {"xi", c.features.xi},
                   {"legacy_experiment_scaling", c.features.legacy_experiment_scaling}};
  json run = to_json(c.run.config);
  run["centralized_baseline"] = c.run.centralized_baseline;
  j["run"] = run;
  j["evaluation"] = {{"metric", c.evaluation.metric}, {"network_error", c.evaluation.network_error}};
  j["seeds"] = {{"data", c.seeds.data}, {"features", c.seeds.features}, {"shard", c.seeds.shard}};
  j["repetitions"] = c.repetitions;
  j["output"] = c.output;
  return j;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  using detail::read_key;
  ExperimentConfig c;
  detail::check_keys(j, "", {"dataset", "topology", "features", "run", "evaluation", "seeds", "repetitions", "output"});
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::check_keys(d, "dataset",
                       {"kind", "D", "m", "test_size", "noise_sigma", "target_features", "target_centers",
                        "signal_rms", "path", "label_column",
                        "feature_columns", "delimiter", "has_header", "limit", "standardize"});
    read_key(d, "dataset", "kind", c.dataset.kind);
    read_key(d, "dataset", "D", c.dataset.D);
    read_key(d, "dataset", "m", c.dataset.m);
    read_key(d, "dataset", "test_size", c.dataset.test_size);
    read_key(d, "dataset", "noise_sigma", c.dataset.noise_sigma);
    read_key(d, "dataset", "target_features", c.dataset.target_features);
    read_key(d, "dataset", "target_centers", c.dataset.target_centers);
    read_key(d, "dataset", "signal_rms", c.dataset.signal_rms);
    read_key(d, "dataset", "path", c.dataset.path);
    read_key(d, "dataset", "label_column", c.dataset.label_column);
    read_key(d, "dataset", "feature_columns", c.dataset.feature_columns);
    read_key(d, "dataset", "delimiter", c.dataset.delimiter);
    read_key(d, "dataset", "has_header", c.dataset.has_header);
    read_key(d, "dataset", "limit", c.dataset.limit);
    read_key(d, "dataset", "standardize", c.dataset.standardize);
  }
  if (j.contains("topology")) {
    const auto& t = j.at("topology");
    detail::check_keys(t, "topology", {"kind", "n", "scheme", "degree", "toroidal"});
    read_key(t, "topology", "kind", c.topology.kind);
    read_key(t, "topology", "n", c.topology.n);
    read_key(t, "topology", "scheme", c.topology.scheme);
    read_key(t, "topology", "degree", c.topology.degree);
    read_key(t, "topology", "toroidal", c.topology.toroidal);
  }
  if (j.contains("features")) {
    const auto& f = j.at("features");
    detail::check_keys(f, "features", {"kind", "M", "xi", "legacy_experiment_scaling"});
    read_key(f, "features", "kind", c.features.kind);
    read_key(f, "features", "M", c.features.M);
    read_key(f, "features", "xi", c.features.xi);
    read_key(f, "features", "legacy_experiment_scaling", c.features.legacy_experiment_scaling);
  }
  if (j.contains("run")) {
    const auto& r = j.at("run");
    detail::check_keys(r, "run", {"eta", "T", "checkpoint_every", "allow_large_step", "threads", "centralized_baseline"});
    if (r.contains("eta") && !r.at("eta").is_null()) {
      double eta = 0.0;
      read_key(r, "run", "eta", eta);
      c.run.config.eta = eta;
    }
    read_key(r, "run", "T", c.run.config.T);
    read_key(r, "run", "checkpoint_every", c.run.config.checkpoint_every);
    read_key(r, "run", "allow_large_step", c.run.config.allow_large_step);
    read_key(r, "run", "threads", c.run.config.threads);
    read_key(r, "run", "centralized_baseline", c.run.centralized_baseline);
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    detail::check_keys(e, "evaluation", {"metric", "network_error"});
    read_key(e, "evaluation", "metric", c.evaluation.metric);
    read_key(e, "evaluation", "network_error", c.evaluation.network_error);
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    detail::check_keys(s, "seeds", {"data", "features", "shard"});
    read_key(s, "seeds", "data", c.seeds.data);
    read_key(s, "seeds", "features", c.seeds.features);
    read_key(s, "seeds", "shard", c.seeds.shard);
  }
  read_key(j, "config", "repetitions", c.repetitions);
  read_key(j, "config", "output", c.output);
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("parse error: ") + e.what());
  }
  return experiment_config_from_json(j);
}

inline std::string canonical_config(const ExperimentConfig& c) { return to_json(c).dump(2); }

inline std::string config_hash(const ExperimentConfig& c) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json(c).dump());
  return os.str();
}

// ---------------------------------------------------------------------------
// Validation and construction

inline MixingScheme resolve_scheme(const TopologySpec& spec, const Graph& g) {
  if (spec.scheme == "auto") return g.is_regular() ? MixingScheme::lazy_uniform : MixingScheme::metropolis;
  return mixing_scheme_from_string(spec.scheme);
}

inline Graph build_topology_graph(const TopologySpec& spec, std::uint64_t seed) {
  GraphParams params;
  params.degree = spec.degree;
  params.toroidal = spec.toroidal;
  params.seed = seed;
  return build_graph(graph_kind_from_string(spec.kind), spec.n, params);
}

inline void validate(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  if (d.kind != "synthetic" && d.kind != "csv") throw ConfigError("dataset.kind", "must be 'synthetic' or 'csv'");
  if (d.m < 1) throw ConfigError("dataset.m", "must be >= 1");
  if (d.test_size < 1) throw ConfigError("dataset.test_size", "must be >= 1");
  if (d.kind == "synthetic") {
    if (d.D < 1) throw ConfigError("dataset.D", "must be >= 1");
    if (!(d.noise_sigma >= 0.0)) throw ConfigError("dataset.noise_sigma", "must be >= 0");
    if (d.target_features < 1) throw ConfigError("dataset.target_features", "must be >= 1");
    if (d.target_centers < 0) throw ConfigError("dataset.target_centers", "must be >= 0");
    if (d.target_centers > 0 && !(d.signal_rms > 0.0)) throw ConfigError("dataset.signal_rms", "must be > 0");
  } else {
    if (d.path.empty()) throw ConfigError("dataset.path", "required for csv datasets");
    if (d.delimiter.size() != 1) throw ConfigError("dataset.delimiter", "must be a single character");
    if (d.limit < 0) throw ConfigError("dataset.limit", "must be >= 0");
    if (d.limit > 0 && d.limit < static_cast<long>(c.topology.n) * d.m + d.test_size)
      throw ConfigError("dataset.limit", "smaller than n*m + test_size");
  }

  const auto& t = c.topology;
  GraphKind kind{};
  try {
    kind = graph_kind_from_string(t.kind);
  } catch (const ParameterError& e) {
    throw ConfigError("topology.kind", e.what());
  }
  if (kind == GraphKind::custom) throw ConfigError("topology.kind", "custom graphs are not configurable");
  if (t.n < 1) throw ConfigError("topology.n", "must be >= 1");
  if (kind == GraphKind::grid) {
    const int k = detail::exact_sqrt(t.n);
    if (k < 2) throw ConfigError("topology.n", "grid requires a perfect square n = k^2 with k >= 2");
  }
  if (kind == GraphKind::expander && (t.degree < 1 || t.degree >= t.n || (static_cast<long>(t.degree) * t.n) % 2))
    throw ConfigError("topology.degree", "no simple d-regular graph with this degree and n");
  if (t.scheme != "auto") {
    try {
      mixing_scheme_from_string(t.scheme);
    } catch (const ParameterError& e) {
      throw ConfigError("topology.scheme", e.what());
    }
    if (mixing_scheme_from_string(t.scheme) == MixingScheme::lazy_uniform && kind == GraphKind::grid && !t.toroidal)
      throw ConfigError("topology.scheme", "lazy_uniform needs a regular graph; the open grid is not regular");
  }

  const auto& f = c.features;
  FeatureKind fkind{};
  try {
    fkind = feature_kind_from_string(f.kind);
  } catch (const ParameterError& e) {
    throw ConfigError("features.kind", e.what());
  }
  if (f.M < 1) throw ConfigError("features.M", "must be >= 1");
  if (!(f.xi > 0.0)) throw ConfigError("features.xi", "must be > 0");

  const auto& r = c.run.config;
  if (r.T < 0) throw ConfigError("run.T", "must be >= 0");
  if (r.threads < 1) throw ConfigError("run.threads", "must be >= 1");
  if (r.eta && !(*r.eta > 0.0)) throw ConfigError("run.eta", "must be > 0");
  if (fkind == FeatureKind::gaussian_rff && r.eta && !r.allow_large_step) {
    const double kappa2 = f.legacy_experiment_scaling ? 1.0 : 2.0;
    if (*r.eta * kappa2 > 1.0 + 1e-12)
      throw ConfigError("run.eta", "eta * kappa^2 > 1 (kappa^2 = " + std::to_string(kappa2) +
                                       "); set run.allow_large_step to override");
  }

  Metric metric{};
  try {
    metric = metric_from_string(c.evaluation.metric);
  } catch (const ParameterError& e) {
    throw ConfigError("evaluation.metric", e.what());
  }
  if (metric == Metric::excess_risk && d.kind != "synthetic")
    throw ConfigError("evaluation.metric", "excess_risk needs planted ground truth (synthetic data)");
  if (c.repetitions < 1) throw ConfigError("repetitions", "must be >= 1");
}

/// Seeds for repetition `rep`: each base seed offset by rep.
inline SeedSpec seeds_for(const ExperimentConfig& c, int rep) {
  const auto r = static_cast<std::uint64_t>(rep);
  return {c.seeds.data + r, c.seeds.features + r, c.seeds.shard + r};
}

struct SyntheticSpec {
  long D = 8;
  double noise_sigma = 0.3;
  long target_features = 1000;
  double xi = kExperimentXi;
  FeatureKind kind = FeatureKind::gaussian_rff;
  long target_centers = 10;
  double signal_rms = 0.3;
};

struct TrainTest {
  Dataset train;
  Dataset test;
  std::map<std::string, std::string> notes;
};

/// Planted-truth train/test pair sharing one target function, expressed in a
/// random-feature map of its own (seed derived from data_seed). With
/// target_centers > 0 the target is a kernel expansion over that many centers
/// scaled to signal_rms; otherwise the weights are i.i.d. standard normal.
inline TrainTest make_synthetic(const SyntheticSpec& spec, long n_train, long n_test, std::uint64_t data_seed) {
  const std::uint64_t target_seed = detail::splitmix64(data_seed ^ 0x7461726765740000ULL);
  const FeatureMap target = sample_feature_map(spec.kind, spec.D, spec.target_features, spec.xi, target_seed);
  const Eigen::VectorXd weights =
      spec.target_centers > 0 ? kernel_expansion_weights(target, spec.target_centers, spec.signal_rms, target_seed)
                              : sample_target_weights(spec.target_features, target_seed);
  TrainTest out;
  out.train = gen_synthetic(n_train, spec.D, target, weights, spec.noise_sigma, data_seed);
  out.test = gen_synthetic(n_test, spec.D, target, weights, spec.noise_sigma, data_seed, Stream::test_covariates,
                           Stream::test_noise);
  out.notes["target_seed"] = std::to_string(target_seed);
  return out;
}

/// CSV split: a random permutation (shard seed) puts the first test_size rows
/// in the test set and the next n_train rows in training. Features are
/// standardized with training statistics when requested.
inline TrainTest make_csv_split(const DatasetSpec& spec, long n_train, bool classification, std::uint64_t seed) {
  CsvOptions opts;
  opts.label_column = spec.label_column;
  opts.feature_columns = spec.feature_columns;
  opts.limit = static_cast<std::size_t>(spec.limit);
  opts.delimiter = spec.delimiter.empty() ? ',' : spec.delimiter.front();
  opts.has_header = spec.has_header;
  opts.require_binary_labels = classification;
  const Dataset all = load_csv(spec.path, opts);
  if (all.size() < n_train + spec.test_size)
    throw ConfigError("dataset.path", "file has " + std::to_string(all.size()) + " rows, need n*m + test_size = " +
                                          std::to_string(n_train + spec.test_size));
  const auto perm = random_permutation(all.size(), seed);
  const std::vector<Eigen::Index> test_idx(perm.begin(), perm.begin() + spec.test_size);
  const std::vector<Eigen::Index> train_idx(perm.begin() + spec.test_size, perm.begin() + spec.test_size + n_train);
  TrainTest out{all.subset(train_idx), all.subset(test_idx), {}};
  if (spec.standardize) {
    const auto s = Standardizer::fit(out.train.X);
    out.train.X = s.transform(out.train.X);
    out.test.X = s.transform(out.test.X);
    out.notes["preprocessing"] = "per-feature standardization fitted on the training split";
  } else {
    out.notes["preprocessing"] = "none";
  }
  return out;
}

struct Problem {
  TrainTest data;
  ShardedData shards;
  MixingMatrix mixing;
  FeatureMap map;
  Metric metric = Metric::excess_risk;
  SeedSpec seeds;
};

inline Problem build_problem(const ExperimentConfig& c, int rep) {
  validate(c);
  Problem p;
  p.seeds = seeds_for(c, rep);
  p.metric = metric_from_string(c.evaluation.metric);
  const long n_train = static_cast<long>(c.topology.n) * c.dataset.m;
  const FeatureKind fkind = feature_kind_from_string(c.features.kind);
  if (c.dataset.kind == "synthetic") {
    p.data = make_synthetic({c.dataset.D, c.dataset.noise_sigma, c.dataset.target_features, c.features.xi, fkind,
                             c.dataset.target_centers, c.dataset.signal_rms},
                            n_train, c.dataset.test_size, p.seeds.data);
  } else {
    p.data = make_csv_split(c.dataset, n_train, p.metric == Metric::classification_error, p.seeds.shard);
  }
  p.shards = shard(p.data.train, c.topology.n, c.dataset.m, p.seeds.shard, c.dataset.kind);
  const Graph g = build_topology_graph(c.topology, p.seeds.shard);
  p.mixing = mixing_matrix(g, resolve_scheme(c.topology, g));
  p.map = sample_feature_map(fkind, p.data.train.dim(), c.features.M, c.features.xi, p.seeds.features,
                             c.features.legacy_experiment_scaling);
  return p;
}

// ---------------------------------------------------------------------------
// Single runs

struct RunOutcome {
  Problem problem;
  TrainTrace trace;
  std::optional<TrainTrace> central;
  MetricTable table;
  std::optional<MetricTable> central_table;
  std::optional<Eigen::MatrixXd> network;
  StoppingResult best;
  std::optional<StoppingResult> central_best;
};

inline RunOutcome run_experiment(const ExperimentConfig& c, int rep) {
  RunOutcome out{build_problem(c, rep), {}, {}, {}, {}, {}, {}, {}};
  const auto& p = out.problem;
  out.trace = run_distributed(p.shards, p.map, p.mixing.P, c.run.config);
  out.table = evaluate(out.trace, p.data.test, p.metric);
  out.best = optimal_stopping(out.table);
  if (c.run.centralized_baseline) {
    out.central = run_centralized(p.shards.pooled(), p.map, c.run.config);
    out.central_table = evaluate(*out.central, p.data.test, p.metric);
    out.central_best = optimal_stopping(*out.central_table);
    if (c.evaluation.network_error)
      out.network = network_error(out.trace, *out.central, empirical_covariance(p.map, p.data.test.X));
  }
  return out;
}

/// Prescriptions, leading terms and speed-up for the configured network.
inline json theory_summary(int n, long m, long M, const MixingMatrix& mixing, long t, const TheoryParams& params = {}) {
  json j;
  j["n"] = n;
  j["m"] = m;
  j["sigma2"] = mixing.sigma2;
  if (mixing.sigma2 >= 1.0) {
    j["error"] = "sigma2 >= 1";
    return j;
  }
  j["inverse_spectral_gap"] = 1.0 / (1.0 - mixing.sigma2);
  j["basic"] = to_json(prescribe_basic(n, m, mixing.sigma2));
  try {
    j["refined"] = to_json(prescribe_refined(n, m, mixing.sigma2, params));
  } catch (const OutOfRegimeError& e) {
    j["refined"] = {{"error", e.what()}};
  }
  const double t_gap = 1.0 / (1.0 - mixing.sigma2);
  j["leading_terms"] = to_json(leading_terms(n, static_cast<double>(m), static_cast<double>(M), mixing.sigma2,
                                             static_cast<double>(std::max(1L, t)), t_gap, params));
  j["leading_terms_at"] = {{"t", std::max(1L, t)}, {"t_star", t_gap}, {"eta", params.eta}};
  j["speedup_estimate"] = speedup_estimate(n, static_cast<double>(m), static_cast<double>(M), 0.0,
                                           static_cast<double>(mixing.graph.max_degree()));
  return j;
}

namespace detail {

// Write to a temporary sibling and rename, so readers never see partial files.
inline void write_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body,
                         bool binary = false) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, binary ? std::ios::binary : std::ios::out);
    if (!os) throw IoError("cannot write '" + tmp.string() + "'");
    body(os);
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

inline void write_network_csv(std::ostream& os, const std::vector<long>& checkpoints, const Eigen::MatrixXd& values) {
  os.precision(17);
  os << "t,agent,metric,value\n";
  for (std::size_t c = 0; c < checkpoints.size(); ++c)
    for (Eigen::Index v = 0; v < values.cols(); ++v)
      os << checkpoints[c] << ',' << v << ",network_error," << values(static_cast<Eigen::Index>(c), v) << '\n';
}

}  // namespace detail

/// Trains, evaluates and writes one run directory. Returns the directory.
///
/// Layout (one repetition: files at the top level; several: rep_<r>/ each):
///   manifest.json        canonical config, config hash, seeds, file list
///   metrics.csv          t,agent,metric,value for the distributed run
///   central_metrics.csv  same schema, single-machine baseline (agent 0)
///   network_error.csv    same schema, metric = network_error
///   trace.bin, central_trace.bin, feature_map.json, edges.csv, mixing.csv
///   summary.json, prescription.json
inline std::filesystem::path cmd_run(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
  validate(c);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  const std::string hash = config_hash(c);
  json manifest;
  manifest["config"] = to_json(c);
  manifest["config_hash"] = hash;
  manifest["format_version"] = 1;
  manifest["repetitions"] = json::array();

  for (int rep = 0; rep < c.repetitions; ++rep) {
    const auto dir = c.repetitions == 1 ? out_dir : out_dir / ("rep_" + std::to_string(rep));
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    const RunOutcome run = run_experiment(c, rep);
    const auto& p = run.problem;

    std::vector<std::string> files;
    auto emit = [&](const std::string& name, const std::function<void(std::ostream&)>& body, bool binary = false) {
      detail::write_atomic(dir / name, body, binary);
      files.push_back(std::filesystem::relative(dir / name, out_dir).generic_string());
    };
    emit("metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, run.table); });
    emit("trace.bin", [&](std::ostream& os) { write_trace(os, run.trace); }, true);
    emit("feature_map.json", [&](std::ostream& os) { os << to_json(p.map).dump() << '\n'; });
    emit("edges.csv", [&](std::ostream& os) { write_edges_csv(os, p.mixing.graph); });
    emit("mixing.csv", [&](std::ostream& os) { write_matrix_csv(os, p.mixing.P); });
    if (run.central) {
      emit("central_metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, *run.central_table); });
      emit("central_trace.bin", [&](std::ostream& os) { write_trace(os, *run.central); }, true);
    }
    if (run.network)
      emit("network_error.csv", [&](std::ostream& os) { detail::write_network_csv(os, run.trace.checkpoints, *run.network); });

    json summary;
    summary["config_hash"] = hash;
    summary["metric"] = c.evaluation.metric;
    summary["t_star"] = run.best.t_star;
    summary["best_value"] = run.best.value;
    summary["sigma2"] = p.mixing.sigma2;
    summary["eta"] = run.trace.eta;
    if (run.central_best) {
      summary["central_t_star"] = run.central_best->t_star;
      summary["central_best_value"] = run.central_best->value;
    }
    if (run.network) summary["mean_network_error"] = run.network->mean();
    emit("summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });

    TheoryParams params;
    params.eta = run.trace.eta;
    const json theory = theory_summary(c.topology.n, c.dataset.m, c.features.M, p.mixing, run.best.t_star, params);
    emit("prescription.json", [&](std::ostream& os) { os << theory.dump(2) << '\n'; });

    json rep_entry = {{"rep", rep},
                      {"seeds", {{"data", p.seeds.data}, {"features", p.seeds.features}, {"shard", p.seeds.shard}}},
                      {"files", files},
                      {"t_star", run.best.t_star},
                      {"best_value", run.best.value}};
    for (const auto& [k, v] : p.data.notes) rep_entry["notes"][k] = v;
    manifest["repetitions"].push_back(rep_entry);
  }
  if (c.dataset.kind == "csv") manifest["label"] = "best-effort: dataset preprocessing is not prescribed";
  detail::write_atomic(out_dir / "manifest.json", [&](std::ostream& os) { os << manifest.dump(2) << '\n'; });
  return out_dir;
}

/// Re-evaluates a run directory's stored traces without retraining.
inline std::vector<EvalReport> cmd_eval(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw IoError("no manifest.json in '" + run_dir.string() + "'");
  const json manifest = json::parse(in);
  const ExperimentConfig c = experiment_config_from_json(manifest.at("config"));
  std::vector<EvalReport> reports;
  for (int rep = 0; rep < c.repetitions; ++rep) {
    const auto dir = c.repetitions == 1 ? run_dir : run_dir / ("rep_" + std::to_string(rep));
    const Problem p = build_problem(c, rep);
    const TrainTrace trace = load_trace((dir / "trace.bin").string());
    std::map<std::string, std::string> meta{{"config_hash", manifest.at("config_hash").get<std::string>()},
                                            {"rep", std::to_string(rep)},
                                            {"topology", c.topology.kind},
                                            {"n", std::to_string(c.topology.n)},
                                            {"m", std::to_string(c.dataset.m)},
                                            {"M", std::to_string(c.features.M)}};
    reports.push_back(make_report(evaluate(trace, p.data.test, p.metric), std::move(meta)));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Figure sweeps

/// One experiment cell: a topology ("single" = pooled single machine) at
/// fixed (n, m, M, seed). The train pool holds n*m samples for the seed.
struct CellSpec {
  std::string topology = "cycle";
  int n = 1;
  long m = 1;
  long M = 10;
  std::uint64_t seed = 0;
};

struct CellResult {
  CellSpec spec;
  StoppingResult best;
};

struct FigureOptions {
  std::string scale = "desk";  // desk | paper
  int seeds = 5;
  std::uint64_t base_seed = 1;
  long T = 0;  // 0: figure default
  long checkpoint_every = 0;
  int threads = 1;
  bool legacy_experiment_scaling = false;
  std::optional<double> eta;
  SyntheticSpec synthetic;
  long test_size = 1000;
  std::vector<int> ns;
  std::vector<long> Ms;
  std::vector<long> nms;
  std::vector<std::string> topologies{"cycle", "grid"};
  std::string csv_path;  // paper scale
  DatasetSpec csv;
};

struct FigureTable {
  std::string figure;
  std::string metric;
  long T = 0;
  std::vector<CellResult> rows;
};

namespace detail {

inline MixingMatrix cell_mixing(const std::string& topology, int n) {
  const Graph g = build_graph(graph_kind_from_string(topology), n);
  return mixing_matrix(g, g.is_regular() ? MixingScheme::lazy_uniform : MixingScheme::metropolis);
}

template <class F>
void parallel_for(std::size_t count, int threads, F&& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
}

}  // namespace detail

/// Runs one cell on data `train_pool` (first n*m rows used, sharded with the
/// cell seed) and reports min over t of max over agents of the metric.
inline CellResult run_cell(const CellSpec& spec, const Dataset& train_pool, const Dataset& test, const FeatureMap& map,
                           const RunConfig& config, Metric metric) {
  const long n_total = static_cast<long>(spec.n) * spec.m;
  std::vector<Eigen::Index> first(static_cast<std::size_t>(n_total));
  std::iota(first.begin(), first.end(), Eigen::Index{0});
  const Dataset used = train_pool.subset(first);
  TrainTrace trace;
  if (spec.topology == "single") {
    trace = run_centralized(used, map, config);
  } else {
    const ShardedData shards = shard(used, spec.n, spec.m, spec.seed);
    trace = run_distributed(shards, map, detail::cell_mixing(spec.topology, spec.n).P, config);
  }
  return {spec, optimal_stopping(trace, test, metric)};
}

/// Desk scale: synthetic planted-truth data, excess risk. Paper scale: CSV
/// data (SUSY layout), classification error; best effort.
///   fig1: metric vs M at fixed nm, cycle and grid, several n
///   fig2: metric vs nm at fixed M
///   fig3: optimal stopping time vs nm at fixed M
inline FigureTable cmd_figure(const std::string& which, FigureOptions opt) {
  if (which != "fig1" && which != "fig2" && which != "fig3")
    throw ConfigError("figure", "must be one of fig1, fig2, fig3");
  const bool paper = opt.scale == "paper";
  if (!paper && opt.scale != "desk") throw ConfigError("scale", "must be 'desk' or 'paper'");
  if (paper && opt.csv_path.empty()) throw ConfigError("dataset.path", "paper scale requires a CSV dataset path");

  if (opt.ns.empty()) opt.ns = paper ? std::vector<int>{25, 49, 100} : std::vector<int>{9, 25};
  if (which == "fig1") {
    if (opt.nms.empty()) opt.nms = {1000};
    if (opt.Ms.empty())
      opt.Ms = paper ? std::vector<long>{10, 30, 100, 300, 1000} : std::vector<long>{4, 8, 16, 32, 64, 128, 256};
    if (opt.T == 0) opt.T = opt.nms.front();
  } else {
    if (opt.Ms.empty()) opt.Ms = {paper ? 300L : 64L};
    if (opt.nms.empty())
      opt.nms = paper ? std::vector<long>{1000, 3000, 10000, 30000} : std::vector<long>{128, 256, 512, 1024, 2048, 4096, 8192};
    if (opt.T == 0) opt.T = paper ? 10000 : 2048;
  }
  if (paper) opt.test_size = std::max(opt.test_size, 10000L);
  const Metric metric = paper ? Metric::classification_error : Metric::excess_risk;

  RunConfig config;
  config.T = opt.T;
  config.checkpoint_every = opt.checkpoint_every > 0 ? opt.checkpoint_every : std::max(1L, opt.T / 128);
  config.eta = opt.eta;
  config.allow_large_step = opt.eta.has_value();

  struct Job {
    CellSpec spec;
    long nm = 0;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = opt.base_seed + static_cast<std::uint64_t>(s);
    for (long nm : opt.nms) {
      for (long M : opt.Ms) {
        jobs.push_back({{"single", 1, nm, M, seed}, nm});
        for (const auto& topo : opt.topologies)
          for (int n : opt.ns) {
            if (topo == "grid" && detail::exact_sqrt(n) < 2) continue;
            const long m = nm / n;
            if (m < 1) continue;
            jobs.push_back({{topo, n, m, M, seed}, nm});
          }
      }
    }
  }

  FigureTable table;
  table.figure = which;
  table.metric = std::string(to_string(metric));
  table.T = opt.T;
  table.rows.resize(jobs.size());
  detail::parallel_for(jobs.size(), opt.threads, [&](std::size_t i) {
    const auto& job = jobs[i];
    const std::uint64_t seed = job.spec.seed;
    TrainTest data;
    if (paper) {
      DatasetSpec csv = opt.csv;
      csv.path = opt.csv_path;
      csv.test_size = opt.test_size;
      data = make_csv_split(csv, job.nm, true, seed);
    } else {
      data = make_synthetic(opt.synthetic, job.nm, opt.test_size, seed);
    }
    const FeatureMap map = sample_feature_map(FeatureKind::gaussian_rff, data.train.dim(), job.spec.M,
                                              opt.synthetic.xi, seed + 1000003ULL, opt.legacy_experiment_scaling);
    table.rows[i] = run_cell(job.spec, data.train, data.test, map, config, metric);
  });
  return table;
}

/// Tidy CSV: figure,topology,n,m,nm,M,seed,metric,value,t_star
inline void write_figure_csv(std::ostream& os, const FigureTable& table) {
  os.precision(17);
  os << "figure,topology,n,m,nm,M,seed,metric,value,t_star\n";
  for (const auto& r : table.rows)
    os << table.figure << ',' << r.spec.topology << ',' << r.spec.n << ',' << r.spec.m << ','
       << static_cast<long>(r.spec.n) * r.spec.m << ',' << r.spec.M << ',' << r.spec.seed << ',' << table.metric << ','
       << r.best.value << ',' << r.best.t_star << '\n';
}

/// gnuplot stub reading the figure CSV; aggregation across seeds is left to the user.
inline void write_plot_stub(std::ostream& os, const FigureTable& table, const std::string& csv_name) {
  const std::string x = table.figure == "fig1" ? "6" : "5";
  const std::string y = table.figure == "fig3" ? "10" : "9";
  os << "# " << table.figure << ": columns figure,topology,n,m,nm,M,seed,metric,value,t_star\n"
     << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "set logscale x\n"
     << (table.figure == "fig3" ? "set logscale y\n" : "")
     << "set xlabel '" << (table.figure == "fig1" ? "M" : "nm") << "'\n"
     << "set ylabel '" << (table.figure == "fig3" ? "optimal stopping time" : table.metric) << "'\n"
     << "plot '" << csv_name << "' every ::1 using " << x << ':' << y << " with points title '" << table.figure
     << "'\n";
}

// ---------------------------------------------------------------------------
// Theory report

struct TheoryArgs {
  int n = 4;
  long m = 100;
  std::optional<double> sigma2;  // unset: from the topology below
  std::string topology = "cycle";
  TheoryParams params;
  std::optional<long> t;  // unset: prescribed iterations
  std::optional<long> M;  // unset: prescribed features
  long s_max = 50;
  long contraction_t_max = 100;
  int contraction_matrices = 20;
  std::uint64_t seed = 1;
};

struct TheoryReport {
  json document;
  bool out_of_regime = false;
  bool lemma_violation = false;
};

/// Topologies the lemma suite runs on: cycles n in {4,8,16}, grids n in
/// {9,16}, complete n in {4,8}, one 6-regular expander on 16 nodes.
inline std::vector<std::pair<std::string, MixingMatrix>> lemma_topologies(std::uint64_t seed) {
  std::vector<std::pair<std::string, MixingMatrix>> out;
  auto add = [&](GraphKind kind, int n, const GraphParams& params = {}) {
    const Graph g = build_graph(kind, n, params);
    const auto scheme = g.is_regular() ? MixingScheme::lazy_uniform : MixingScheme::metropolis;
    out.emplace_back(std::string(to_string(kind)) + "_" + std::to_string(n), mixing_matrix(g, scheme));
  };
  for (int n : {4, 8, 16}) add(GraphKind::cycle, n);
  for (int n : {9, 16}) add(GraphKind::grid, n);
  for (int n : {4, 8}) add(GraphKind::complete, n);
  GraphParams expander;
  expander.degree = 6;
  expander.seed = seed;
  add(GraphKind::expander, 16, expander);
  return out;
}

inline TheoryReport cmd_theory(const TheoryArgs& args) {
  TheoryReport report;
  auto& doc = report.document;
  args.params.validate();
  double s2 = 0.0;
  if (args.sigma2) {
    s2 = *args.sigma2;
  } else {
    s2 = detail::cell_mixing(args.topology, args.n).sigma2;
    doc["topology"] = args.topology;
  }
  doc["n"] = args.n;
  doc["m"] = args.m;
  doc["sigma2"] = s2;

  const Prescription basic = prescribe_basic(args.n, args.m, s2);
  doc["basic"] = to_json(basic);
  try {
    doc["refined"] = to_json(prescribe_refined(args.n, args.m, s2, args.params));
  } catch (const OutOfRegimeError& e) {
    report.out_of_regime = true;
    doc["refined"] = {{"error", e.what()}, {"out_of_regime", true}};
  }
  if (!report.out_of_regime) {
    const double t = static_cast<double>(args.t.value_or(static_cast<long>(basic.t_star_iters)));
    const double M = static_cast<double>(args.M.value_or(static_cast<long>(basic.M_star)));
    doc["leading_terms"] = to_json(leading_terms(args.n, static_cast<double>(args.m), M, s2, t, 1.0 / (1.0 - s2), args.params));
  }

  json lemmas = json::array();
  for (const auto& [name, mixing] : lemma_topologies(args.seed)) {
    const LemmaReport r = verify_spectral_bound(mixing.P, args.s_max);
    report.lemma_violation |= !r.holds();
    json entry = to_json(r);
    entry["lemma"] = "spectral_bound";
    entry["topology"] = name;
    entry["sigma2"] = mixing.sigma2;
    lemmas.push_back(entry);
  }
  for (int k = 0; k < args.contraction_matrices; ++k) {
    const Eigen::MatrixXd L = random_unit_psd(20, args.seed * 1000 + static_cast<std::uint64_t>(k));
    for (double a : {0.5, 1.0}) {
      const LemmaReport r = verify_contraction(L, 1.0, args.contraction_t_max, a);
      report.lemma_violation |= !r.holds();
      json entry = to_json(r);
      entry["lemma"] = "contraction";
      entry["matrix"] = k;
      entry["a"] = a;
      lemmas.push_back(entry);
    }
  }
  doc["lemmas"] = lemmas;
  doc["lemma_violation"] = report.lemma_violation;
  return report;
}

}  // namespace dgdrf
