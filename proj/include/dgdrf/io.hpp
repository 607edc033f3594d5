#pragma once

// Serialization: JSON for feature maps, graphs, mixing matrices, run configs
// and theory reports; a self-describing binary format for training traces.
//
// Trace file layout (little-endian):
//   8 bytes  magic "DGDRFTRC"
//   u32      format version (1)
//   u64      header length L
//   L bytes  JSON header: config, eta, feature map, mixing matrix, checkpoints
//   f64[...] for each checkpoint, the M x n weight matrix in column-major order

#include <json.hpp>

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dgdrf/engine.hpp"
#include "dgdrf/errors.hpp"
#include "dgdrf/features.hpp"
#include "dgdrf/theory.hpp"
#include "dgdrf/topology.hpp"

namespace dgdrf {

using json = nlohmann::json;

inline json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& A) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(A(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
  Eigen::MatrixXd A(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ParameterError("matrix_from_json: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) A(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return A;
}

inline json to_json(const FeatureMap& map) {
  json j;
  j["kind"] = std::string(to_string(map.kind));
  j["M"] = map.M;
  j["D"] = map.D;
  j["xi"] = map.xi;
  j["seed"] = map.seed;
  j["legacy_experiment_scaling"] = map.legacy_experiment_scaling;
  j["W"] = matrix_to_json(map.W);
  j["b"] = std::vector<double>(map.b.data(), map.b.data() + map.b.size());
  return j;
}

inline FeatureMap feature_map_from_json(const json& j) {
  FeatureMap map;
  map.kind = feature_kind_from_string(j.at("kind").get<std::string>());
  map.M = j.at("M").get<Eigen::Index>();
  map.D = j.at("D").get<Eigen::Index>();
  map.xi = j.at("xi").get<double>();
  map.seed = j.at("seed").get<std::uint64_t>();
  map.legacy_experiment_scaling = j.value("legacy_experiment_scaling", false);
  map.W = matrix_from_json(j.at("W"), map.D);
  const auto b = j.at("b").get<std::vector<double>>();
  map.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  if (map.W.rows() != map.M || map.W.cols() != map.D) throw ParameterError("feature map JSON: W shape does not match M x D");
  if (map.kind == FeatureKind::gaussian_rff && map.b.size() != map.M)
    throw ParameterError("feature map JSON: offsets length does not match M");
  return map;
}

inline json to_json(const Graph& g) {
  json j;
  j["n"] = g.n;
  j["kind"] = std::string(to_string(g.kind));
  j["seed"] = g.seed;
  j["edges"] = g.edges;
  return j;
}

inline json to_json(const MixingMatrix& P) {
  json j;
  j["graph"] = to_json(P.graph);
  j["scheme"] = std::string(to_string(P.scheme));
  j["sigma2"] = P.sigma2;
  j["P"] = matrix_to_json(P.P);
  return j;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["eta"] = c.eta ? json(*c.eta) : json(nullptr);
  j["T"] = c.T;
  j["checkpoint_every"] = c.checkpoint_every;
  j["allow_large_step"] = c.allow_large_step;
  j["threads"] = c.threads;
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (j.contains("eta") && !j.at("eta").is_null()) c.eta = j.at("eta").get<double>();
  c.T = j.value("T", c.T);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.allow_large_step = j.value("allow_large_step", c.allow_large_step);
  c.threads = j.value("threads", c.threads);
  return c;
}

inline json to_json(const Prescription& p) {
  json j;
  j["M_star"] = p.M_star;
  j["t_star_iters"] = p.t_star_iters;
  j["m_min"] = p.m_min;
  j["t_mix"] = p.t_mix;
  j["satisfied"] = p.satisfied;
  j["violated"] = p.violated;
  j["caveat"] = p.caveat;
  if (!p.note.empty()) j["note"] = p.note;
  j["conditions"] = json::array();
  for (const auto& c : p.conditions)
    j["conditions"].push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"satisfied", c.satisfied}});
  return j;
}

inline json to_json(const LeadingTerms& t) {
  return {{"network_variance", t.network_variance}, {"network_residual", t.network_residual},
          {"sample_variance", t.sample_variance},   {"random_features", t.random_features},
          {"bias", t.bias},                         {"network_error", t.network()},
          {"statistical_error", t.statistical()},   {"total", t.total()}};
}

inline json to_json(const LemmaReport& r) {
  return {{"checks", r.checks},         {"violations", r.violations}, {"worst_slack", r.worst_slack},
          {"worst_step", r.worst_step}, {"worst_node", r.worst_node}, {"holds", r.holds()}};
}

namespace detail {

inline constexpr char kTraceMagic[8] = {'D', 'G', 'D', 'R', 'F', 'T', 'R', 'C'};
inline constexpr std::uint32_t kTraceVersion = 1;

static_assert(std::endian::native == std::endian::little, "trace format assumes a little-endian host");

template <class T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw IngestionError(0, "trace: truncated file");
  return value;
}

}  // namespace detail

inline void write_trace(std::ostream& os, const TrainTrace& trace) {
  json header;
  header["config"] = to_json(trace.config);
  header["eta"] = trace.eta;
  header["map"] = to_json(trace.map);
  header["mixing"] = matrix_to_json(trace.mixing);
  header["checkpoints"] = trace.checkpoints;
  header["agents"] = trace.agents();
  header["M"] = trace.M();
  const std::string text = header.dump();
  os.write(detail::kTraceMagic, sizeof(detail::kTraceMagic));
  detail::write_pod(os, detail::kTraceVersion);
  detail::write_pod(os, static_cast<std::uint64_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& w : trace.weights)
    os.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
  if (!os) throw IoError("write_trace: stream error");
}

inline TrainTrace read_trace(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, detail::kTraceMagic, sizeof(magic)) != 0) throw IngestionError(0, "trace: bad magic");
  if (detail::read_pod<std::uint32_t>(is) != detail::kTraceVersion) throw IngestionError(0, "trace: unsupported version");
  const auto length = detail::read_pod<std::uint64_t>(is);
  std::string text(length, '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  if (!is) throw IngestionError(0, "trace: truncated header");
  const json header = json::parse(text);

  TrainTrace trace;
  trace.config = run_config_from_json(header.at("config"));
  trace.eta = header.at("eta").get<double>();
  trace.map = feature_map_from_json(header.at("map"));
  trace.mixing = matrix_from_json(header.at("mixing"));
  trace.checkpoints = header.at("checkpoints").get<std::vector<long>>();
  const auto agents = header.at("agents").get<Eigen::Index>();
  const auto M = header.at("M").get<Eigen::Index>();
  for (std::size_t c = 0; c < trace.checkpoints.size(); ++c) {
    Eigen::MatrixXd w(M, agents);
    is.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
    if (!is) throw IngestionError(0, "trace: truncated weights");
    trace.weights.push_back(std::move(w));
  }
  return trace;
}

inline void save_trace(const std::string& path, const TrainTrace& trace) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path + "'");
  write_trace(os, trace);
}

inline TrainTrace load_trace(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_trace(is);
}

/// FNV-1a 64-bit, used for config hashes in run manifests.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dgdrf
