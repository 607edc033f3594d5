#pragma once

// Trace evaluation: test metrics per (checkpoint, agent), optimal stopping,
// network error against the single-machine iterates, speed-up accounting.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dgdrf/data.hpp"
#include "dgdrf/engine.hpp"
#include "dgdrf/errors.hpp"
#include "dgdrf/features.hpp"

namespace dgdrf {

enum class Metric { excess_risk, classification_error, test_mse };

inline std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::excess_risk: return "excess_risk";
    case Metric::classification_error: return "classification_error";
    case Metric::test_mse: return "test_mse";
  }
  return "test_mse";
}

inline Metric metric_from_string(std::string_view name) {
  if (name == "excess_risk") return Metric::excess_risk;
  if (name == "classification_error") return Metric::classification_error;
  if (name == "test_mse") return Metric::test_mse;
  throw ParameterError("unknown metric '" + std::string(name) + "'");
}

/// Monte Carlo estimate of ||f - f_H||^2_rho from predictions on a test set with planted truth.
inline double excess_risk_from_predictions(const Eigen::Ref<const Eigen::VectorXd>& predictions, const Dataset& test) {
  if (!test.ground_truth) throw UnsupportedMetricError("excess_risk: test set has no planted ground truth");
  if (predictions.size() != test.size()) throw ParameterError("excess_risk: prediction count mismatch");
  return (predictions - test.noiseless).squaredNorm() / static_cast<double>(test.size());
}

inline double excess_risk_estimate(const Eigen::Ref<const Eigen::VectorXd>& weights, const FeatureMap& map,
                                   const Dataset& test) {
  if (!test.ground_truth) throw UnsupportedMetricError("excess_risk: test set has no planted ground truth");
  return excess_risk_from_predictions(predict(weights, map, test.X), test);
}

/// Fraction of samples with 1{prediction > 1/2} != label. Ties at 1/2 go to class 0.
inline double classification_error(const Eigen::Ref<const Eigen::VectorXd>& predictions,
                                   const Eigen::Ref<const Eigen::VectorXd>& labels) {
  if (predictions.size() != labels.size()) throw ParameterError("classification_error: size mismatch");
  if (labels.size() == 0) throw ParameterError("classification_error: empty input");
  Eigen::Index wrong = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != 0.0 && labels(i) != 1.0) throw ParameterError("classification_error: labels must be 0 or 1");
    const double predicted = predictions(i) > 0.5 ? 1.0 : 0.0;
    if (predicted != labels(i)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

inline double test_mse(const Eigen::Ref<const Eigen::VectorXd>& predictions, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (predictions.size() != y.size() || y.size() == 0) throw ParameterError("test_mse: size mismatch");
  return (predictions - y).squaredNorm() / static_cast<double>(y.size());
}

inline double metric_value(Metric metric, const Eigen::Ref<const Eigen::VectorXd>& predictions, const Dataset& test) {
  switch (metric) {
    case Metric::excess_risk: return excess_risk_from_predictions(predictions, test);
    case Metric::classification_error: return classification_error(predictions, test.y);
    case Metric::test_mse: return test_mse(predictions, test.y);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// values(c, v): metric of agent v at trace checkpoint c.
struct MetricTable {
  Metric metric = Metric::test_mse;
  std::vector<long> checkpoints;
  Eigen::MatrixXd values;

  /// max over agents, per checkpoint
  [[nodiscard]] Eigen::VectorXd worst_agent() const { return values.rowwise().maxCoeff(); }
};

inline MetricTable evaluate(const TrainTrace& trace, const Dataset& test, Metric metric) {
  if (metric == Metric::excess_risk && !test.ground_truth)
    throw UnsupportedMetricError("excess_risk: test set has no planted ground truth");
  const Eigen::MatrixXd Phi = feature_matrix(trace.map, test.X);
  MetricTable table;
  table.metric = metric;
  table.checkpoints = trace.checkpoints;
  table.values.resize(static_cast<Eigen::Index>(trace.size()), trace.agents());
  for (std::size_t c = 0; c < trace.size(); ++c) {
    const Eigen::MatrixXd predictions = Phi * trace.weights[c];
    for (Eigen::Index v = 0; v < predictions.cols(); ++v)
      table.values(static_cast<Eigen::Index>(c), v) = metric_value(metric, predictions.col(v), test);
  }
  return table;
}

struct StoppingResult {
  long t_star = 0;
  double value = 0.0;
};

/// argmin over checkpoints of the per-checkpoint value; earliest on ties.
inline StoppingResult optimal_stopping(const std::vector<long>& checkpoints, const Eigen::Ref<const Eigen::VectorXd>& per_t) {
  if (checkpoints.empty() || static_cast<Eigen::Index>(checkpoints.size()) != per_t.size())
    throw ParameterError("optimal_stopping: need one value per checkpoint");
  StoppingResult best{checkpoints.front(), per_t(0)};
  for (Eigen::Index c = 1; c < per_t.size(); ++c)
    if (per_t(c) < best.value) best = {checkpoints[static_cast<std::size_t>(c)], per_t(c)};
  return best;
}

/// min over t of max over agents.
inline StoppingResult optimal_stopping(const MetricTable& table) {
  return optimal_stopping(table.checkpoints, table.worst_agent());
}

inline StoppingResult optimal_stopping(const TrainTrace& trace, const Dataset& test, Metric metric) {
  return optimal_stopping(evaluate(trace, test, metric));
}

/// sqrt((w_{t,v} - v_t)^T C (w_{t,v} - v_t)) for every checkpoint t and agent v,
/// with v_t the single-machine iterate at the same t.
inline Eigen::MatrixXd network_error(const TrainTrace& distributed, const TrainTrace& central,
                                     const Eigen::Ref<const Eigen::MatrixXd>& C_hat) {
  if (distributed.checkpoints != central.checkpoints)
    throw ParameterError("network_error: traces have different checkpoints");
  if (distributed.M() != central.M() || !(distributed.map == central.map))
    throw ParameterError("network_error: traces use different feature maps");
  if (distributed.eta != central.eta) throw ParameterError("network_error: traces use different step sizes");
  if (central.agents() != 1) throw ParameterError("network_error: reference trace must be single-machine");
  if (C_hat.rows() != distributed.M() || C_hat.cols() != distributed.M())
    throw ParameterError("network_error: covariance must be M x M");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(distributed.size()), distributed.agents());
  for (std::size_t c = 0; c < distributed.size(); ++c) {
    const Eigen::MatrixXd diff = distributed.weights[c].colwise() - central.weights[c].col(0);
    const Eigen::MatrixXd Cd = C_hat * diff;
    for (Eigen::Index v = 0; v < diff.cols(); ++v)
      out(static_cast<Eigen::Index>(c), v) = std::sqrt(std::max(0.0, diff.col(v).dot(Cd.col(v))));
  }
  return out;
}

/// n*m / (m + tau + M*deg): single-machine over distributed iteration time.
inline double speedup_estimate(double n, double m, double M, double tau, double deg) {
  if (n < 0 || M < 0 || tau < 0 || deg < 0) throw ParameterError("speedup_estimate: arguments must be nonnegative");
  if (m < 1) throw ParameterError("speedup_estimate: m must be >= 1");
  return n * m / (m + tau + M * deg);
}

struct EvalReport {
  MetricTable table;
  StoppingResult best;
  std::map<std::string, std::string> metadata;
};

inline EvalReport make_report(MetricTable table, std::map<std::string, std::string> metadata = {}) {
  EvalReport report;
  report.best = optimal_stopping(table);
  report.table = std::move(table);
  report.metadata = std::move(metadata);
  return report;
}

/// Tidy CSV, columns t,agent,metric,value.
inline void write_metrics_csv(std::ostream& os, const MetricTable& table, bool header = true) {
  const auto old = os.precision(17);
  if (header) os << "t,agent,metric,value\n";
  for (std::size_t c = 0; c < table.checkpoints.size(); ++c)
    for (Eigen::Index v = 0; v < table.values.cols(); ++v)
      os << table.checkpoints[c] << ',' << v << ',' << to_string(table.metric) << ','
         << table.values(static_cast<Eigen::Index>(c), v) << '\n';
  os.precision(old);
}

}  // namespace dgdrf
