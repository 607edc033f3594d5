#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dgdrf/dgdrf.hpp"

namespace fs = std::filesystem;
using namespace dgdrf;

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kLemma = 3, kIo = 4, kInternal = 1 };

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool legacy = false;
  bool print_config = false;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_experiment_config(c.config_path);
  if (c.seed) cfg.seeds = {*c.seed, *c.seed + 1, *c.seed + 2};
  if (c.threads) cfg.run.config.threads = *c.threads;
  if (c.legacy) cfg.features.legacy_experiment_scaling = true;
  if (!c.out.empty()) cfg.output = c.out;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << text;
}

void print_prescription(std::ostream& os, const std::string& name, const json& p) {
  if (p.contains("error")) {
    os << std::left << std::setw(10) << name << p.at("error").get<std::string>() << '\n';
    return;
  }
  os << std::left << std::setw(10) << name << "M=" << p.at("M_star") << "  t=" << p.at("t_star_iters")
     << "  m_min=" << p.at("m_min") << "  t_mix=" << p.at("t_mix")
     << "  satisfied=" << (p.at("satisfied").get<bool>() ? "yes" : "no");
  if (!p.at("violated").get<std::string>().empty()) os << "  (violated: " << p.at("violated").get<std::string>() << ')';
  os << '\n';
}

int cmd_run_main(const Common& common) {
  const ExperimentConfig cfg = load(common);
  if (common.print_config) {
    std::cout << canonical_config(cfg) << '\n';
    return kOk;
  }
  const fs::path dir = cmd_run(cfg, cfg.output);
  const json summary = json::parse(std::ifstream(
      cfg.repetitions == 1 ? dir / "summary.json" : dir / "rep_0" / "summary.json"));
  std::cout << "wrote " << dir.string() << "  (config " << config_hash(cfg) << ")\n"
            << cfg.evaluation.metric << ": best " << summary.at("best_value") << " at t=" << summary.at("t_star") << '\n';
  return kOk;
}

int cmd_eval_main(const std::string& run_dir) {
  for (const auto& report : cmd_eval(run_dir))
    std::cout << "rep " << report.metadata.at("rep") << ": " << to_string(report.table.metric) << " best "
              << report.best.value << " at t=" << report.best.t_star << '\n';
  return kOk;
}

int cmd_sweep_main(const Common& common, const std::string& param, const std::vector<std::string>& values) {
  const ExperimentConfig base = load(common);
  const fs::path root = base.output;
  fs::create_directories(root);
  std::ostringstream table;
  table.precision(17);
  table << "param,value,rep,t_star,best_value,central_t_star,central_best_value\n";
  for (const auto& value : values) {
    json j = to_json(base);
    const auto dot = param.find('.');
    if (dot == std::string::npos) throw ConfigError(param, "sweep parameter must be section.key");
    const std::string section = param.substr(0, dot);
    const std::string key = param.substr(dot + 1);
    if (!j.contains(section) || !j.at(section).is_object()) throw ConfigError(param, "unknown section");
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      parsed = value;
    }
    j[section][key] = parsed;
    ExperimentConfig cfg = experiment_config_from_json(j);
    const fs::path dir = root / (section + "." + key + "=" + value);
    cfg.output = dir.string();
    cmd_run(cfg, dir);
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      const fs::path rep_dir = cfg.repetitions == 1 ? dir : dir / ("rep_" + std::to_string(rep));
      const json s = json::parse(std::ifstream(rep_dir / "summary.json"));
      table << param << ',' << value << ',' << rep << ',' << s.at("t_star") << ',' << s.at("best_value").get<double>();
      if (s.contains("central_t_star"))
        table << ',' << s.at("central_t_star") << ',' << s.at("central_best_value").get<double>();
      else
        table << ",,";
      table << '\n';
    }
    std::cout << param << '=' << value << " done\n";
  }
  write_text(root / "sweep.csv", table.str());
  std::cout << "wrote " << (root / "sweep.csv").string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized random-features regression simulator"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON experiment config (comments allowed)");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--seed", common.seed, "Base seed (data, features, shard = seed, seed+1, seed+2)");
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--legacy-experiment-scaling", common.legacy, "Drop the sqrt(2) feature normalization (kappa = 1)");
  };

  auto* run = app.add_subcommand("run", "Train, evaluate and write a run directory");
  add_common(run);
  run->add_flag("--print-config", common.print_config, "Print the canonical config and exit");

  std::string run_dir;
  auto* eval = app.add_subcommand("eval", "Re-evaluate a run directory from its stored traces");
  eval->add_option("run_dir", run_dir, "Run directory")->required();

  std::string param;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "Run the config once per value of one parameter");
  add_common(sweep);
  sweep->add_option("--param", param, "Parameter as section.key, e.g. features.M")->required();
  sweep->add_option("--values", values, "Values (JSON literals or strings)")->required();

  std::string which;
  FigureOptions fig;
  std::string fig_out = "figures";
  std::optional<std::uint64_t> fig_seed;
  int fig_threads = 1;
  bool fig_legacy = false;
  auto* figure = app.add_subcommand("figure", "Regenerate a figure table: fig1 (vs M), fig2 (vs nm), fig3 (stopping time)");
  figure->add_option("which", which, "fig1 | fig2 | fig3")->required()->check(CLI::IsMember({"fig1", "fig2", "fig3"}));
  figure->add_option("--scale", fig.scale, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  figure->add_option("--out", fig_out, "Output directory");
  figure->add_option("--seed", fig_seed, "Base seed");
  figure->add_option("--seeds", fig.seeds, "Repetitions per cell")->check(CLI::PositiveNumber);
  figure->add_option("--threads", fig_threads, "Parallel cells")->check(CLI::PositiveNumber);
  figure->add_option("--T", fig.T, "Iteration budget (0: figure default)");
  figure->add_option("--test-size", fig.test_size, "Test set size");
  figure->add_option("--ns", fig.ns, "Network sizes");
  figure->add_option("--Ms", fig.Ms, "Feature counts");
  figure->add_option("--nms", fig.nms, "Total sample counts");
  figure->add_option("--dataset", fig.csv_path, "CSV dataset (label in column 0), required at paper scale");
  figure->add_flag("--legacy-experiment-scaling", fig_legacy, "Drop the sqrt(2) feature normalization (kappa = 1)");
  std::optional<double> fig_eta;
  figure->add_option("--eta", fig_eta, "Step size override (bypasses the eta*kappa^2 <= 1 check)");

  TheoryArgs targs;
  std::string theory_out;
  auto* theory = app.add_subcommand("theory", "Prescriptions, leading terms and lemma checks");
  theory->add_option("--n", targs.n, "Agents")->check(CLI::PositiveNumber);
  theory->add_option("--m", targs.m, "Samples per agent")->check(CLI::PositiveNumber);
  theory->add_option("--sigma2", targs.sigma2, "Second largest singular value (default: from --topology)");
  theory->add_option("--topology", targs.topology, "cycle | grid | complete | expander");
  theory->add_option("--r", targs.params.r, "Source exponent in [1/2, 1]");
  theory->add_option("--gamma", targs.params.gamma, "Capacity exponent in [0, 1]");
  theory->add_option("--eta", targs.params.eta, "Step size used in leading terms");
  theory->add_option("--t", targs.t, "Iteration for leading terms (default: prescribed)");
  theory->add_option("--M", targs.M, "Features for leading terms (default: prescribed)");
  theory->add_option("--s-max", targs.s_max, "Powers checked by the spectral bound");
  theory->add_option("--seed", targs.seed, "Seed for random lemma instances");
  theory->add_option("--out", theory_out, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run_main(common);
    if (*eval) return cmd_eval_main(run_dir);
    if (*sweep) return cmd_sweep_main(common, param, values);
    if (*figure) {
      if (fig_seed) fig.base_seed = *fig_seed;
      fig.threads = fig_threads;
      fig.legacy_experiment_scaling = fig_legacy;
      fig.eta = fig_eta;
      const FigureTable table = cmd_figure(which, fig);
      fs::create_directories(fig_out);
      std::ostringstream csv;
      write_figure_csv(csv, table);
      write_text(fs::path(fig_out) / (which + ".csv"), csv.str());
      std::ostringstream stub;
      write_plot_stub(stub, table, which + ".csv");
      write_text(fs::path(fig_out) / (which + ".gp"), stub.str());
      std::cout << "wrote " << (fs::path(fig_out) / (which + ".csv")).string() << " (" << table.rows.size()
                << " rows" << (fig.scale == "paper" ? ", paper scale is best-effort" : "") << ")\n";
      return kOk;
    }
    if (*theory) {
      const TheoryReport report = cmd_theory(targs);
      const json& doc = report.document;
      std::cout << "n=" << doc.at("n") << " m=" << doc.at("m") << " sigma2=" << doc.at("sigma2").get<double>() << '\n';
      print_prescription(std::cout, "basic", doc.at("basic"));
      print_prescription(std::cout, "refined", doc.at("refined"));
      if (doc.contains("leading_terms")) {
        const auto& lt = doc.at("leading_terms");
        std::cout << "leading terms: network " << lt.at("network_error").get<double>() << ", statistical "
                  << lt.at("statistical_error").get<double>() << ", total " << lt.at("total").get<double>() << '\n';
      }
      std::cout << doc.at("basic").at("caveat").get<std::string>() << '\n';
      long violations = 0;
      for (const auto& l : doc.at("lemmas")) violations += l.at("violations").get<long>();
      std::cout << "lemma checks: " << doc.at("lemmas").size() << " instances, " << violations << " violations\n";
      if (!theory_out.empty()) write_text(theory_out, doc.dump(2) + "\n");
      if (report.lemma_violation) return kLemma;
      if (report.out_of_regime) {
        std::cerr << "out of regime: " << doc.at("refined").at("error").get<std::string>() << '\n';
        return kConfig;
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ParameterError& e) {
    std::cerr << "invalid parameter: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const IngestionError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kIo;
  } catch (const UnsupportedMetricError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}
