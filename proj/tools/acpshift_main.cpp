// Command-line front end: estimation on user data, simulation sweeps,
// efficiency-bound oracles, and report emission.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "acpshift/acpshift.hpp"

namespace {

using namespace acpshift;

constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

struct EstimateArgs {
  std::string data_path;
  std::string estimand = "mean";
  std::string variant = "without-acp";
  int k = 5;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  int bootstrap = 0;
  bool fast = false;
  std::string out = "estimate_result.json";
};

int cmd_estimate(const EstimateArgs& args, int threads) {
  const Dataset data = load_dataset(args.data_path);
  const ScoreKind kind = parse_score_kind(args.estimand);
  const ScoreModel model = ScoreModel::make(kind, data.p);
  EstimateConfig cfg;
  cfg.variant = parse_variant(args.variant);
  cfg.folds = args.k;
  cfg.seed = args.seed;
  cfg.ci_level = 1.0 - args.alpha;
  if (args.fast) cfg.learner = LearnerConfig::fast();

  const EstimateResult res = is_theta(cfg.variant) ? estimate_theta(data, model, cfg)
                                                   : estimate(data, model, cfg);
  nlohmann::json j = to_json(res);
  if (args.bootstrap > 0) {
    BootstrapConfig boot;
    boot.repetitions = args.bootstrap;
    boot.seed = derive_seed(args.seed, {tag("bootstrap-master")});
    const BootstrapResult br = perturbation_bootstrap(data, model, cfg, boot, threads);
    j["bootstrap"] = to_json(br, boot);
  }
  write_json(j, args.out);

  for (int i = 0; i < res.beta.size(); ++i) {
    const double se = std::sqrt(std::max(res.covariance(i, i), 0.0));
    std::cout << "coord " << i << ": estimate=" << format_double(res.beta[i])
              << " se=" << format_double(se) << " ci=[" << format_double(res.ci[i].lo) << ", "
              << format_double(res.ci[i].hi) << "]\n";
  }
  if (!res.diagnostics.note.empty()) std::cout << "note: " << res.diagnostics.note << "\n";
  std::cout << "wrote " << args.out << "\n";
  return 0;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int reps_override = 0;
  bool fast = false;
  bool dump_reps = false;
};

SweepGrid grid_from_config(const ConfigFile& cfg, const SimulateArgs& args) {
  SweepGrid grid;
  grid.n.clear();
  for (long v : cfg.get_list_int("grid", "n")) grid.n.push_back(static_cast<int>(v));
  grid.N.clear();
  for (long v : cfg.get_list_int("grid", "N")) grid.N.push_back(static_cast<int>(v));
  grid.alpha = cfg.has("grid", "alpha_signal") ? cfg.get_list_double("grid", "alpha_signal")
                                               : std::vector<double>{0.0};
  grid.zeta = cfg.has("grid", "zeta") ? cfg.get_list_double("grid", "zeta")
                                      : std::vector<double>{0.0};
  grid.family.clear();
  for (const auto& f : cfg.has("grid", "family") ? cfg.get_list("grid", "family")
                                                 : std::vector<std::string>{"linear"})
    grid.family.push_back(parse_outcome(f));
  grid.estimand.clear();
  for (const auto& e : cfg.has("grid", "estimand") ? cfg.get_list("grid", "estimand")
                                                   : std::vector<std::string>{"mean"})
    grid.estimand.push_back(parse_score_kind(e));

  SimConfig& base = grid.base;
  base.replications = static_cast<int>(cfg.get_int("sim", "replications", 500));
  base.folds = static_cast<int>(cfg.get_int("sim", "k", 5));
  base.ci_level = cfg.get_double("sim", "ci_level", 0.95);
  base.oracle_mc_n = cfg.get_int("sim", "oracle_mc_n", 1'000'000);
  base.seed = args.seed;

  LearnerConfig& lc = base.learner;
  lc.fast_mode = cfg.get_bool("learner", "fast", false) || args.fast;
  if (cfg.has("learner", "learners")) {
    lc.use_glm = lc.use_knn = lc.use_tree = false;
    for (const auto& l : cfg.get_list("learner", "learners")) {
      if (l == "glm")
        lc.use_glm = true;
      else if (l == "knn")
        lc.use_knn = true;
      else if (l == "tree")
        lc.use_tree = true;
      else
        throw ConfigError("unknown learner '" + l + "' (expected glm|knn|tree)");
    }
  }
  lc.stacking_folds = static_cast<int>(cfg.get_int("learner", "stacking_folds", 5));
  lc.knn_k = static_cast<int>(cfg.get_int("learner", "knn_k", 10));
  lc.tree_depth = static_cast<int>(cfg.get_int("learner", "tree_depth", 4));
  lc.clip_eps = cfg.get_double("learner", "clip_eps", 0.01);

  base.solver.max_iterations = static_cast<int>(cfg.get_int("solver", "max_iterations", 100));
  base.solver.tolerance = cfg.get_double("solver", "tolerance", 1e-10);

  if (args.reps_override > 0) base.replications = args.reps_override;
  return grid;
}

int cmd_simulate(const SimulateArgs& args, int threads) {
  const ConfigFile cfg = ConfigFile::parse_file(args.config_path);
  SweepGrid grid = grid_from_config(cfg, args);
  std::filesystem::create_directories(args.out_dir);
  if (args.dump_reps) grid.dump_dir = args.out_dir;
  const auto rows = sweep(grid, threads, &std::cerr);
  write_are_table(rows, args.out_dir + "/are_table.csv");
  nlohmann::json summary = sweep_summary_json(rows);
  if (grid.base.replications < 50) summary["low_replication"] = true;
  write_json(summary, args.out_dir + "/summary.json");
  std::cout << "wrote " << args.out_dir << "/are_table.csv (" << rows.size() << " rows)\n";
  bool all_valid = true;
  for (const auto& r : rows) all_valid = all_valid && r.valid;
  if (!all_valid) {
    std::cerr << "warning: some grid points are flagged invalid\n";
    return 1;
  }
  return 0;
}

struct OracleArgs {
  double alpha_signal = 0.0;
  double zeta = 0.0;
  std::string family = "linear";
  std::string estimand = "mean";
  long mc_n = 1'000'000;
  std::uint64_t seed = 0;
  std::string population = "unlabeled";
  std::string out = "oracle_bounds.json";
};

int cmd_oracle(const OracleArgs& args) {
  DgpSpec spec;
  spec.alpha_signal = args.alpha_signal;
  spec.zeta = args.zeta;
  spec.family = parse_outcome(args.family);
  spec.validate();
  if (args.population != "unlabeled" && args.population != "combined")
    throw ConfigError("population must be 'unlabeled' or 'combined'");
  const ScoreModel model = ScoreModel::make(parse_score_kind(args.estimand), spec.p);
  const OracleBounds bounds =
      cached_oracle_bounds(args.population, spec, model, args.mc_n, args.seed);
  write_json(to_json(bounds), args.out);
  std::cout << "beta0 = [";
  for (int i = 0; i < bounds.beta0.size(); ++i)
    std::cout << (i ? ", " : "") << format_double(bounds.beta0[i]);
  std::cout << "]\ntrace(gain) = " << format_double(bounds.gain.trace())
            << "  mc_se = " << format_double(bounds.mc_se) << "\nwrote " << args.out << "\n";
  return 0;
}

struct ReportArgs {
  std::string in_path;
  std::string out_dir = ".";
};

int cmd_report(const ReportArgs& args) {
  const CsvTable table = read_csv_table(args.in_path);
  const auto panels = split_report_panels(table);
  std::filesystem::create_directories(args.out_dir);
  const std::map<std::string, std::string> names = {{"n", "are_vs_n.csv"},
                                                    {"N", "are_vs_N.csv"},
                                                    {"alpha_signal", "are_vs_alpha.csv"},
                                                    {"zeta", "are_vs_zeta.csv"}};
  for (const auto& [col, table_out] : panels) {
    const std::string path = args.out_dir + "/" + names.at(col);
    write_csv_table(table_out, path);
    std::cout << "wrote " << path << " (" << table_out.rows.size() << " rows)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised estimation under covariate shift with ACPs"};
  app.require_subcommand(1);
  app.fallthrough();  // allow --threads after the subcommand name
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = hardware)");

  EstimateArgs est;
  auto* est_cmd = app.add_subcommand("estimate", "estimate on a dataset CSV");
  est_cmd->add_option("--data", est.data_path, "dataset CSV")->required();
  est_cmd->add_option("--estimand", est.estimand, "mean|linear|logistic");
  est_cmd->add_option("--variant", est.variant, "with-acp|without-acp|theta-with|theta-without");
  est_cmd->add_option("--k", est.k, "cross-fitting folds");
  est_cmd->add_option("--seed", est.seed, "master seed")->required();
  est_cmd->add_option("--alpha", est.alpha, "CI significance level");
  est_cmd->add_option("--bootstrap", est.bootstrap, "perturbation bootstrap repetitions");
  est_cmd->add_flag("--fast", est.fast, "GLM-only nuisances");
  est_cmd->add_option("--out", est.out, "output JSON path");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run a replication sweep");
  sim_cmd->add_option("--config", sim.config_path, "grid config file")->required();
  sim_cmd->add_option("--out", sim.out_dir, "output directory")->required();
  sim_cmd->add_option("--seed", sim.seed, "master seed")->required();
  sim_cmd->add_option("--reps", sim.reps_override, "override replication count");
  sim_cmd->add_flag("--fast", sim.fast, "GLM-only nuisances");
  sim_cmd->add_flag("--dump-reps", sim.dump_reps, "write per-replication estimate CSVs");

  OracleArgs ora;
  auto* ora_cmd = app.add_subcommand("oracle", "compute efficiency bounds");
  ora_cmd->add_option("--alpha-signal", ora.alpha_signal, "ACP signal strength")->required();
  ora_cmd->add_option("--zeta", ora.zeta, "ACP/covariate correlation")->required();
  ora_cmd->add_option("--family", ora.family, "linear|logistic");
  ora_cmd->add_option("--estimand", ora.estimand, "mean|linear|logistic");
  ora_cmd->add_option("--mc-n", ora.mc_n, "Monte Carlo sample size");
  ora_cmd->add_option("--seed", ora.seed, "master seed")->required();
  ora_cmd->add_option("--population", ora.population, "unlabeled|combined");
  ora_cmd->add_option("--out", ora.out, "output JSON path");

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "split a sweep table into panels");
  rep_cmd->add_option("--in", rep.in_path, "are_table.csv")->required();
  rep_cmd->add_option("--out", rep.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*est_cmd) return cmd_estimate(est, threads);
    if (*sim_cmd) return cmd_simulate(sim, threads);
    if (*ora_cmd) return cmd_oracle(ora);
    if (*rep_cmd) return cmd_report(rep);
  } catch (const NoConvergence& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const SingularJacobian& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
