#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "acpshift/csv.hpp"
#include "acpshift/dgp.hpp"
#include "acpshift/errors.hpp"
#include "acpshift/inference.hpp"
#include "acpshift/oracle.hpp"
#include "acpshift/threads.hpp"

namespace acpshift {

struct SimConfig {
  DgpSpec spec;
  int n = 300;
  int N = 300;
  ScoreKind model_kind = ScoreKind::MeanTarget;
  int replications = 500;
  int folds = 5;
  LearnerConfig learner;
  SolverConfig solver;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  long oracle_mc_n = 1'000'000;

  void validate() const {
    spec.validate();
    if (n < 50 || N < 50) throw ConfigError("stratum sizes must be at least 50");
    if (replications < 2) throw ConfigError("replications must be at least 2");
  }
};

struct CoordSummary {
  int coord = 0;
  double mse_with = 0.0;
  double mse_without = 0.0;
  double are = 0.0;  // mse_without / mse_with
  double coverage_with = 0.0;
  double coverage_without = 0.0;
  double width_with = 0.0;
  double width_without = 0.0;
};

struct SimSummary {
  int replications = 0;
  int used_with = 0;
  int used_without = 0;
  int failures_with = 0;
  int failures_without = 0;
  bool valid = true;  // false when either variant fails on > 2% of replications
  VectorXd beta0;
  std::vector<CoordSummary> coords;
};

struct RepRecord {
  bool ok_with = false;
  bool ok_without = false;
  VectorXd beta_with, beta_without;
  VectorXd sqerr_with, sqerr_without;
  VectorXd cover_with, cover_without;
  VectorXd width_with, width_without;
};

// Runs the replication study for both variants on shared per-replication
// datasets; solver nonconvergence is recorded and the replication excluded.
// When `dump` is non-null the per-replication records are kept for audit.
inline SimSummary run_replications(const SimConfig& cfg, int threads = 1,
                                   std::vector<RepRecord>* dump = nullptr) {
  cfg.validate();
  const ScoreModel model = ScoreModel::make(cfg.model_kind, cfg.spec.p);
  const TrueParam beta0 = cached_true_param("unlabeled", cfg.spec, model, cfg.oracle_mc_n,
                                            derive_seed(cfg.seed, {tag("oracle")}));
  const int d = model.dim();
  const int R = cfg.replications;

  std::vector<RepRecord> recs(R);
  parallel_for(R, threads, [&](std::size_t r) {
    const Dataset data =
        gen_dataset(cfg.spec, cfg.n, cfg.N, derive_seed(cfg.seed, {tag("rep"), r}));
    EstimateConfig est;
    est.folds = cfg.folds;
    est.seed = derive_seed(cfg.seed, {tag("rep"), r, tag("est")});
    est.learner = cfg.learner;
    est.solver = cfg.solver;
    est.ci_level = cfg.ci_level;

    RepRecord rec;
    auto run_variant = [&](Variant v, bool& ok, VectorXd& beta, VectorXd& sqerr, VectorXd& cover,
                           VectorXd& width) {
      try {
        est.variant = v;
        const EstimateResult res = estimate(data, model, est);
        beta = res.beta;
        sqerr.resize(d);
        cover.resize(d);
        width.resize(d);
        for (int j = 0; j < d; ++j) {
          const double err = res.beta[j] - beta0.value[j];
          sqerr[j] = err * err;
          cover[j] = res.ci[j].contains(beta0.value[j]) ? 1.0 : 0.0;
          width[j] = res.ci[j].width();
        }
        ok = true;
      } catch (const Error&) {
        ok = false;
      }
    };
    run_variant(Variant::WithACP, rec.ok_with, rec.beta_with, rec.sqerr_with, rec.cover_with,
                rec.width_with);
    run_variant(Variant::WithoutACP, rec.ok_without, rec.beta_without, rec.sqerr_without,
                rec.cover_without, rec.width_without);
    recs[r] = std::move(rec);
  });

  SimSummary out;
  out.replications = R;
  out.beta0 = beta0.value;
  VectorXd mse_w = VectorXd::Zero(d), mse_wo = VectorXd::Zero(d);
  VectorXd cov_w = VectorXd::Zero(d), cov_wo = VectorXd::Zero(d);
  VectorXd wid_w = VectorXd::Zero(d), wid_wo = VectorXd::Zero(d);
  for (const auto& rec : recs) {
    if (rec.ok_with) {
      ++out.used_with;
      mse_w += rec.sqerr_with;
      cov_w += rec.cover_with;
      wid_w += rec.width_with;
    } else {
      ++out.failures_with;
    }
    if (rec.ok_without) {
      ++out.used_without;
      mse_wo += rec.sqerr_without;
      cov_wo += rec.cover_without;
      wid_wo += rec.width_without;
    } else {
      ++out.failures_without;
    }
  }
  if (out.used_with == 0 || out.used_without == 0)
    throw NoConvergence("every replication failed");
  if (dump) *dump = std::move(recs);
  out.valid = out.failures_with <= 0.02 * R && out.failures_without <= 0.02 * R;
  for (int j = 0; j < d; ++j) {
    CoordSummary c;
    c.coord = j;
    c.mse_with = mse_w[j] / out.used_with;
    c.mse_without = mse_wo[j] / out.used_without;
    c.are = c.mse_without / c.mse_with;
    c.coverage_with = cov_w[j] / out.used_with;
    c.coverage_without = cov_wo[j] / out.used_without;
    c.width_with = wid_w[j] / out.used_with;
    c.width_without = wid_wo[j] / out.used_without;
    out.coords.push_back(c);
  }
  return out;
}

struct SweepGrid {
  std::vector<int> n{300};
  std::vector<int> N{300};
  std::vector<double> alpha{0.0};
  std::vector<double> zeta{0.0};
  std::vector<Outcome> family{Outcome::Linear};
  std::vector<ScoreKind> estimand{ScoreKind::MeanTarget};
  SimConfig base;
  std::string dump_dir;  // when set, per-replication estimates land here
};

// Audit dump: one row per replication with the raw estimates.
inline void write_replication_dump(const std::vector<RepRecord>& recs, int d,
                                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "rep,ok_with,ok_without";
  for (int j = 0; j < d; ++j) out << ",beta_with_" << j;
  for (int j = 0; j < d; ++j) out << ",beta_without_" << j;
  out << '\n';
  for (std::size_t r = 0; r < recs.size(); ++r) {
    out << r << ',' << int(recs[r].ok_with) << ',' << int(recs[r].ok_without);
    for (int j = 0; j < d; ++j)
      out << ',' << (recs[r].ok_with ? format_double(recs[r].beta_with[j]) : std::string());
    for (int j = 0; j < d; ++j)
      out << ',' << (recs[r].ok_without ? format_double(recs[r].beta_without[j]) : std::string());
    out << '\n';
  }
}

struct SweepRow {
  int n = 0, N = 0;
  double alpha = 0.0, zeta = 0.0;
  Outcome family = Outcome::Linear;
  ScoreKind estimand = ScoreKind::MeanTarget;
  CoordSummary c;
  int replications = 0;
  bool valid = true;
  std::string error;
};

// Cartesian sweep; a failing grid point is annotated instead of aborting the
// rest of the grid.
inline std::vector<SweepRow> sweep(const SweepGrid& grid, int threads = 1,
                                   std::ostream* log = nullptr) {
  std::vector<SweepRow> rows;
  std::uint64_t point = 0;
  for (Outcome fam : grid.family)
    for (ScoreKind kind : grid.estimand)
      for (int n : grid.n)
        for (int N : grid.N)
          for (double alpha : grid.alpha)
            for (double zeta : grid.zeta) {
              SimConfig cfg = grid.base;
              cfg.spec.alpha_signal = alpha;
              cfg.spec.zeta = zeta;
              cfg.spec.family = fam;
              cfg.n = n;
              cfg.N = N;
              cfg.model_kind = kind;
              cfg.seed = derive_seed(grid.base.seed, {tag("point"), point++});
              if (log)
                *log << "running n=" << n << " N=" << N << " alpha=" << alpha
                     << " zeta=" << zeta << " family=" << to_string(fam)
                     << " estimand=" << to_string(kind) << "\n";
              try {
                std::vector<RepRecord> recs;
                const SimSummary summary = run_replications(
                    cfg, threads, grid.dump_dir.empty() ? nullptr : &recs);
                if (!grid.dump_dir.empty()) {
                  char name[32];
                  std::snprintf(name, sizeof(name), "reps_%04llu.csv",
                                static_cast<unsigned long long>(point - 1));
                  write_replication_dump(recs, ScoreModel::make(kind, cfg.spec.p).dim(),
                                         grid.dump_dir + "/" + name);
                }
                for (const auto& c : summary.coords) {
                  SweepRow row;
                  row.n = n;
                  row.N = N;
                  row.alpha = alpha;
                  row.zeta = zeta;
                  row.family = fam;
                  row.estimand = kind;
                  row.c = c;
                  row.replications = summary.replications;
                  row.valid = summary.valid;
                  rows.push_back(row);
                }
              } catch (const Error& e) {
                SweepRow row;
                row.n = n;
                row.N = N;
                row.alpha = alpha;
                row.zeta = zeta;
                row.family = fam;
                row.estimand = kind;
                row.replications = cfg.replications;
                row.valid = false;
                row.error = e.what();
                rows.push_back(row);
              }
            }
  return rows;
}

inline void write_are_table(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "n,N,alpha_signal,zeta,family,estimand,coord,mse_with,mse_without,are,"
         "coverage_with,coverage_without,width_with,width_without,width_ratio,"
         "replications,valid,error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    for (auto& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    out << r.n << ',' << r.N << ',' << format_double(r.alpha) << ',' << format_double(r.zeta)
        << ',' << to_string(r.family) << ',' << to_string(r.estimand) << ',' << r.c.coord << ','
        << format_double(r.c.mse_with) << ',' << format_double(r.c.mse_without) << ','
        << format_double(r.c.are) << ',' << format_double(r.c.coverage_with) << ','
        << format_double(r.c.coverage_without) << ',' << format_double(r.c.width_with) << ','
        << format_double(r.c.width_without) << ','
        << format_double(r.c.width_without > 0 ? r.c.width_with / r.c.width_without : 0.0) << ','
        << r.replications << ',' << (r.valid ? 1 : 0) << ',' << err << '\n';
  }
}

}  // namespace acpshift
