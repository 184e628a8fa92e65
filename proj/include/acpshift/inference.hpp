#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acpshift/common.hpp"
#include "acpshift/errors.hpp"
#include "acpshift/estimator.hpp"
#include "acpshift/rng.hpp"
#include "acpshift/threads.hpp"

namespace acpshift {

struct VarianceEstimate {
  MatrixXd omega_hat;  // inverse expected score Jacobian (Omega, or Gamma for theta)
  MatrixXd v_hat;      // cross-fitted second moment of the plugged-in EIF
  MatrixXd sandwich;   // omega_hat * v_hat * omega_hat
};

// Omega-hat inverts the (1-r)/(1-pi)-weighted average of ds/dbeta', which
// targets E_q because ds/dbeta' depends on x only. The theta variants average
// over all units (the combined population is the sample itself).
inline MatrixXd estimate_omega(const Dataset& data, const VectorXd& beta_hat,
                               const ScoreModel& model, Variant variant) {
  const int d = model.dim();
  const double pi = data.pi();
  MatrixXd acc = MatrixXd::Zero(d, d);
  for (const auto& o : data.obs) {
    if (is_theta(variant)) {
      acc += model.score_jacobian(o.x, beta_hat);
    } else if (o.r == 0) {
      acc += (1.0 / (1.0 - pi)) * model.score_jacobian(o.x, beta_hat);
    }
  }
  acc /= data.size();
  Eigen::FullPivLU<MatrixXd> lu(acc);
  if (!lu.isInvertible())
    throw SingularMatrix("expected score Jacobian is singular; cannot form Omega-hat");
  return lu.inverse();
}

inline VarianceEstimate sandwich_variance(const Dataset& data, const FoldPlan& plan,
                                          const std::vector<NuisanceSet>& nuisances,
                                          const VectorXd& beta_hat, const ScoreModel& model,
                                          Variant variant) {
  const auto ps = detail::prepare(data, plan, nuisances, model, variant);
  const int d = ps.d;
  MatrixXd v = MatrixXd::Zero(d, d);
  for (int i = 0; i < ps.size(); ++i) {
    const VectorXd& a = ps.design[i];
    const double g = model.link(a.dot(beta_hat));
    const double c = detail::phi_scalar(ps, i, g);
    v += (ps.fold_weight[i] * c * c) * (a * a.transpose());
  }
  v = ((v + v.transpose()) / 2.0).eval();

  VarianceEstimate est;
  est.omega_hat = estimate_omega(data, beta_hat, model, variant);
  est.v_hat = v;
  MatrixXd s = est.omega_hat * v * est.omega_hat;
  est.sandwich = ((s + s.transpose()) / 2.0).eval();
  return est;
}

struct Interval {
  int coord = 0;
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
  double width() const { return hi - lo; }
};

// Wald interval for v'beta: v'beta_hat +/- z_{1-alpha/2} M^{-1/2} (v'Sv)^{1/2}.
inline Interval confidence_interval(const VectorXd& beta_hat, const MatrixXd& sandwich, int M,
                                    const VectorXd& v, double alpha) {
  if (v.size() != beta_hat.size()) throw DimensionMismatch("contrast vector length mismatch");
  double var = v.dot(sandwich * v);
  const double scale = 1.0 + sandwich.cwiseAbs().maxCoeff();
  if (var < -1e-8 * scale)
    throw NegativeVariance("v'Sv = " + std::to_string(var) + " is negative");
  var = std::max(var, 0.0);
  const double z = alpha >= 1.0 ? 0.0 : norm_quantile(1.0 - alpha / 2.0);
  const double center = v.dot(beta_hat);
  const double hw = z * std::sqrt(var / M);
  return {0, center - hw, center + hw};
}

struct FoldLoss {
  int fold = -1;
  double propensity = std::numeric_limits<double>::quiet_NaN();
  double mu = std::numeric_limits<double>::quiet_NaN();
  double mu_tilde = std::numeric_limits<double>::quiet_NaN();
};

struct Diagnostics {
  int newton_iterations = 0;
  double max_residual = 0.0;
  std::vector<FoldLoss> fold_losses;
  std::string note;
  double ci_level = 0.95;
  double z_multiplier = 0.0;
};

struct EstimateResult {
  VectorXd beta;
  MatrixXd covariance;  // sandwich / M: finite-sample covariance of beta-hat
  MatrixXd sandwich;    // asymptotic Omega V Omega
  std::vector<Interval> ci;
  Variant variant = Variant::WithoutACP;
  Diagnostics diagnostics;
};

struct EstimateConfig {
  Variant variant = Variant::WithoutACP;
  int folds = 5;
  std::uint64_t seed = 0;
  LearnerConfig learner;
  SolverConfig solver;
  double ci_level = 0.95;
};

namespace detail {

inline Variant resolve_variant(const Dataset& data, Variant requested, std::string* note) {
  if (!uses_acp(requested)) return requested;
  switch (data.scenario) {
    case Scenario::II:
      return requested;
    case Scenario::III:
      // Labeled-only ACPs carry no information: dispatch to the without-ACP
      // pipeline rather than failing.
      if (note)
        *note = "scenario III: ACPs available on labeled units only; "
                "estimated without ACP (no efficiency gain available)";
      return requested == Variant::WithACP ? Variant::WithoutACP : Variant::ThetaWithoutACP;
    case Scenario::I:
      throw ScenarioMismatch("variant '" + std::string(to_string(requested)) +
                             "' requires scenario II data: ACP column required");
  }
  return requested;
}

inline EstimateResult estimate_impl(const Dataset& data, const ScoreModel& model,
                                    const EstimateConfig& cfg) {
  std::string note;
  const Variant variant = resolve_variant(data, cfg.variant, &note);
  const FoldPlan plan = make_folds(data, cfg.folds, cfg.seed);
  const Family family = data.binary_outcome() ? Family::Binary : Family::Continuous;
  const auto crossfit = crossfit_nuisances(data, plan, cfg.learner, family, uses_acp(variant));
  const auto solved = solve_beta(data, plan, crossfit.sets, model, variant, cfg.solver);
  const auto var = sandwich_variance(data, plan, crossfit.sets, solved.beta, model, variant);

  EstimateResult res;
  res.beta = solved.beta;
  res.sandwich = var.sandwich;
  res.covariance = var.sandwich / data.size();
  res.variant = variant;
  res.diagnostics.newton_iterations = solved.iterations;
  res.diagnostics.max_residual = solved.max_residual;
  res.diagnostics.note = note;
  res.diagnostics.ci_level = cfg.ci_level;
  const double alpha = 1.0 - cfg.ci_level;
  res.diagnostics.z_multiplier = alpha >= 1.0 ? 0.0 : norm_quantile(1.0 - alpha / 2.0);
  for (const auto& ns : crossfit.sets)
    res.diagnostics.fold_losses.push_back(
        {ns.fold, ns.propensity_cv_loss, ns.mu_cv_loss, ns.mu_tilde_cv_loss});
  for (int j = 0; j < model.dim(); ++j) {
    VectorXd v = VectorXd::Zero(model.dim());
    v[j] = 1.0;
    Interval iv = confidence_interval(res.beta, res.sandwich, data.size(), v, alpha);
    iv.coord = j;
    res.ci.push_back(iv);
  }
  return res;
}

}  // namespace detail

// Full pipeline (Algorithm-style): folds -> cross-fitted nuisances -> solve ->
// sandwich variance -> per-coordinate Wald intervals.
inline EstimateResult estimate(const Dataset& data, const ScoreModel& model,
                               const EstimateConfig& cfg) {
  if (is_theta(cfg.variant))
    throw ConfigError("estimate() handles the unlabeled-population variants; use estimate_theta()");
  return detail::estimate_impl(data, model, cfg);
}

// Combined-population analog.
inline EstimateResult estimate_theta(const Dataset& data, const ScoreModel& model,
                                     EstimateConfig cfg) {
  if (!is_theta(cfg.variant))
    cfg.variant = cfg.variant == Variant::WithACP ? Variant::ThetaWithACP : Variant::ThetaWithoutACP;
  return detail::estimate_impl(data, model, cfg);
}

struct BootstrapConfig {
  int repetitions = 500;
  std::uint64_t seed = 0;
  double q_lo = 0.025;
  double q_hi = 0.975;

  void validate() const {
    if (repetitions < 2) throw ConfigError("bootstrap repetitions must be >= 2");
  }
};

struct BootstrapResult {
  MatrixXd beta_stars;            // one row per successful replicate
  std::vector<Interval> ci;       // per-coordinate quantile intervals
  int failures = 0;
  bool flagged = false;           // > 5% replicate failures
};

// Perturbation bootstrap: each replicate draws i.i.d. unit-mean exponential
// weights, refits the member learners under weighted losses (fold plan and
// stacking weights fixed), multiplies every estimating-equation contribution
// by its weight, and re-solves. Intervals are empirical quantiles.
inline BootstrapResult perturbation_bootstrap(
    const Dataset& data, const ScoreModel& model, const EstimateConfig& cfg,
    const BootstrapConfig& boot, int threads = 1,
    const std::function<VectorXd(int)>& weight_source = {}) {
  boot.validate();
  std::string note;
  const Variant variant = detail::resolve_variant(data, cfg.variant, &note);
  const FoldPlan plan = make_folds(data, cfg.folds, cfg.seed);
  const Family family = data.binary_outcome() ? Family::Binary : Family::Continuous;
  const auto base = crossfit_nuisances(data, plan, cfg.learner, family, uses_acp(variant));
  const auto base_solve = solve_beta(data, plan, base.sets, model, variant, cfg.solver);

  const int B = boot.repetitions;
  const int d = model.dim();
  const int M = data.size();
  std::vector<VectorXd> draws(B);
  std::vector<char> ok(B, 0);
  parallel_for(B, threads, [&](std::size_t b) {
    VectorXd w;
    if (weight_source) {
      w = weight_source(static_cast<int>(b));
    } else {
      Rng rng(derive_seed(boot.seed, {tag("bootstrap"), b}));
      w.resize(M);
      for (int i = 0; i < M; ++i) w[i] = rng.exponential();
    }
    try {
      const auto sets = refit_nuisances_weighted(data, plan, base, w);
      auto ps = detail::prepare(data, plan, sets, model, variant, &w);
      SolverConfig solver = cfg.solver;
      solver.initial_beta = base_solve.beta;
      const auto sol = detail::solve_equation(ps, solver);
      draws[b] = sol.beta;
      ok[b] = 1;
    } catch (const Error&) {
      ok[b] = 0;
    }
  });

  BootstrapResult res;
  int good = 0;
  for (int b = 0; b < B; ++b) good += ok[b];
  res.failures = B - good;
  res.flagged = res.failures > 0.05 * B;
  res.beta_stars.resize(good, d);
  int row = 0;
  for (int b = 0; b < B; ++b)
    if (ok[b]) res.beta_stars.row(row++) = draws[b].transpose();
  for (int j = 0; j < d; ++j) {
    std::vector<double> col(res.beta_stars.rows());
    for (int r = 0; r < res.beta_stars.rows(); ++r) col[r] = res.beta_stars(r, j);
    Interval iv;
    iv.coord = j;
    iv.lo = quantile_linear(col, boot.q_lo);
    iv.hi = quantile_linear(col, boot.q_hi);
    res.ci.push_back(iv);
  }
  return res;
}

}  // namespace acpshift
