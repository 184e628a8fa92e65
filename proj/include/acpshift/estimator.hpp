#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "acpshift/data.hpp"
#include "acpshift/errors.hpp"
#include "acpshift/folds.hpp"
#include "acpshift/nuisance.hpp"
#include "acpshift/score.hpp"

namespace acpshift {

enum class Variant { WithACP, WithoutACP, ThetaWithACP, ThetaWithoutACP };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::WithACP: return "with-acp";
    case Variant::WithoutACP: return "without-acp";
    case Variant::ThetaWithACP: return "theta-with";
    case Variant::ThetaWithoutACP: return "theta-without";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "with-acp") return Variant::WithACP;
  if (s == "without-acp") return Variant::WithoutACP;
  if (s == "theta-with") return Variant::ThetaWithACP;
  if (s == "theta-without") return Variant::ThetaWithoutACP;
  throw ConfigError("unknown variant '" + s + "'");
}

inline bool is_theta(Variant v) {
  return v == Variant::ThetaWithACP || v == Variant::ThetaWithoutACP;
}
inline bool uses_acp(Variant v) {
  return v == Variant::WithACP || v == Variant::ThetaWithACP;
}

struct SolverConfig {
  int max_iterations = 100;
  double damping = 0.5;
  int max_halvings = 30;
  double tolerance = 1e-10;  // on the sup-norm of the estimating equation
  VectorXd initial_beta;     // zero vector when empty

  void validate() const {
    if (!(tolerance > 0.0)) throw ConfigError("solver tolerance must be positive");
  }
};

// The three additive pieces of the Scenario II efficient influence function.
struct EifTerms {
  VectorXd labeled_residual;  // (r/pi) w(x) {s - mtilde}
  VectorXd shrinkage;         // w/(pi + (1-pi)w) {mtilde - m}
  VectorXd projection;        // ((1-r)/(1-pi)) m
  VectorXd contribution() const { return labeled_residual + shrinkage + projection; }
};

inline EifTerms eif_terms_with_acp(const Observation& obs, const NuisanceSet& ns,
                                   const VectorXd& beta, double pi, const ScoreModel& model) {
  if (!obs.yhat) throw MissingACP("observation lacks yhat");
  const VectorXd a = model.design(obs.x);
  const double g = model.link(a.dot(beta));
  const double mu = ns.mu_hat(obs.x);
  const double mt = ns.mu_tilde_hat(obs.x, *obs.yhat);
  const double w = ns.w_hat(obs.x);
  const double shrink = w / (pi + (1.0 - pi) * w);

  EifTerms terms;
  terms.labeled_residual =
      obs.r == 1 ? VectorXd((1.0 / pi) * w * (*obs.y - mt) * a) : VectorXd(VectorXd::Zero(a.size()));
  terms.shrinkage = shrink * (mt - mu) * a;
  terms.projection = obs.r == 0 ? VectorXd((1.0 / (1.0 - pi)) * (mu - g) * a)
                                : VectorXd(VectorXd::Zero(a.size()));
  return terms;
}

inline VectorXd eif_with_acp(const Observation& obs, const NuisanceSet& ns, const VectorXd& beta,
                             double pi, const ScoreModel& model) {
  return eif_terms_with_acp(obs, ns, beta, pi, model).contribution();
}

inline VectorXd eif_without_acp(const Observation& obs, const NuisanceSet& ns,
                                const VectorXd& beta, double pi, const ScoreModel& model) {
  const VectorXd a = model.design(obs.x);
  const double g = model.link(a.dot(beta));
  const double mu = ns.mu_hat(obs.x);
  VectorXd out = VectorXd::Zero(a.size());
  if (obs.r == 1) out += (1.0 / pi) * ns.w_hat(obs.x) * (*obs.y - mu) * a;
  if (obs.r == 0) out += (1.0 / (1.0 - pi)) * (mu - g) * a;
  return out;
}

// Combined-population influence function: the labeled
// residual is reweighted by 1/pihat(x) and the projection applies to all units.
inline VectorXd eif_theta(const Observation& obs, const NuisanceSet& ns, const VectorXd& theta,
                          const ScoreModel& model, bool with_acp) {
  const VectorXd a = model.design(obs.x);
  const double g = model.link(a.dot(theta));
  double proj;
  if (with_acp) {
    if (!obs.yhat) throw MissingACP("observation lacks yhat");
    proj = ns.mu_tilde_hat(obs.x, *obs.yhat);
  } else {
    proj = ns.mu_hat(obs.x);
  }
  VectorXd out = (proj - g) * a;
  if (obs.r == 1) out += (1.0 / ns.pi_hat(obs.x)) * (*obs.y - proj) * a;
  return out;
}

namespace detail {

// Per-observation quantities frozen before the Newton loop; everything except
// the final link term is beta-free under the score factorization.
struct PreparedSample {
  const Dataset* data = nullptr;
  const ScoreModel* model = nullptr;
  Variant variant = Variant::WithoutACP;
  double pi = 0.5;
  int d = 0;
  std::vector<double> fold_weight;  // u_i = 1/(K * M_fold(i))
  std::vector<VectorXd> design;     // a(x_i)
  std::vector<double> mu, mu_tilde, w, shrink, inv_pi_hat;
  std::vector<double> obs_weight;   // bootstrap perturbation weights (1 by default)

  int size() const { return data->size(); }
};

inline PreparedSample prepare(const Dataset& data, const FoldPlan& plan,
                              const std::vector<NuisanceSet>& nuisances, const ScoreModel& model,
                              Variant variant, const VectorXd* perturb = nullptr) {
  if (static_cast<int>(nuisances.size()) != plan.K)
    throw DimensionMismatch("expected one NuisanceSet per fold");
  PreparedSample ps;
  ps.data = &data;
  ps.model = &model;
  ps.variant = variant;
  ps.pi = data.pi();
  ps.d = model.dim();
  const int M = data.size();
  ps.fold_weight.resize(M);
  ps.design.resize(M);
  ps.mu.resize(M);
  ps.mu_tilde.assign(M, 0.0);
  ps.w.assign(M, 1.0);
  ps.shrink.assign(M, 1.0);
  ps.inv_pi_hat.assign(M, 1.0);
  ps.obs_weight.assign(M, 1.0);
  const bool acp = uses_acp(variant);
  const bool theta = is_theta(variant);
  for (int i = 0; i < M; ++i) {
    const int k = plan.assignment[i];
    const NuisanceSet& ns = nuisances[k];
    const Observation& o = data.obs[i];
    ps.fold_weight[i] = 1.0 / (static_cast<double>(plan.K) * plan.fold_sizes[k]);
    ps.design[i] = model.design(o.x);
    ps.mu[i] = ns.mu_hat(o.x);
    if (acp) {
      if (!o.yhat) throw MissingACP("with-ACP variant requires yhat on every observation");
      ps.mu_tilde[i] = ns.mu_tilde_hat(o.x, *o.yhat);
    }
    if (theta) {
      ps.inv_pi_hat[i] = 1.0 / ns.pi_hat(o.x);
    } else {
      const double w = ns.w_hat(o.x);
      ps.w[i] = w;
      ps.shrink[i] = w / (ps.pi + (1.0 - ps.pi) * w);
    }
    if (perturb) ps.obs_weight[i] = (*perturb)[i];
  }
  return ps;
}

// Scalar part of the influence-function contribution: phi_i = c_i * a(x_i),
// with g = link(a_i'beta) precomputed by the caller.
inline double phi_scalar(const PreparedSample& ps, int i, double g) {
  const Observation& o = ps.data->obs[i];
  const bool acp = uses_acp(ps.variant);
  double c = 0.0;
  if (is_theta(ps.variant)) {
    const double proj = acp ? ps.mu_tilde[i] : ps.mu[i];
    c = proj - g;
    if (o.r == 1) c += ps.inv_pi_hat[i] * (*o.y - proj);
  } else {
    if (o.r == 1) {
      const double resid_target = acp ? ps.mu_tilde[i] : ps.mu[i];
      c += (1.0 / ps.pi) * ps.w[i] * (*o.y - resid_target);
    } else {
      c += (1.0 / (1.0 - ps.pi)) * (ps.mu[i] - g);
    }
    if (acp) c += ps.shrink[i] * (ps.mu_tilde[i] - ps.mu[i]);
  }
  return c;
}

// Cross-fitted estimating equation N(beta) = (1/K) sum_k Ehat_k[phi].
inline VectorXd equation_value(const PreparedSample& ps, const VectorXd& beta) {
  VectorXd acc = VectorXd::Zero(ps.d);
  for (int i = 0; i < ps.size(); ++i) {
    const VectorXd& a = ps.design[i];
    const double g = ps.model->link(a.dot(beta));
    const double c = phi_scalar(ps, i, g);
    acc += (ps.fold_weight[i] * ps.obs_weight[i] * c) * a;
  }
  return acc;
}

// Analytic Jacobian of the equation: only the trailing g(a'beta) term moves.
inline MatrixXd equation_jacobian(const PreparedSample& ps, const VectorXd& beta) {
  MatrixXd acc = MatrixXd::Zero(ps.d, ps.d);
  const bool theta = is_theta(ps.variant);
  for (int i = 0; i < ps.size(); ++i) {
    const Observation& o = ps.data->obs[i];
    if (!theta && o.r == 1) continue;
    const VectorXd& a = ps.design[i];
    const double gp = ps.model->link_deriv(a.dot(beta));
    const double scale = theta ? 1.0 : 1.0 / (1.0 - ps.pi);
    acc -= (ps.fold_weight[i] * ps.obs_weight[i] * scale * gp) * (a * a.transpose());
  }
  return acc;
}

struct SolveOutcome {
  VectorXd beta;
  int iterations = 0;
  double max_residual = 0.0;
  bool used_fallback = false;
};

inline SolveOutcome solve_equation(const PreparedSample& ps, const SolverConfig& solver) {
  solver.validate();
  VectorXd beta = solver.initial_beta.size() == ps.d ? solver.initial_beta : VectorXd::Zero(ps.d);
  SolveOutcome out;
  VectorXd value = equation_value(ps, beta);
  double residual = value.cwiseAbs().maxCoeff();
  for (int iter = 0; iter <= solver.max_iterations; ++iter) {
    if (residual <= solver.tolerance) {
      out.beta = beta;
      out.iterations = iter;
      out.max_residual = residual;
      return out;
    }
    if (iter == solver.max_iterations) break;

    const MatrixXd jac = equation_jacobian(ps, beta);
    Eigen::FullPivLU<MatrixXd> lu(jac);
    VectorXd step;
    if (lu.isInvertible()) {
      step = lu.solve(-value);
    } else {
      // Damped least-squares direction when the Jacobian is rank deficient.
      out.used_fallback = true;
      step = jac.completeOrthogonalDecomposition().solve(-value);
      if (!step.allFinite() || step.cwiseAbs().maxCoeff() == 0.0)
        throw SingularJacobian("estimating-equation Jacobian is singular with no descent direction");
    }

    double t = 1.0;
    VectorXd trial_beta, trial_value;
    double trial_residual = residual;
    bool improved = false;
    for (int h = 0; h <= solver.max_halvings; ++h) {
      trial_beta = beta + t * step;
      trial_value = equation_value(ps, trial_beta);
      trial_residual = trial_value.cwiseAbs().maxCoeff();
      if (trial_residual < residual) {
        improved = true;
        break;
      }
      t *= solver.damping;
    }
    if (!improved)
      throw NoConvergence("no step reduced the residual (currently " + std::to_string(residual) + ")");
    beta = trial_beta;
    value = trial_value;
    residual = trial_residual;
  }
  throw NoConvergence("Newton iterations exhausted with residual " + std::to_string(residual));
}

}  // namespace detail

inline VectorXd estimating_equation(const Dataset& data, const FoldPlan& plan,
                                    const std::vector<NuisanceSet>& nuisances,
                                    const VectorXd& beta, const ScoreModel& model,
                                    Variant variant) {
  return detail::equation_value(detail::prepare(data, plan, nuisances, model, variant), beta);
}

struct SolveResult {
  VectorXd beta;
  int iterations = 0;
  double max_residual = 0.0;
};

inline SolveResult solve_beta(const Dataset& data, const FoldPlan& plan,
                              const std::vector<NuisanceSet>& nuisances, const ScoreModel& model,
                              Variant variant, const SolverConfig& solver = {}) {
  const auto ps = detail::prepare(data, plan, nuisances, model, variant);
  const auto out = detail::solve_equation(ps, solver);
  return {out.beta, out.iterations, out.max_residual};
}

}  // namespace acpshift
