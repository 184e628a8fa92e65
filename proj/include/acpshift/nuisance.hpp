#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "acpshift/data.hpp"
#include "acpshift/errors.hpp"
#include "acpshift/folds.hpp"
#include "acpshift/stacking.hpp"

namespace acpshift {

struct LearnerConfig {
  bool use_glm = true;
  bool use_knn = true;
  bool use_tree = true;
  int stacking_folds = 5;  // V
  int knn_k = 10;
  int tree_depth = 4;
  double clip_eps = 0.01;
  bool fast_mode = false;  // GLM-only ensemble

  static LearnerConfig fast() {
    LearnerConfig cfg;
    cfg.fast_mode = true;
    return cfg;
  }

  void validate() const {
    if (!(clip_eps > 0.0 && clip_eps <= 0.1))
      throw ConfigError("clip_eps must lie in (0, 0.1]");
    if (!use_glm && !use_knn && !use_tree)
      throw ConfigError("at least one base learner must be enabled");
    if (stacking_folds < 2) throw ConfigError("stacking_folds must be >= 2");
  }

  std::vector<std::unique_ptr<Learner>> prototypes(Family family) const {
    validate();
    std::vector<std::unique_ptr<Learner>> protos;
    if (use_glm) {
      if (family == Family::Binary)
        protos.push_back(std::make_unique<LogisticGlmLearner>());
      else
        protos.push_back(std::make_unique<LinearGlmLearner>());
    }
    if (!fast_mode) {
      if (use_knn) protos.push_back(std::make_unique<KnnLearner>(knn_k));
      if (use_tree) protos.push_back(std::make_unique<RegressionTreeLearner>(tree_depth));
    }
    if (protos.empty()) protos.push_back(family == Family::Binary
                                             ? std::unique_ptr<Learner>(std::make_unique<LogisticGlmLearner>())
                                             : std::unique_ptr<Learner>(std::make_unique<LinearGlmLearner>()));
    return protos;
  }
};

// Per-fold nuisance functions; immutable and safe to share across threads.
struct NuisanceSet {
  int fold = -1;
  std::function<double(const VectorXd&)> pi_hat;                 // in [eps, 1-eps]
  std::function<double(const VectorXd&)> w_hat;                  // > 0
  std::function<double(const VectorXd&)> mu_hat;                 // E(Y | x)
  std::function<double(const VectorXd&, double)> mu_tilde_hat;   // E(Y | x, yhat)
  bool has_mu_tilde = false;
  double propensity_cv_loss = std::numeric_limits<double>::quiet_NaN();
  double mu_cv_loss = std::numeric_limits<double>::quiet_NaN();
  double mu_tilde_cv_loss = std::numeric_limits<double>::quiet_NaN();
};

// w(x) = pi/(1-pi) * (1-pihat(x))/pihat(x); positivity follows from clipping.
inline std::function<double(const VectorXd&)> propensity_to_density_ratio(
    std::function<double(const VectorXd&)> pi_hat, double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw ConfigError("pi must lie strictly in (0,1)");
  return [pi_hat = std::move(pi_hat), pi](const VectorXd& x) {
    const double p = pi_hat(x);
    return pi / (1.0 - pi) * (1.0 - p) / p;
  };
}

namespace detail {

struct Slice {
  MatrixXd features;
  VectorXd y;
  VectorXd w;
};

inline Slice gather(const Dataset& data, const std::vector<int>& idx,
                    const VectorXd* weights, bool append_yhat, bool target_is_r) {
  Slice s;
  const int cols = data.p + (append_yhat ? 1 : 0);
  s.features.resize(idx.size(), cols);
  s.y.resize(idx.size());
  s.w.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Observation& o = data.obs[idx[r]];
    s.features.row(r).head(data.p) = o.x.transpose();
    if (append_yhat) {
      if (!o.yhat) throw MissingACP("training unit lacks yhat");
      s.features(r, data.p) = *o.yhat;
    }
    s.y[r] = target_is_r ? static_cast<double>(o.r) : *o.y;
    s.w[r] = weights ? (*weights)[idx[r]] : 1.0;
  }
  return s;
}

}  // namespace detail

// Stacked classifier for pi(x) = pr(R = 1 | x) on a training slice that must
// contain both labeled and unlabeled units.
inline FittedRegressor fit_propensity(const Dataset& data, const std::vector<int>& idx,
                                      const LearnerConfig& cfg, const VectorXd* weights = nullptr) {
  int ones = 0;
  for (int i : idx) ones += data.obs[i].r;
  if (ones == 0 || ones == static_cast<int>(idx.size()))
    throw DegenerateLabels("propensity training slice has a single class");
  auto slice = detail::gather(data, idx, weights, /*append_yhat=*/false, /*target_is_r=*/true);
  return FittedRegressor::fit(cfg.prototypes(Family::Binary), slice.features, slice.y, slice.w,
                              Family::Binary, cfg.stacking_folds, cfg.clip_eps);
}

// Stacked regression of Y on x over labeled units.
inline FittedRegressor fit_mu(const Dataset& data, const std::vector<int>& labeled_idx,
                              const LearnerConfig& cfg, Family family,
                              const VectorXd* weights = nullptr) {
  const int min_units = std::max(2 * cfg.stacking_folds, 20);
  if (static_cast<int>(labeled_idx.size()) < min_units)
    throw TooFewSamples("regression training slice has " + std::to_string(labeled_idx.size()) +
                        " units, needs at least " + std::to_string(min_units));
  for (int i : labeled_idx)
    if (data.obs[i].r != 1 || !data.obs[i].y)
      throw MissingOutcomeOnLabeled("fit_mu slice must contain labeled units only");
  auto slice = detail::gather(data, labeled_idx, weights, false, false);
  return FittedRegressor::fit(cfg.prototypes(family), slice.features, slice.y, slice.w, family,
                              cfg.stacking_folds, cfg.clip_eps);
}

// Stacked regression of Y on (x, yhat) over labeled units.
inline FittedRegressor fit_mu_tilde(const Dataset& data, const std::vector<int>& labeled_idx,
                                    const LearnerConfig& cfg, Family family,
                                    const VectorXd* weights = nullptr) {
  const int min_units = std::max(2 * cfg.stacking_folds, 20);
  if (static_cast<int>(labeled_idx.size()) < min_units)
    throw TooFewSamples("regression training slice has " + std::to_string(labeled_idx.size()) +
                        " units, needs at least " + std::to_string(min_units));
  for (int i : labeled_idx)
    if (!data.obs[i].yhat) throw MissingACP("fit_mu_tilde training unit lacks yhat");
  auto slice = detail::gather(data, labeled_idx, weights, true, false);
  return FittedRegressor::fit(cfg.prototypes(family), slice.features, slice.y, slice.w, family,
                              cfg.stacking_folds, cfg.clip_eps);
}

struct FoldFits {
  int fold = -1;
  std::shared_ptr<const FittedRegressor> propensity;
  std::shared_ptr<const FittedRegressor> mu;
  std::shared_ptr<const FittedRegressor> mu_tilde;  // null when not fitted
};

struct CrossfitResult {
  std::vector<NuisanceSet> sets;
  std::vector<FoldFits> fits;
};

namespace detail {

inline NuisanceSet nuisance_from_fits(const FoldFits& fits, double pi) {
  NuisanceSet ns;
  ns.fold = fits.fold;
  auto prop = fits.propensity;
  ns.pi_hat = [prop](const VectorXd& x) { return prop->predict(x); };
  ns.w_hat = propensity_to_density_ratio(ns.pi_hat, pi);
  auto mu = fits.mu;
  ns.mu_hat = [mu](const VectorXd& x) { return mu->predict(x); };
  if (fits.mu_tilde) {
    auto mt = fits.mu_tilde;
    ns.mu_tilde_hat = [mt](const VectorXd& x, double yhat) {
      VectorXd f(x.size() + 1);
      f.head(x.size()) = x;
      f[x.size()] = yhat;
      return mt->predict(f);
    };
    ns.has_mu_tilde = true;
    ns.mu_tilde_cv_loss = fits.mu_tilde->cv_loss();
  }
  ns.propensity_cv_loss = fits.propensity->cv_loss();
  ns.mu_cv_loss = fits.mu->cv_loss();
  return ns;
}

}  // namespace detail

// Fits the fold-k nuisances on the complement D_k^c only.
inline CrossfitResult crossfit_nuisances(const Dataset& data, const FoldPlan& plan,
                                         const LearnerConfig& cfg, Family family, bool with_acp,
                                         const VectorXd* weights = nullptr) {
  CrossfitResult out;
  const double pi = data.pi();
  for (int k = 0; k < plan.K; ++k) {
    const auto train = plan.complement_indices(k);
    std::vector<int> labeled;
    for (int i : train)
      if (data.obs[i].r == 1) labeled.push_back(i);

    FoldFits fits;
    fits.fold = k;
    fits.propensity =
        std::make_shared<const FittedRegressor>(fit_propensity(data, train, cfg, weights));
    fits.mu = std::make_shared<const FittedRegressor>(fit_mu(data, labeled, cfg, family, weights));
    if (with_acp)
      fits.mu_tilde =
          std::make_shared<const FittedRegressor>(fit_mu_tilde(data, labeled, cfg, family, weights));
    out.sets.push_back(detail::nuisance_from_fits(fits, pi));
    out.fits.push_back(std::move(fits));
  }
  return out;
}

// Refits every member learner under new observation weights while keeping the
// fold plan and stacking weights fixed (perturbation bootstrap contract).
inline std::vector<NuisanceSet> refit_nuisances_weighted(const Dataset& data, const FoldPlan& plan,
                                                         const CrossfitResult& base,
                                                         const VectorXd& weights) {
  std::vector<NuisanceSet> out;
  const double pi = data.pi();
  for (int k = 0; k < plan.K; ++k) {
    const auto train = plan.complement_indices(k);
    std::vector<int> labeled;
    for (int i : train)
      if (data.obs[i].r == 1) labeled.push_back(i);

    const FoldFits& fits = base.fits[k];
    FoldFits refit;
    refit.fold = k;
    {
      auto slice = detail::gather(data, train, &weights, false, true);
      refit.propensity = std::make_shared<const FittedRegressor>(
          fits.propensity->refit(slice.features, slice.y, slice.w));
    }
    {
      auto slice = detail::gather(data, labeled, &weights, false, false);
      refit.mu = std::make_shared<const FittedRegressor>(
          fits.mu->refit(slice.features, slice.y, slice.w));
    }
    if (fits.mu_tilde) {
      auto slice = detail::gather(data, labeled, &weights, true, false);
      refit.mu_tilde = std::make_shared<const FittedRegressor>(
          fits.mu_tilde->refit(slice.features, slice.y, slice.w));
    }
    out.push_back(detail::nuisance_from_fits(refit, pi));
  }
  return out;
}

}  // namespace acpshift
