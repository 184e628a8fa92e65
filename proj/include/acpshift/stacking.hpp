#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "acpshift/common.hpp"
#include "acpshift/errors.hpp"
#include "acpshift/learners.hpp"

namespace acpshift {

enum class Family { Continuous, Binary };

namespace detail {

// Euclidean projection onto the probability simplex (Duchi et al.).
inline VectorXd project_to_simplex(const VectorXd& v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0, theta = 0.0;
  for (int j = 0; j < n; ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / (j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  VectorXd w = (v.array() - theta).max(0.0);
  return w;
}

// Simplex-constrained least squares by enumerating active faces; exact for
// the small ensembles used here.
inline VectorXd simplex_least_squares(const MatrixXd& preds, const VectorXd& y, const VectorXd& w) {
  const int L = static_cast<int>(preds.cols());
  if (L == 1) return VectorXd::Ones(1);
  VectorXd best = VectorXd::Ones(L) / L;
  double best_loss = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << L); ++mask) {
    std::vector<int> active;
    for (int l = 0; l < L; ++l)
      if (mask & (1u << l)) active.push_back(l);
    const int m = static_cast<int>(active.size());
    MatrixXd sub(preds.rows(), m);
    for (int c = 0; c < m; ++c) sub.col(c) = preds.col(active[c]);
    // KKT system for min ||y - Pw||_W^2 s.t. sum(w) = 1.
    MatrixXd kkt = MatrixXd::Zero(m + 1, m + 1);
    kkt.topLeftCorner(m, m) = 2.0 * sub.transpose() * w.asDiagonal() * sub;
    kkt.topRightCorner(m, 1).setOnes();
    kkt.bottomLeftCorner(1, m).setOnes();
    VectorXd rhs(m + 1);
    rhs.head(m) = 2.0 * sub.transpose() * (w.cwiseProduct(y));
    rhs[m] = 1.0;
    const VectorXd sol = kkt.fullPivLu().solve(rhs);
    if (!sol.allFinite()) continue;
    bool feasible = true;
    for (int c = 0; c < m; ++c)
      if (sol[c] < -1e-10) feasible = false;
    if (!feasible) continue;
    VectorXd cand = VectorXd::Zero(L);
    for (int c = 0; c < m; ++c) cand[active[c]] = std::max(sol[c], 0.0);
    cand /= cand.sum();
    const double loss = (w.array() * (y - preds * cand).array().square()).sum();
    if (loss < best_loss - 1e-14) {
      best_loss = loss;
      best = cand;
    }
  }
  return best;
}

inline double stack_log_loss(const MatrixXd& preds, const VectorXd& y, const VectorXd& w,
                             const VectorXd& weights) {
  const VectorXd p = preds * weights;
  double loss = 0.0;
  for (int i = 0; i < y.size(); ++i) {
    const double pi = clip(p[i], 1e-10, 1.0 - 1e-10);
    loss += w[i] * -(y[i] * std::log(pi) + (1.0 - y[i]) * std::log(1.0 - pi));
  }
  return loss / y.size();
}

// Simplex-constrained log-loss minimization via projected gradient descent.
inline VectorXd simplex_log_loss(const MatrixXd& preds, const VectorXd& y, const VectorXd& w) {
  const int L = static_cast<int>(preds.cols());
  if (L == 1) return VectorXd::Ones(1);
  VectorXd weights = VectorXd::Ones(L) / L;
  double loss = stack_log_loss(preds, y, w, weights);
  for (int iter = 0; iter < 500; ++iter) {
    const VectorXd p = preds * weights;
    VectorXd grad = VectorXd::Zero(L);
    for (int i = 0; i < y.size(); ++i) {
      const double pi = clip(p[i], 1e-10, 1.0 - 1e-10);
      grad += w[i] * ((pi - y[i]) / (pi * (1.0 - pi))) * preds.row(i).transpose();
    }
    grad /= y.size();
    double step = 1.0;
    VectorXd trial = weights;
    double trial_loss = loss;
    for (int h = 0; h < 40; ++h) {
      trial = project_to_simplex(weights - step * grad);
      trial_loss = stack_log_loss(preds, y, w, trial);
      if (trial_loss <= loss) break;
      step *= 0.5;
    }
    if (trial_loss > loss) break;
    const double move = (trial - weights).cwiseAbs().maxCoeff();
    weights = trial;
    loss = trial_loss;
    if (move < 1e-12) break;
  }
  return weights;
}

}  // namespace detail

// A stacking ensemble: members fit on the full training slice, combined with
// simplex weights chosen from V-fold out-of-fold predictions.
class FittedRegressor {
 public:
  FittedRegressor() = default;

  double predict(const VectorXd& features) const {
    double out = 0.0;
    for (std::size_t l = 0; l < members_.size(); ++l)
      out += weights_[l] * members_[l]->predict(features);
    if (family_ == Family::Binary) out = clip(out, clip_eps_, 1.0 - clip_eps_);
    return out;
  }

  const VectorXd& stacking_weights() const { return weights_; }
  const std::vector<double>& cv_losses() const { return cv_losses_; }
  double cv_loss() const { return stack_cv_loss_; }
  Family family() const { return family_; }

  // Refit every member on new (weighted) data, keeping the stacking weights;
  // used by the perturbation bootstrap.
  FittedRegressor refit(const MatrixXd& features, const VectorXd& y, const VectorXd& w) const {
    FittedRegressor out;
    out.weights_ = weights_;
    out.cv_losses_ = cv_losses_;
    out.stack_cv_loss_ = stack_cv_loss_;
    out.family_ = family_;
    out.clip_eps_ = clip_eps_;
    out.members_.reserve(members_.size());
    for (const auto& m : members_) {
      auto fresh = m->clone_unfitted();
      fresh->fit(features, y, w);
      out.members_.push_back(std::move(fresh));
    }
    return out;
  }

  static FittedRegressor fit(std::vector<std::unique_ptr<Learner>> prototypes,
                             const MatrixXd& features, const VectorXd& y, const VectorXd& w,
                             Family family, int cv_folds, double clip_eps) {
    const int n = static_cast<int>(features.rows());
    const int L = static_cast<int>(prototypes.size());
    const int V = std::min(cv_folds, n);

    // Out-of-fold predictions; folds are dealt round-robin by row position so
    // the result depends only on the slice itself.
    MatrixXd oof(n, L);
    for (int v = 0; v < V; ++v) {
      std::vector<int> train_rows, test_rows;
      for (int i = 0; i < n; ++i) (i % V == v ? test_rows : train_rows).push_back(i);
      if (train_rows.empty() || test_rows.empty()) continue;
      MatrixXd xtr(train_rows.size(), features.cols());
      VectorXd ytr(train_rows.size()), wtr(train_rows.size());
      for (std::size_t r = 0; r < train_rows.size(); ++r) {
        xtr.row(r) = features.row(train_rows[r]);
        ytr[r] = y[train_rows[r]];
        wtr[r] = w[train_rows[r]];
      }
      for (int l = 0; l < L; ++l) {
        auto learner = prototypes[l]->clone_unfitted();
        learner->fit(xtr, ytr, wtr);
        for (int i : test_rows) oof(i, l) = learner->predict(features.row(i).transpose());
      }
    }
    if (family == Family::Binary)
      oof = oof.array().max(clip_eps).min(1.0 - clip_eps);

    FittedRegressor out;
    out.family_ = family;
    out.clip_eps_ = clip_eps;
    out.weights_ = family == Family::Continuous ? detail::simplex_least_squares(oof, y, w)
                                                : detail::simplex_log_loss(oof, y, w);
    out.cv_losses_.resize(L);
    for (int l = 0; l < L; ++l) {
      if (family == Family::Continuous) {
        out.cv_losses_[l] = (w.array() * (y - oof.col(l)).array().square()).sum() / w.sum();
      } else {
        out.cv_losses_[l] = detail::stack_log_loss(oof.col(l), y, w, VectorXd::Ones(1)) * n / w.sum();
      }
    }
    out.stack_cv_loss_ =
        family == Family::Continuous
            ? (w.array() * (y - oof * out.weights_).array().square()).sum() / w.sum()
            : detail::stack_log_loss(oof, y, w, out.weights_) * n / w.sum();

    for (auto& proto : prototypes) {
      proto->fit(features, y, w);
      out.members_.push_back(std::move(proto));
    }
    return out;
  }

 private:
  std::vector<std::unique_ptr<Learner>> members_;
  VectorXd weights_;
  std::vector<double> cv_losses_;
  double stack_cv_loss_ = std::numeric_limits<double>::quiet_NaN();
  Family family_ = Family::Continuous;
  double clip_eps_ = 0.01;
};

}  // namespace acpshift
