#pragma once

#include <string>

#include "acpshift/common.hpp"
#include "acpshift/errors.hpp"

namespace acpshift {

enum class ScoreKind { MeanTarget, LinearGLM, LogisticGLM };

inline const char* to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::MeanTarget: return "mean";
    case ScoreKind::LinearGLM: return "linear";
    case ScoreKind::LogisticGLM: return "logistic";
  }
  return "?";
}

// An estimand of the form s(y, x; beta) = {y - g(a(x)'beta)} * a(x), where
// a(x) is 1 for the mean target and (1, x) for the GLM targets. Conditional
// means of s then follow from regressions of Y alone:
//   m(x)       = {mu(x)       - g(a'beta)} * a(x)
//   mtilde(x,yhat) = {mutilde(x,yhat) - g(a'beta)} * a(x),
// so the fitted nuisances never depend on beta.
class ScoreModel {
 public:
  static ScoreModel mean_target() { return ScoreModel(ScoreKind::MeanTarget, 0); }
  static ScoreModel linear_glm(int p) { return ScoreModel(ScoreKind::LinearGLM, p); }
  static ScoreModel logistic_glm(int p) { return ScoreModel(ScoreKind::LogisticGLM, p); }

  static ScoreModel make(ScoreKind kind, int p) {
    switch (kind) {
      case ScoreKind::MeanTarget: return mean_target();
      case ScoreKind::LinearGLM: return linear_glm(p);
      case ScoreKind::LogisticGLM: return logistic_glm(p);
    }
    throw DimensionMismatch("unknown score kind");
  }

  ScoreKind kind() const { return kind_; }
  int covariate_dim() const { return p_; }
  int dim() const { return kind_ == ScoreKind::MeanTarget ? 1 : p_ + 1; }

  // Design map a(x); leading intercept for the GLM targets.
  VectorXd design(const VectorXd& x) const {
    check_x(x);
    if (kind_ == ScoreKind::MeanTarget) return VectorXd::Ones(1);
    VectorXd a(p_ + 1);
    a[0] = 1.0;
    a.tail(p_) = x;
    return a;
  }

  double link(double t) const { return kind_ == ScoreKind::LogisticGLM ? expit(t) : t; }
  double link_deriv(double t) const { return kind_ == ScoreKind::LogisticGLM ? expit_deriv(t) : 1.0; }

  double linear_predictor(const VectorXd& x, const VectorXd& beta) const {
    check_beta(beta);
    return design(x).dot(beta);
  }

  // s(y, x; beta)
  VectorXd score(double y, const VectorXd& x, const VectorXd& beta) const {
    const VectorXd a = design(x);
    check_beta(beta);
    return (y - link(a.dot(beta))) * a;
  }

  // d s / d beta' = -g'(a'beta) * a * a'; depends on x only.
  MatrixXd score_jacobian(const VectorXd& x, const VectorXd& beta) const {
    const VectorXd a = design(x);
    check_beta(beta);
    return -link_deriv(a.dot(beta)) * (a * a.transpose());
  }

 private:
  ScoreModel(ScoreKind kind, int p) : kind_(kind), p_(p) {}

  void check_x(const VectorXd& x) const {
    if (kind_ != ScoreKind::MeanTarget && static_cast<int>(x.size()) != p_)
      throw DimensionMismatch("covariate vector has length " + std::to_string(x.size()) +
                              ", model expects " + std::to_string(p_));
  }
  void check_beta(const VectorXd& beta) const {
    if (static_cast<int>(beta.size()) != dim())
      throw DimensionMismatch("beta has length " + std::to_string(beta.size()) +
                              ", model expects " + std::to_string(dim()));
  }

  ScoreKind kind_;
  int p_;
};

inline ScoreKind parse_score_kind(const std::string& s) {
  if (s == "mean") return ScoreKind::MeanTarget;
  if (s == "linear") return ScoreKind::LinearGLM;
  if (s == "logistic") return ScoreKind::LogisticGLM;
  throw ConfigError("unknown estimand '" + s + "' (expected mean|linear|logistic)");
}

}  // namespace acpshift
