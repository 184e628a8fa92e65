#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <vector>

#include "acpshift/common.hpp"
#include "acpshift/errors.hpp"

namespace acpshift {

// Base learner over feature rows. Fitting takes per-observation weights so
// that perturbation-bootstrap replicates can reuse the same architecture.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual void fit(const MatrixXd& features, const VectorXd& y, const VectorXd& w) = 0;
  virtual double predict(const VectorXd& x) const = 0;
  virtual std::unique_ptr<Learner> clone_unfitted() const = 0;
  virtual const char* name() const = 0;
};

namespace detail {

inline MatrixXd with_intercept(const MatrixXd& features) {
  MatrixXd design(features.rows(), features.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(features.cols()) = features;
  return design;
}

// Ridge level from the design scale; intercept stays unpenalized.
inline double ridge_lambda(const MatrixXd& gram) {
  return 1e-6 * gram.trace() / static_cast<double>(gram.cols());
}

}  // namespace detail

// Linear regression with a small ridge penalty on the non-intercept block.
class LinearGlmLearner final : public Learner {
 public:
  void fit(const MatrixXd& features, const VectorXd& y, const VectorXd& w) override {
    const MatrixXd design = detail::with_intercept(features);
    const MatrixXd gram = design.transpose() * w.asDiagonal() * design;
    const double lambda = detail::ridge_lambda(gram);
    MatrixXd lhs = gram;
    for (int j = 1; j < lhs.cols(); ++j) lhs(j, j) += lambda;
    const VectorXd rhs = design.transpose() * (w.cwiseProduct(y));
    coef_ = lhs.ldlt().solve(rhs);
    if (!coef_.allFinite()) throw SingularDesign("linear GLM solve produced non-finite coefficients");
  }

  double predict(const VectorXd& x) const override {
    return coef_[0] + coef_.tail(coef_.size() - 1).dot(x);
  }

  std::unique_ptr<Learner> clone_unfitted() const override {
    return std::make_unique<LinearGlmLearner>();
  }
  const char* name() const override { return "glm"; }

 private:
  VectorXd coef_;
};

// Logistic regression via damped IRLS with the same ridge penalty.
class LogisticGlmLearner final : public Learner {
 public:
  void fit(const MatrixXd& features, const VectorXd& y, const VectorXd& w) override {
    const MatrixXd design = detail::with_intercept(features);
    const int d = static_cast<int>(design.cols());
    const double lambda = detail::ridge_lambda(design.transpose() * w.asDiagonal() * design);

    coef_ = VectorXd::Zero(d);
    double loss = penalized_loss(design, y, w, lambda, coef_);
    for (int iter = 0; iter < 100; ++iter) {
      VectorXd eta = design * coef_;
      VectorXd grad = lambda * coef_;
      grad[0] -= lambda * coef_[0];
      MatrixXd hess = MatrixXd::Zero(d, d);
      for (int j = 1; j < d; ++j) hess(j, j) = lambda;
      for (int i = 0; i < design.rows(); ++i) {
        const double p = expit(clip(eta[i], -30.0, 30.0));
        grad += w[i] * (p - y[i]) * design.row(i).transpose();
        hess += (w[i] * std::max(p * (1.0 - p), 1e-10)) * design.row(i).transpose() * design.row(i);
      }
      VectorXd step = hess.ldlt().solve(grad);
      if (!step.allFinite()) throw SingularDesign("logistic GLM IRLS step is non-finite");
      double t = 1.0;
      VectorXd trial;
      double trial_loss = loss;
      for (int h = 0; h < 30; ++h) {
        trial = coef_ - t * step;
        trial_loss = penalized_loss(design, y, w, lambda, trial);
        if (trial_loss <= loss) break;
        t *= 0.5;
      }
      const double delta = (trial - coef_).cwiseAbs().maxCoeff();
      coef_ = trial;
      loss = trial_loss;
      if (delta < 1e-10) break;
    }
  }

  double predict(const VectorXd& x) const override {
    const double eta = coef_[0] + coef_.tail(coef_.size() - 1).dot(x);
    return expit(clip(eta, -30.0, 30.0));
  }

  std::unique_ptr<Learner> clone_unfitted() const override {
    return std::make_unique<LogisticGlmLearner>();
  }
  const char* name() const override { return "glm"; }

 private:
  static double penalized_loss(const MatrixXd& design, const VectorXd& y, const VectorXd& w,
                               double lambda, const VectorXd& coef) {
    double loss = 0.0;
    const VectorXd eta = design * coef;
    for (int i = 0; i < design.rows(); ++i) {
      const double e = clip(eta[i], -30.0, 30.0);
      // -log L = log(1 + exp(e)) - y*e, stable form
      loss += w[i] * ((e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - y[i] * e);
    }
    return loss + 0.5 * lambda * coef.tail(coef.size() - 1).squaredNorm();
  }

  VectorXd coef_;
};

// k-nearest neighbours on standardized features; weighted neighbour mean.
class KnnLearner final : public Learner {
 public:
  explicit KnnLearner(int k) : k_(k) {}

  void fit(const MatrixXd& features, const VectorXd& y, const VectorXd& w) override {
    train_ = features;
    y_ = y;
    w_ = w;
    center_ = features.colwise().mean();
    scale_.resize(features.cols());
    for (int j = 0; j < features.cols(); ++j) {
      const double var = (features.col(j).array() - center_[j]).square().mean();
      scale_[j] = std::max(std::sqrt(var), 1e-12);
    }
    for (int i = 0; i < train_.rows(); ++i)
      train_.row(i) = standardize(train_.row(i).transpose()).transpose();
  }

  double predict(const VectorXd& x) const override {
    const VectorXd q = standardize(x);
    const int n = static_cast<int>(train_.rows());
    const int k = std::min(k_, n);
    std::vector<std::pair<double, int>> dist(n);
    for (int i = 0; i < n; ++i)
      dist[i] = {(train_.row(i).transpose() - q).squaredNorm(), i};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double num = 0.0, den = 0.0;
    for (int j = 0; j < k; ++j) {
      const int i = dist[j].second;
      num += w_[i] * y_[i];
      den += w_[i];
    }
    if (den <= 0.0) {
      for (int j = 0; j < k; ++j) num += y_[dist[j].second];
      return num / k;
    }
    return num / den;
  }

  std::unique_ptr<Learner> clone_unfitted() const override {
    return std::make_unique<KnnLearner>(k_);
  }
  const char* name() const override { return "knn"; }

 private:
  VectorXd standardize(const VectorXd& x) const {
    return (x - center_).cwiseQuotient(scale_);
  }

  int k_;
  MatrixXd train_;
  VectorXd y_, w_, center_, scale_;
};

// Depth-limited CART regression tree with weighted variance splitting.
class RegressionTreeLearner final : public Learner {
 public:
  explicit RegressionTreeLearner(int max_depth, int min_leaf = 5)
      : max_depth_(max_depth), min_leaf_(min_leaf) {}

  void fit(const MatrixXd& features, const VectorXd& y, const VectorXd& w) override {
    nodes_.clear();
    std::vector<int> idx(features.rows());
    std::iota(idx.begin(), idx.end(), 0);
    build(features, y, w, idx, 0);
  }

  double predict(const VectorXd& x) const override {
    int node = 0;
    for (;;) {
      const Node& nd = nodes_[node];
      if (nd.feature < 0) return nd.value;
      node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
  }

  std::unique_ptr<Learner> clone_unfitted() const override {
    return std::make_unique<RegressionTreeLearner>(max_depth_, min_leaf_);
  }
  const char* name() const override { return "tree"; }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
  };

  int build(const MatrixXd& X, const VectorXd& y, const VectorXd& w, const std::vector<int>& idx,
            int depth) {
    const int node = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    double sw = 0.0, swy = 0.0;
    for (int i : idx) {
      sw += w[i];
      swy += w[i] * y[i];
    }
    const double mean = sw > 0.0 ? swy / sw : 0.0;
    nodes_[node].value = mean;
    if (depth >= max_depth_ || static_cast<int>(idx.size()) < 2 * min_leaf_) return node;

    int best_feature = -1;
    double best_threshold = 0.0, best_gain = 1e-12;
    std::vector<int> order(idx);
    for (int j = 0; j < X.cols(); ++j) {
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return X(a, j) < X(b, j) || (X(a, j) == X(b, j) && a < b);
      });
      double lw = 0.0, lwy = 0.0, lwy2 = 0.0;
      double rw = sw, rwy = swy, rwy2 = 0.0;
      for (int i : idx) rwy2 += w[i] * y[i] * y[i];
      const double parent_sse = rwy2 - (sw > 0 ? swy * swy / sw : 0.0);
      for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
        const int i = order[pos];
        lw += w[i];
        lwy += w[i] * y[i];
        lwy2 += w[i] * y[i] * y[i];
        rw -= w[i];
        rwy -= w[i] * y[i];
        rwy2 -= w[i] * y[i] * y[i];
        if (static_cast<int>(pos) + 1 < min_leaf_ ||
            static_cast<int>(order.size() - pos - 1) < min_leaf_)
          continue;
        const double v = X(i, j), vnext = X(order[pos + 1], j);
        if (v == vnext) continue;
        const double sse = (lwy2 - (lw > 0 ? lwy * lwy / lw : 0.0)) +
                           (rwy2 - (rw > 0 ? rwy * rwy / rw : 0.0));
        const double gain = parent_sse - sse;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = j;
          best_threshold = 0.5 * (v + vnext);
        }
      }
    }
    if (best_feature < 0) return node;

    std::vector<int> left, right;
    for (int i : idx)
      (X(i, best_feature) <= best_threshold ? left : right).push_back(i);
    if (left.empty() || right.empty()) return node;
    nodes_[node].feature = best_feature;
    nodes_[node].threshold = best_threshold;
    const int l = build(X, y, w, left, depth + 1);
    nodes_[node].left = l;
    const int r = build(X, y, w, right, depth + 1);
    nodes_[node].right = r;
    return node;
  }

  int max_depth_;
  int min_leaf_;
  std::vector<Node> nodes_;
};

}  // namespace acpshift
