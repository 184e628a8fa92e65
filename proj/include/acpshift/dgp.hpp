#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "acpshift/common.hpp"
#include "acpshift/data.hpp"
#include "acpshift/errors.hpp"
#include "acpshift/nuisance.hpp"
#include "acpshift/rng.hpp"

namespace acpshift {

enum class Outcome { Linear, Logistic };

inline const char* to_string(Outcome f) {
  return f == Outcome::Linear ? "linear" : "logistic";
}

inline Outcome parse_outcome(const std::string& s) {
  if (s == "linear") return Outcome::Linear;
  if (s == "logistic") return Outcome::Logistic;
  throw ConfigError("unknown outcome family '" + s + "' (expected linear|logistic)");
}

// Synthetic generator: (X, Z) ~ N(0, I_{p+1} + Lambda) with cov(X1, Z) = zeta,
// Y from the linear or logistic model with ACP signal alpha, labeling
// R ~ Bernoulli(expit(eta'X)). The ACP is yhat = Z.
struct DgpSpec {
  int p = 5;
  double alpha_signal = 0.0;
  double zeta = 0.0;
  Outcome family = Outcome::Linear;
  VectorXd xi;   // (1, 0.5, 0.5, 0.5, 0.5)
  VectorXd eta;  // ones

  DgpSpec() {
    xi.resize(5);
    xi << 1.0, 0.5, 0.5, 0.5, 0.5;
    eta = VectorXd::Ones(5);
  }

  void validate() const {
    if (!(zeta >= 0.0 && zeta <= 1.0)) throw ConfigError("zeta must lie in [0, 1]");
    if (p != 5 || xi.size() != 5 || eta.size() != 5)
      throw ConfigError("the synthetic family is defined for p = 5");
  }

  std::string key() const {
    return "p=" + std::to_string(p) + "|alpha=" + std::to_string(alpha_signal) +
           "|zeta=" + std::to_string(zeta) + "|family=" + to_string(family);
  }
};

struct DgpDraw {
  VectorXd x;
  double z = 0.0;
  double y = 0.0;
  double pi0 = 0.0;  // expit(eta'x)
};

namespace dgp_detail {

inline double mean_response(const DgpSpec& spec, const VectorXd& x, double z) {
  return 1.0 + spec.xi.dot(x) + spec.alpha_signal * z;
}

}  // namespace dgp_detail

// One draw from the full population (covariates, ACP signal, outcome, pi0).
inline DgpDraw dgp_draw(const DgpSpec& spec, Rng& rng) {
  DgpDraw d;
  d.x.resize(spec.p);
  for (int j = 0; j < spec.p; ++j) d.x[j] = rng.normal();
  // zeta = 1 is the exact degenerate limit Z = X1.
  d.z = spec.zeta == 1.0 ? d.x[0]
                         : spec.zeta * d.x[0] + std::sqrt(1.0 - spec.zeta * spec.zeta) * rng.normal();
  d.pi0 = expit(spec.eta.dot(d.x));
  const double lin = dgp_detail::mean_response(spec, d.x, d.z);
  d.y = spec.family == Outcome::Linear ? lin + rng.normal()
                                       : (rng.bernoulli(expit(lin)) ? 1.0 : 0.0);
  return d;
}

inline double true_propensity(const DgpSpec& spec, const VectorXd& x) {
  return expit(spec.eta.dot(x));
}

// E(Y | x, z): the regression truth.
inline double true_mu_tilde(const DgpSpec& spec, const VectorXd& x, double z) {
  const double lin = dgp_detail::mean_response(spec, x, z);
  return spec.family == Outcome::Linear ? lin : expit(lin);
}

// E(Y | x), integrating Z | X ~ N(zeta*x1, 1 - zeta^2). Closed form for the
// linear family; 64-point Gauss-Hermite for the logistic family.
inline double true_mu(const DgpSpec& spec, const VectorXd& x) {
  const double zmean = spec.zeta * x[0];
  if (spec.family == Outcome::Linear)
    return 1.0 + spec.xi.dot(x) + spec.alpha_signal * zmean;
  static const GaussHermite gh = gauss_hermite(64);
  const double zsd = std::sqrt(std::max(0.0, 1.0 - spec.zeta * spec.zeta));
  const double base = 1.0 + spec.xi.dot(x);
  double acc = 0.0;
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (int i = 0; i < gh.nodes.size(); ++i) {
    const double z = zmean + std::numbers::sqrt2 * zsd * gh.nodes[i];
    acc += gh.weights[i] * inv_sqrt_pi * expit(base + spec.alpha_signal * z);
  }
  return acc;
}

// Marginal labeling rate pr(R = 1) = E[expit(eta'X)] by plain Monte Carlo.
inline double marginal_labeling_rate(const DgpSpec& spec, long mc_n = 10'000'000,
                                     std::uint64_t seed = 0x51ab5eedULL) {
  Rng rng(derive_seed(seed, {tag("marginal-pi")}));
  double acc = 0.0;
  VectorXd x(spec.p);
  for (long i = 0; i < mc_n; ++i) {
    for (int j = 0; j < spec.p; ++j) x[j] = rng.normal();
    acc += expit(spec.eta.dot(x));
  }
  return acc / static_cast<double>(mc_n);
}

// Ground-truth nuisance functions packaged for injection into the estimator.
// `margin_pi` is the population labeling rate used for the density-ratio
// identity (the estimator itself uses its sample n/M instead).
inline NuisanceSet analytic_nuisances(const DgpSpec& spec, double margin_pi) {
  NuisanceSet ns;
  ns.fold = -1;
  ns.pi_hat = [spec](const VectorXd& x) { return true_propensity(spec, x); };
  ns.w_hat = propensity_to_density_ratio(ns.pi_hat, margin_pi);
  ns.mu_hat = [spec](const VectorXd& x) { return true_mu(spec, x); };
  ns.mu_tilde_hat = [spec](const VectorXd& x, double yhat) {
    return true_mu_tilde(spec, x, yhat);
  };
  ns.has_mu_tilde = true;
  return ns;
}

// Exact-quota sampling: units are drawn from the joint law and retained until
// each stratum is full, which preserves p(x) = P(x | R=1) and q(x) = P(x | R=0).
inline Dataset gen_dataset(const DgpSpec& spec, int n, int N, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, {tag("dataset")}));
  Dataset data;
  data.p = spec.p;
  data.scenario = Scenario::II;
  data.obs.reserve(n + N);
  int labeled = 0, unlabeled = 0;
  VectorXd x(spec.p);
  while (labeled < n || unlabeled < N) {
    for (int j = 0; j < spec.p; ++j) x[j] = rng.normal();
    const double z = spec.zeta == 1.0
                         ? x[0]
                         : spec.zeta * x[0] + std::sqrt(1.0 - spec.zeta * spec.zeta) * rng.normal();
    const int r = rng.bernoulli(expit(spec.eta.dot(x))) ? 1 : 0;
    if (r == 1) {
      if (labeled >= n) continue;
      Observation o;
      o.r = 1;
      o.x = x;
      o.yhat = z;
      const double lin = dgp_detail::mean_response(spec, x, z);
      o.y = spec.family == Outcome::Linear ? lin + rng.normal()
                                           : (rng.bernoulli(expit(lin)) ? 1.0 : 0.0);
      data.obs.push_back(std::move(o));
      ++labeled;
    } else {
      if (unlabeled >= N) continue;
      Observation o;
      o.r = 0;
      o.x = x;
      o.yhat = z;
      data.obs.push_back(std::move(o));
      ++unlabeled;
    }
  }
  data.n_labeled = n;
  data.n_unlabeled = N;
  return data;
}

// Derives the scenario I/III variants used in tests: strips ACP values from
// all units (I) or from unlabeled units (III).
inline Dataset strip_acp(Dataset data, Scenario target) {
  for (auto& o : data.obs) {
    if (target == Scenario::I || (target == Scenario::III && o.r == 0)) o.yhat.reset();
  }
  data.scenario = target;
  return data;
}

}  // namespace acpshift
