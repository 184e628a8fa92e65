#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "acpshift/dgp.hpp"
#include "acpshift/nuisance.hpp"
#include "acpshift/stacking.hpp"

using namespace acpshift;

TEST_CASE("density ratio arithmetic and identity") {
  auto make_pi = [](double value) {
    return std::function<double(const VectorXd&)>([value](const VectorXd&) { return value; });
  };

  SECTION("no shift: pi = 0.5, pihat = 0.5 gives w = 1") {
    auto w = propensity_to_density_ratio(make_pi(0.5), 0.5);
    CHECK(w(VectorXd::Zero(1)) == Catch::Approx(1.0).margin(1e-15));
  }

  SECTION("pi = 0.25, pihat = 0.5 gives w = 1/3") {
    auto w = propensity_to_density_ratio(make_pi(0.5), 0.25);
    CHECK(std::abs(w(VectorXd::Zero(1)) - 1.0 / 3.0) < 1e-12);
  }

  SECTION("clip floor: pi = 0.5, pihat = 0.01 gives w = 99") {
    auto w = propensity_to_density_ratio(make_pi(0.01), 0.5);
    CHECK(std::abs(w(VectorXd::Zero(1)) - 99.0) < 1e-9);
  }

  SECTION("identity (1-pihat)/(1-pi) == w/(pi + (1-pi)w) on a random grid") {
    Rng rng(4242);
    for (int t = 0; t < 200; ++t) {
      const double pi = 0.05 + 0.9 * rng.uniform();
      const double pihat = 0.01 + 0.98 * rng.uniform();
      auto w_fn = propensity_to_density_ratio(make_pi(pihat), pi);
      const double w = w_fn(VectorXd::Zero(1));
      const double lhs = (1.0 - pihat) / (1.0 - pi);
      const double rhs = w / (pi + (1.0 - pi) * w);
      CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-12);
    }
  }
}

TEST_CASE("propensity fitting") {
  LearnerConfig cfg = LearnerConfig::fast();

  SECTION("labels independent of x give pihat near 1/2") {
    DgpSpec spec;
    spec.eta = VectorXd::Zero(5);
    const Dataset data = gen_dataset(spec, 4000, 4000, 808);
    std::vector<int> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    const FittedRegressor prop = fit_propensity(data, all, cfg);
    Rng rng(909);
    for (int t = 0; t < 20; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      CHECK(std::abs(prop.predict(x) - 0.5) < 0.05);
    }
  }

  SECTION("synthetic labeling recovered: pihat(0) near 1/2 and increasing in sum(x)") {
    DgpSpec spec;
    const Dataset data = gen_dataset(spec, 2000, 2000, 111);
    std::vector<int> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    const FittedRegressor prop = fit_propensity(data, all, cfg);
    CHECK(std::abs(prop.predict(VectorXd::Zero(5)) - 0.5) < 0.05);
    const double low = prop.predict(VectorXd::Constant(5, -0.4));
    const double high = prop.predict(VectorXd::Constant(5, 0.4));
    CHECK(high > low);
  }

  SECTION("single class raises DegenerateLabels") {
    DgpSpec spec;
    const Dataset data = gen_dataset(spec, 30, 30, 2);
    std::vector<int> labeled_only;
    for (int i = 0; i < data.size(); ++i)
      if (data.obs[i].r == 1) labeled_only.push_back(i);
    CHECK_THROWS_AS(fit_propensity(data, labeled_only, cfg), DegenerateLabels);
  }

  SECTION("predictions clipped to [eps, 1-eps]") {
    DgpSpec spec;
    const Dataset data = gen_dataset(spec, 400, 400, 3);
    std::vector<int> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    const FittedRegressor prop = fit_propensity(data, all, cfg);
    CHECK(prop.predict(VectorXd::Constant(5, -50.0)) >= 0.01);
    CHECK(prop.predict(VectorXd::Constant(5, 50.0)) <= 0.99);
  }
}

TEST_CASE("mu regression") {
  SECTION("constant outcome is fit exactly, full ensemble") {
    DgpSpec spec;
    Dataset data = gen_dataset(spec, 60, 60, 10);
    for (auto& o : data.obs)
      if (o.r == 1) o.y = 3.25;
    std::vector<int> labeled;
    for (int i = 0; i < data.size(); ++i)
      if (data.obs[i].r == 1) labeled.push_back(i);
    LearnerConfig cfg;  // glm + knn + tree
    const FittedRegressor mu = fit_mu(data, labeled, cfg, Family::Continuous);
    Rng rng(77);
    for (int t = 0; t < 10; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      CHECK(mu.predict(x) == Catch::Approx(3.25).margin(1e-8));
    }
    const VectorXd& w = mu.stacking_weights();
    CHECK(std::abs(w.sum() - 1.0) < 1e-10);
    CHECK(w.minCoeff() >= 0.0);
  }

  SECTION("linear truth recovered with correlated ACP: coefficients within 0.1") {
    DgpSpec spec;
    spec.alpha_signal = 3.0;
    spec.zeta = 0.6;
    const Dataset data = gen_dataset(spec, 20000, 50, 55);
    std::vector<int> labeled;
    for (int i = 0; i < data.size(); ++i)
      if (data.obs[i].r == 1) labeled.push_back(i);
    const FittedRegressor mu = fit_mu(data, labeled, LearnerConfig::fast(), Family::Continuous);

    // Probe basis points to read the implied linear coefficients; the
    // population regression is 1 + xi'x + alpha*zeta*x1 since E(Z|X) = zeta*X1.
    const double intercept = mu.predict(VectorXd::Zero(5));
    CHECK(std::abs(intercept - 1.0) < 0.1);
    for (int j = 0; j < 5; ++j) {
      VectorXd e = VectorXd::Zero(5);
      e[j] = 1.0;
      const double slope = mu.predict(e) - intercept;
      const double truth = spec.xi[j] + (j == 0 ? spec.alpha_signal * spec.zeta : 0.0);
      CHECK(std::abs(slope - truth) < 0.1);
    }
  }

  SECTION("binary family keeps predictions in [0,1]") {
    DgpSpec spec;
    spec.family = Outcome::Logistic;
    spec.alpha_signal = 2.0;
    const Dataset data = gen_dataset(spec, 300, 60, 5);
    std::vector<int> labeled;
    for (int i = 0; i < data.size(); ++i)
      if (data.obs[i].r == 1) labeled.push_back(i);
    LearnerConfig cfg;
    const FittedRegressor mu = fit_mu(data, labeled, cfg, Family::Binary);
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = 3.0 * rng.normal();
      const double p = mu.predict(x);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }

  SECTION("too few samples") {
    DgpSpec spec;
    const Dataset data = gen_dataset(spec, 60, 60, 1);
    std::vector<int> labeled;
    for (int i = 0; i < data.size() && labeled.size() < 12; ++i)
      if (data.obs[i].r == 1) labeled.push_back(i);
    CHECK_THROWS_AS(fit_mu(data, labeled, LearnerConfig::fast(), Family::Continuous),
                    TooFewSamples);
  }
}

TEST_CASE("mu_tilde regression") {
  SECTION("uninformative ACP: mu_tilde tracks mu on held-out points") {
    DgpSpec spec;
    spec.alpha_signal = 0.0;  // yhat = z carries no outcome signal
    spec.zeta = 0.0;
    const Dataset data = gen_dataset(spec, 3000, 50, 21);
    std::vector<int> labeled;
    for (int i = 0; i < data.size(); ++i)
      if (data.obs[i].r == 1) labeled.push_back(i);
    const auto cfg = LearnerConfig::fast();
    const FittedRegressor mu = fit_mu(data, labeled, cfg, Family::Continuous);
    const FittedRegressor mt = fit_mu_tilde(data, labeled, cfg, Family::Continuous);
    Rng rng(3);
    double max_gap = 0.0;
    for (int t = 0; t < 50; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      VectorXd xz(6);
      xz.head(5) = x;
      xz[5] = rng.normal();
      max_gap = std::max(max_gap, std::abs(mu.predict(x) - mt.predict(xz)));
    }
    CHECK(max_gap < 0.15);
  }

  SECTION("yhat identically zero: mu_tilde collapses to mu") {
    DgpSpec spec;
    spec.alpha_signal = 2.0;
    Dataset data = gen_dataset(spec, 400, 60, 47);
    for (auto& o : data.obs) o.yhat = 0.0;
    std::vector<int> labeled;
    for (int i = 0; i < data.size(); ++i)
      if (data.obs[i].r == 1) labeled.push_back(i);
    const auto cfg = LearnerConfig::fast();
    const FittedRegressor mu = fit_mu(data, labeled, cfg, Family::Continuous);
    const FittedRegressor mt = fit_mu_tilde(data, labeled, cfg, Family::Continuous);
    Rng rng(48);
    for (int t = 0; t < 20; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      VectorXd xz(6);
      xz.head(5) = x;
      xz[5] = 0.0;
      CHECK(std::abs(mu.predict(x) - mt.predict(xz)) < 1e-5);
    }
  }

  SECTION("linear DGP recovered in (x, yhat)") {
    DgpSpec spec;
    spec.alpha_signal = 4.0;
    spec.zeta = 0.3;
    const Dataset data = gen_dataset(spec, 20000, 50, 99);
    std::vector<int> labeled;
    for (int i = 0; i < data.size(); ++i)
      if (data.obs[i].r == 1) labeled.push_back(i);
    const FittedRegressor mt =
        fit_mu_tilde(data, labeled, LearnerConfig::fast(), Family::Continuous);
    const double intercept = mt.predict(VectorXd::Zero(6));
    CHECK(std::abs(intercept - 1.0) < 0.1);
    VectorXd ez = VectorXd::Zero(6);
    ez[5] = 1.0;
    CHECK(std::abs(mt.predict(ez) - intercept - spec.alpha_signal) < 0.1);
  }

  SECTION("constant outcome gives a constant fit") {
    DgpSpec spec;
    Dataset data = gen_dataset(spec, 60, 60, 14);
    for (auto& o : data.obs)
      if (o.r == 1) o.y = -0.75;
    std::vector<int> labeled;
    for (int i = 0; i < data.size(); ++i)
      if (data.obs[i].r == 1) labeled.push_back(i);
    const FittedRegressor mt =
        fit_mu_tilde(data, labeled, LearnerConfig::fast(), Family::Continuous);
    VectorXd xz = VectorXd::Constant(6, 0.8);
    CHECK(mt.predict(xz) == Catch::Approx(-0.75).margin(1e-8));
  }

  SECTION("missing ACP on a training unit raises") {
    DgpSpec spec;
    Dataset data = gen_dataset(spec, 60, 60, 8);
    std::vector<int> labeled;
    for (int i = 0; i < data.size(); ++i)
      if (data.obs[i].r == 1) labeled.push_back(i);
    data.obs[labeled[4]].yhat.reset();
    CHECK_THROWS_AS(fit_mu_tilde(data, labeled, LearnerConfig::fast(), Family::Continuous),
                    MissingACP);
  }
}

TEST_CASE("stacking weights form a simplex") {
  DgpSpec spec;
  spec.alpha_signal = 2.0;
  const Dataset data = gen_dataset(spec, 150, 150, 404);
  std::vector<int> labeled, all(data.size());
  std::iota(all.begin(), all.end(), 0);
  for (int i = 0; i < data.size(); ++i)
    if (data.obs[i].r == 1) labeled.push_back(i);
  LearnerConfig cfg;  // all three learners
  const FittedRegressor mu = fit_mu(data, labeled, cfg, Family::Continuous);
  const FittedRegressor prop = fit_propensity(data, all, cfg);
  for (const FittedRegressor* f : {&mu, &prop}) {
    const VectorXd& w = f->stacking_weights();
    REQUIRE(w.size() == 3);
    CHECK(std::abs(w.sum() - 1.0) < 1e-10);
    CHECK(w.minCoeff() >= 0.0);
    for (double loss : f->cv_losses()) CHECK(std::isfinite(loss));
  }
}

TEST_CASE("crossfit honours the out-of-fold contract") {
  DgpSpec spec;
  spec.alpha_signal = 2.0;
  const Dataset data = gen_dataset(spec, 120, 120, 2023);
  const FoldPlan plan = make_folds(data, 2, 17);
  const auto cfg = LearnerConfig::fast();

  const auto result = crossfit_nuisances(data, plan, cfg, Family::Continuous, true);
  REQUIRE(result.sets.size() == 2);

  SECTION("no leakage: modifying fold-k outcomes leaves fold-k nuisances unchanged") {
    Dataset tampered = data;
    for (int i : plan.fold_indices(0)) {
      if (tampered.obs[i].r == 1) tampered.obs[i].y = *tampered.obs[i].y + 100.0;
      tampered.obs[i].yhat = *tampered.obs[i].yhat - 50.0;
    }
    const auto again = crossfit_nuisances(tampered, plan, cfg, Family::Continuous, true);
    Rng rng(5);
    for (int t = 0; t < 25; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      CHECK(result.sets[0].w_hat(x) == again.sets[0].w_hat(x));
      CHECK(result.sets[0].mu_hat(x) == again.sets[0].mu_hat(x));
      CHECK(result.sets[0].mu_tilde_hat(x, 0.3) == again.sets[0].mu_tilde_hat(x, 0.3));
    }
    // fold 1 trains on fold 0, so its regression must move
    bool fold1_moved = false;
    for (int t = 0; t < 25 && !fold1_moved; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      fold1_moved = result.sets[1].mu_hat(x) != again.sets[1].mu_hat(x);
    }
    CHECK(fold1_moved);
  }

  SECTION("density ratio positive on a grid") {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = 2.0 * rng.normal();
      CHECK(result.sets[0].w_hat(x) > 0.0);
      CHECK(result.sets[1].w_hat(x) > 0.0);
    }
  }
}

TEST_CASE("per-fold propensity CV losses are finite and homogeneous") {
  DgpSpec spec;
  const Dataset data = gen_dataset(spec, 600, 600, 606);
  const FoldPlan plan = make_folds(data, 5, 9);
  const auto result =
      crossfit_nuisances(data, plan, LearnerConfig::fast(), Family::Continuous, true);
  double lo = 1e300, hi = 0.0;
  for (const auto& ns : result.sets) {
    REQUIRE(std::isfinite(ns.propensity_cv_loss));
    lo = std::min(lo, ns.propensity_cv_loss);
    hi = std::max(hi, ns.propensity_cv_loss);
  }
  CHECK(hi <= 1.2 * lo);
}

TEST_CASE("weighted refit keeps the architecture and stacking weights fixed") {
  DgpSpec spec;
  spec.alpha_signal = 1.0;
  const Dataset data = gen_dataset(spec, 80, 80, 33);
  const FoldPlan plan = make_folds(data, 2, 3);
  LearnerConfig cfg;
  cfg.use_tree = false;  // glm + knn keeps the refit cheap
  const auto base = crossfit_nuisances(data, plan, cfg, Family::Continuous, true);

  SECTION("unit weights reproduce the base fit") {
    const auto sets = refit_nuisances_weighted(data, plan, base, VectorXd::Ones(data.size()));
    Rng rng(8);
    for (int t = 0; t < 10; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      CHECK(sets[0].mu_hat(x) == Catch::Approx(base.sets[0].mu_hat(x)).margin(1e-12));
      CHECK(sets[1].w_hat(x) == Catch::Approx(base.sets[1].w_hat(x)).margin(1e-12));
    }
  }

  SECTION("non-unit weights move the member fits") {
    Rng rng(12);
    VectorXd w(data.size());
    for (int i = 0; i < data.size(); ++i) w[i] = rng.exponential();
    const auto sets = refit_nuisances_weighted(data, plan, base, w);
    bool moved = false;
    for (int t = 0; t < 10 && !moved; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      moved = std::abs(sets[0].mu_hat(x) - base.sets[0].mu_hat(x)) > 1e-12;
    }
    CHECK(moved);
  }
}
