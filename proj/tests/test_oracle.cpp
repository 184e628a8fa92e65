#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "acpshift/dgp.hpp"
#include "acpshift/oracle.hpp"

using namespace acpshift;

TEST_CASE("analytic nuisances") {
  SECTION("x = 0: pi0 = 1/2 and mu = 1 for the linear family with zeta = 0") {
    DgpSpec spec;
    spec.alpha_signal = 5.0;
    spec.zeta = 0.0;
    const VectorXd zero = VectorXd::Zero(5);
    CHECK(true_propensity(spec, zero) == Catch::Approx(0.5).margin(1e-15));
    CHECK(true_mu(spec, zero) == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("zeta = 0, alpha = 5 linear: mu(x) = 1 + xi'x") {
    DgpSpec spec;
    spec.alpha_signal = 5.0;
    spec.zeta = 0.0;
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      CHECK(true_mu(spec, x) == Catch::Approx(1.0 + spec.xi.dot(x)).margin(1e-12));
    }
  }

  SECTION("zeta = 1 linear: mu_tilde(x, x1) equals mu(x)") {
    DgpSpec spec;
    spec.alpha_signal = 3.0;
    spec.zeta = 1.0;
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      CHECK(true_mu_tilde(spec, x, x[0]) == Catch::Approx(true_mu(spec, x)).margin(1e-12));
    }
  }

  SECTION("logistic mu via quadrature matches a direct Monte Carlo integral") {
    DgpSpec spec;
    spec.family = Outcome::Logistic;
    spec.alpha_signal = 2.0;
    spec.zeta = 0.6;
    VectorXd x(5);
    x << 0.4, -0.2, 0.1, 0.8, -0.5;
    Rng rng(5);
    double acc = 0.0;
    const long m = 2'000'000;
    const double zm = spec.zeta * x[0];
    const double zs = std::sqrt(1 - spec.zeta * spec.zeta);
    for (long i = 0; i < m; ++i)
      acc += expit(1.0 + spec.xi.dot(x) + spec.alpha_signal * (zm + zs * rng.normal()));
    acc /= m;
    CHECK(std::abs(true_mu(spec, x) - acc) < 5e-4);
  }

  SECTION("analytic nuisance set satisfies the density-ratio identity") {
    DgpSpec spec;
    const NuisanceSet ns = analytic_nuisances(spec, 0.5);
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
      VectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = rng.normal();
      const double w = ns.w_hat(x);
      const double pi0 = ns.pi_hat(x);
      CHECK(std::abs((1.0 - pi0) / 0.5 - w / (0.5 + 0.5 * w)) < 1e-12);
      CHECK(w > 0.0);
    }
  }
}

TEST_CASE("gauss-hermite sanity") {
  const GaussHermite gh = gauss_hermite(64);
  // moments of N(0,1) through the rule
  double m0 = 0.0, m2 = 0.0, m4 = 0.0;
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (int i = 0; i < 64; ++i) {
    const double z = std::numbers::sqrt2 * gh.nodes[i];
    m0 += gh.weights[i] * inv_sqrt_pi;
    m2 += gh.weights[i] * inv_sqrt_pi * z * z;
    m4 += gh.weights[i] * inv_sqrt_pi * z * z * z * z;
  }
  CHECK(m0 == Catch::Approx(1.0).margin(1e-12));
  CHECK(m2 == Catch::Approx(1.0).margin(1e-10));
  CHECK(m4 == Catch::Approx(3.0).margin(1e-9));
}

TEST_CASE("marginal labeling rate is one half by symmetry") {
  DgpSpec spec;
  const double pim = marginal_labeling_rate(spec, 2'000'000, 99);
  CHECK(std::abs(pim - 0.5) < 2e-3);
}

TEST_CASE("true_beta") {
  SECTION("alpha = 0 linear GLM recovers xi within MC error") {
    DgpSpec spec;
    spec.alpha_signal = 0.0;
    spec.zeta = 0.0;
    const ScoreModel model = ScoreModel::linear_glm(5);
    const TrueParam b = true_beta(spec, model, 1'000'000, 7);
    CHECK(std::abs(b.value[0] - 1.0) < 4 * b.se[0] + 1e-3);
    for (int j = 0; j < 5; ++j)
      CHECK(std::abs(b.value[j + 1] - spec.xi[j]) < 4 * b.se[j + 1] + 1e-3);
  }

  SECTION("mean target under shift: beta0 below the overall mean") {
    DgpSpec spec;
    spec.alpha_signal = 5.0;
    spec.zeta = 0.0;
    const ScoreModel model = ScoreModel::mean_target();
    const TrueParam b = true_beta(spec, model, 1'000'000, 8);
    // eta'x selects large covariates into the labeled stratum, so E_q(Y) < E(Y)
    const TrueParam t = true_theta(spec, model, 1'000'000, 8);
    CHECK(b.value[0] < t.value[0]);
  }

  SECTION("logistic family with omitted correlated signal is attenuated") {
    DgpSpec spec;
    spec.family = Outcome::Logistic;
    spec.alpha_signal = 5.0;
    spec.zeta = 0.3;
    const ScoreModel model = ScoreModel::logistic_glm(5);
    const TrueParam b = true_beta(spec, model, 1'000'000, 9);
    CHECK(std::isfinite(b.value[1]));
    CHECK(b.value[1] < spec.xi[0] + spec.alpha_signal * spec.zeta);
  }
}

TEST_CASE("oracle bounds") {
  const ScoreModel model = ScoreModel::mean_target();

  SECTION("zeta = 1 gives zero gain") {
    DgpSpec spec;
    spec.alpha_signal = 5.0;
    spec.zeta = 1.0;
    const OracleBounds b = oracle_bounds(spec, model, 200'000, 11);
    CHECK(std::abs(b.gain_core(0, 0)) <= 4.0 * b.gain_core_se(0, 0) + 1e-12);
    CHECK(std::abs(b.route_diff(0, 0)) <= 4.0 * b.route_diff_se(0, 0) + 1e-12);
  }

  SECTION("alpha = 0 gives zero gain") {
    DgpSpec spec;
    spec.alpha_signal = 0.0;
    spec.zeta = 0.3;
    const OracleBounds b = oracle_bounds(spec, model, 200'000, 12);
    CHECK(std::abs(b.gain_core(0, 0)) <= 4.0 * b.gain_core_se(0, 0) + 1e-12);
  }

  SECTION("two routes agree and the gain is PSD across the grid") {
    for (double alpha : {0.0, 2.0, 5.0}) {
      for (double zeta : {0.0, 0.3, 0.6, 0.9, 1.0}) {
        DgpSpec spec;
        spec.alpha_signal = alpha;
        spec.zeta = zeta;
        const OracleBounds b = oracle_bounds(spec, model, 100'000, 13);
        INFO("alpha=" << alpha << " zeta=" << zeta);
        CHECK(std::abs(b.route_diff(0, 0)) <= 4.0 * b.route_diff_se(0, 0) + 1e-12);
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(b.gain);
        CHECK(eig.eigenvalues().minCoeff() >= -4.0 * b.mc_se);
        CHECK(b.v_wo(0, 0) + 4.0 * b.mc_se >= b.v_w(0, 0));
      }
    }
  }

  SECTION("monotone gain in alpha at zeta = 0") {
    double prev = -1.0;
    for (double alpha : {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}) {
      DgpSpec spec;
      spec.alpha_signal = alpha;
      spec.zeta = 0.0;
      const OracleBounds b = oracle_bounds(spec, model, 100'000, 14);
      const double trace = b.gain.trace();
      CHECK(trace >= prev - 4.0 * b.mc_se);
      prev = trace;
    }
  }
}

TEST_CASE("theta bounds") {
  const ScoreModel model = ScoreModel::mean_target();

  SECTION("zeta = 1: theta gain vanishes") {
    DgpSpec spec;
    spec.alpha_signal = 5.0;
    spec.zeta = 1.0;
    const OracleBounds b = oracle_bounds_theta(spec, model, 200'000, 15);
    CHECK(std::abs(b.gain_core(0, 0)) <= 4.0 * b.gain_core_se(0, 0) + 1e-12);
  }

  SECTION("constant propensity 1/2: gain equals Gamma E[(htilde-h)^2] Gamma") {
    DgpSpec spec;
    spec.alpha_signal = 3.0;
    spec.zeta = 0.0;
    spec.eta = VectorXd::Zero(5);  // pi0(x) = 1/2 exactly
    const OracleBounds b = oracle_bounds_theta(spec, model, 200'000, 16);
    // (1-pi0)/pi0 = 1, so gain_core should equal E[(htilde-h)^2] = alpha^2
    CHECK(std::abs(b.gain_core(0, 0) - spec.alpha_signal * spec.alpha_signal) <
          4.0 * b.gain_core_se(0, 0) + 0.05);
    // and the per-draw identity is exact
    CHECK(b.route_diff.cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("no shift, alpha = 0: V_w matches the i.i.d. variance of Y") {
    DgpSpec spec;
    spec.alpha_signal = 0.0;
    spec.zeta = 0.0;
    spec.eta = VectorXd::Zero(5);
    const OracleBounds b = oracle_bounds_theta(spec, model, 400'000, 17);
    // Var(Y) = 1 + xi'xi = 3; the combined-population bound collapses to
    // E[(1/pi0)(y-mu)^2] + E[(mu-theta)^2] = 2*resvar + between-variance.
    const double res_var = 1.0;                   // Var(Y | X, Z)
    const double between = spec.xi.squaredNorm(); // Var(E(Y|X))
    const double expected = res_var / 0.5 + between;
    CHECK(std::abs(b.v_w(0, 0) - expected) < 0.05);
  }
}

TEST_CASE("oracle cache round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "acpshift_cache_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  setenv("ACP_CACHE_DIR", dir.c_str(), 1);

  DgpSpec spec;
  spec.alpha_signal = 2.0;
  const ScoreModel model = ScoreModel::mean_target();
  const TrueParam a = cached_true_param("unlabeled", spec, model, 1'000'000, 21);
  REQUIRE(std::filesystem::exists(dir / "acp_oracle_cache_v1.json"));
  const auto stamp = std::filesystem::last_write_time(dir / "acp_oracle_cache_v1.json");
  const TrueParam b = cached_true_param("unlabeled", spec, model, 1'000'000, 21);
  CHECK(a.value[0] == b.value[0]);
  CHECK(std::filesystem::last_write_time(dir / "acp_oracle_cache_v1.json") == stamp);

  unsetenv("ACP_CACHE_DIR");
  std::filesystem::remove_all(dir);
}
