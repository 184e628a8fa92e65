#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "acpshift/common.hpp"
#include "acpshift/dgp.hpp"
#include "acpshift/errors.hpp"
#include "acpshift/score.hpp"
#include "acpshift/threads.hpp"

namespace acpshift {

struct TrueParam {
  VectorXd value;
  VectorXd se;  // Monte Carlo standard error per coordinate
  long mc_n = 0;
};

namespace oracle_detail {

constexpr long kChunk = 1 << 16;

// Solves the empirical estimating equation sum_i {y_i - g(a_i'b)} a_i = 0.
inline VectorXd solve_sample_equation(const std::vector<VectorXd>& designs,
                                      const std::vector<double>& ys, const ScoreModel& model) {
  const int d = model.dim();
  VectorXd beta = VectorXd::Zero(d);
  for (int iter = 0; iter < 200; ++iter) {
    VectorXd value = VectorXd::Zero(d);
    MatrixXd jac = MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < designs.size(); ++i) {
      const VectorXd& a = designs[i];
      const double t = a.dot(beta);
      value += (ys[i] - model.link(t)) * a;
      jac -= model.link_deriv(t) * (a * a.transpose());
    }
    value /= static_cast<double>(designs.size());
    jac /= static_cast<double>(designs.size());
    const VectorXd step = jac.fullPivLu().solve(-value);
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-12) break;
  }
  return beta;
}

inline VectorXd sample_equation_se(const std::vector<VectorXd>& designs,
                                   const std::vector<double>& ys, const ScoreModel& model,
                                   const VectorXd& beta) {
  const int d = model.dim();
  MatrixXd v = MatrixXd::Zero(d, d);
  MatrixXd jac = MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < designs.size(); ++i) {
    const VectorXd& a = designs[i];
    const double t = a.dot(beta);
    const double s = ys[i] - model.link(t);
    v += (s * s) * (a * a.transpose());
    jac -= model.link_deriv(t) * (a * a.transpose());
  }
  const double m = static_cast<double>(designs.size());
  v /= m;
  jac /= m;
  const MatrixXd omega = jac.fullPivLu().inverse();
  const MatrixXd avar = omega * v * omega.transpose();
  return (avar.diagonal() / m).cwiseSqrt();
}

}  // namespace oracle_detail

// beta_0: solution of the estimating equation over the unlabeled population,
// by Monte Carlo rejection (retain draws with R = 0 under Bernoulli(pi0(x))).
inline TrueParam true_beta(const DgpSpec& spec, const ScoreModel& model, long mc_n,
                           std::uint64_t seed) {
  spec.validate();
  if (mc_n < 1'000'000) throw ConfigError("true_beta requires mc_n >= 1e6");
  std::vector<VectorXd> designs;
  std::vector<double> ys;
  designs.reserve(mc_n);
  ys.reserve(mc_n);
  long chunk_id = 0;
  while (static_cast<long>(ys.size()) < mc_n) {
    Rng rng(derive_seed(seed, {tag("true-beta"), static_cast<std::uint64_t>(chunk_id++)}));
    for (long t = 0; t < oracle_detail::kChunk && static_cast<long>(ys.size()) < mc_n; ++t) {
      const DgpDraw d = dgp_draw(spec, rng);
      if (rng.bernoulli(d.pi0)) continue;  // keep the R = 0 stratum
      designs.push_back(model.design(d.x));
      ys.push_back(d.y);
    }
  }
  TrueParam out;
  out.value = oracle_detail::solve_sample_equation(designs, ys, model);
  out.se = oracle_detail::sample_equation_se(designs, ys, model, out.value);
  out.mc_n = mc_n;
  return out;
}

// theta_0: same over the combined population (no rejection).
inline TrueParam true_theta(const DgpSpec& spec, const ScoreModel& model, long mc_n,
                            std::uint64_t seed) {
  spec.validate();
  if (mc_n < 1'000'000) throw ConfigError("true_theta requires mc_n >= 1e6");
  std::vector<VectorXd> designs;
  std::vector<double> ys;
  designs.reserve(mc_n);
  ys.reserve(mc_n);
  long chunk_id = 0;
  while (static_cast<long>(ys.size()) < mc_n) {
    Rng rng(derive_seed(seed, {tag("true-theta"), static_cast<std::uint64_t>(chunk_id++)}));
    for (long t = 0; t < oracle_detail::kChunk && static_cast<long>(ys.size()) < mc_n; ++t) {
      const DgpDraw d = dgp_draw(spec, rng);
      designs.push_back(model.design(d.x));
      ys.push_back(d.y);
    }
  }
  TrueParam out;
  out.value = oracle_detail::solve_sample_equation(designs, ys, model);
  out.se = oracle_detail::sample_equation_se(designs, ys, model, out.value);
  out.mc_n = mc_n;
  return out;
}

// Ground-truth efficiency bounds under the synthetic family, by Monte Carlo
// averages of the closed-form influence-function expressions with analytic
// nuisances. `gain` carries the closed-form efficiency gain (sandwiched);
// `route_diff` holds the per-draw discrepancy between the bound difference
// V_wo - V_w and the closed-form gain core, which is mean-zero by theory.
struct OracleBounds {
  std::string population;  // "unlabeled" (beta) or "combined" (theta)
  VectorXd beta0;
  VectorXd beta0_se;
  MatrixXd v_w;
  MatrixXd v_wo;
  MatrixXd omega;  // Omega, or Gamma for the combined population
  MatrixXd gain;   // Omega * gain_core * Omega
  MatrixXd gain_core;
  MatrixXd gain_core_se;
  MatrixXd route_diff;
  MatrixXd route_diff_se;
  long mc_samples = 0;
  double margin_pi = 0.0;
  double mc_se = 0.0;  // max entrywise SE across gain_core and route_diff
};

namespace oracle_detail {

struct Accum {
  MatrixXd sum, sumsq;
  explicit Accum(int d) : sum(MatrixXd::Zero(d, d)), sumsq(MatrixXd::Zero(d, d)) {}
  void add(double scalar, const MatrixXd& outer, const MatrixXd& outer_sq) {
    sum += scalar * outer;
    sumsq += (scalar * scalar) * outer_sq;
  }
  MatrixXd mean(long m) const { return sum / static_cast<double>(m); }
  MatrixXd se(long m) const {
    const MatrixXd mu = mean(m);
    const MatrixXd var = (sumsq / static_cast<double>(m) - mu.cwiseProduct(mu)).cwiseMax(0.0);
    return (var / static_cast<double>(m)).cwiseSqrt();
  }
};

}  // namespace oracle_detail

inline OracleBounds oracle_bounds(const DgpSpec& spec, const ScoreModel& model, long mc_n,
                                  std::uint64_t seed, const TrueParam& beta0, double margin_pi) {
  spec.validate();
  const int d = model.dim();
  const double pim = margin_pi;
  using oracle_detail::Accum;
  Accum t1w(d), t1wo(d), t2w(d), t3(d), gn(d), dd(d), aq(d);

  long done = 0;
  long chunk_id = 0;
  while (done < mc_n) {
    Rng rng(derive_seed(seed, {tag("bounds"), static_cast<std::uint64_t>(chunk_id++)}));
    const long todo = std::min<long>(oracle_detail::kChunk, mc_n - done);
    for (long t = 0; t < todo; ++t) {
      const DgpDraw dr = dgp_draw(spec, rng);
      const VectorXd a = model.design(dr.x);
      const MatrixXd outer = a * a.transpose();
      const MatrixXd outer_sq = outer.cwiseProduct(outer);
      const double g = model.link(a.dot(beta0.value));
      const double gp = model.link_deriv(a.dot(beta0.value));
      const double mu = true_mu(spec, dr.x);
      const double mt = true_mu_tilde(spec, dr.x, dr.z);
      const double pi0 = dr.pi0;
      const double q1 = 1.0 - pi0;

      const double c1 = q1 * q1 / (pi0 * (1.0 - pim) * (1.0 - pim));
      const double s_t1w = c1 * (dr.y - mt) * (dr.y - mt);
      const double s_t1wo = c1 * (dr.y - mu) * (dr.y - mu);
      const double s_t2w = (q1 / (1.0 - pim)) * (q1 / (1.0 - pim)) * (mt - mu) * (mt - mu);
      const double s_t3 = q1 / ((1.0 - pim) * (1.0 - pim)) * (mu - g) * (mu - g);
      const double s_gn = q1 * q1 * q1 / (pi0 * (1.0 - pim) * (1.0 - pim)) * (mt - mu) * (mt - mu);
      const double s_dd = (s_t1wo - s_t1w) - s_t2w - s_gn;
      const double s_aq = q1 / (1.0 - pim) * gp;

      t1w.add(s_t1w, outer, outer_sq);
      t1wo.add(s_t1wo, outer, outer_sq);
      t2w.add(s_t2w, outer, outer_sq);
      t3.add(s_t3, outer, outer_sq);
      gn.add(s_gn, outer, outer_sq);
      dd.add(s_dd, outer, outer_sq);
      aq.add(s_aq, outer, outer_sq);
    }
    done += todo;
  }

  OracleBounds out;
  out.population = "unlabeled";
  out.beta0 = beta0.value;
  out.beta0_se = beta0.se;
  out.mc_samples = mc_n;
  out.margin_pi = pim;
  out.v_w = t1w.mean(mc_n) + t2w.mean(mc_n) + t3.mean(mc_n);
  out.v_wo = t1wo.mean(mc_n) + t3.mean(mc_n);
  const MatrixXd a_mean = aq.mean(mc_n);
  out.omega = (-a_mean).fullPivLu().inverse();
  out.gain_core = gn.mean(mc_n);
  out.gain_core_se = gn.se(mc_n);
  out.gain = out.omega * out.gain_core * out.omega;
  out.route_diff = dd.mean(mc_n);
  out.route_diff_se = dd.se(mc_n);
  out.mc_se = std::max(out.gain_core_se.maxCoeff(), out.route_diff_se.maxCoeff());
  return out;
}

inline OracleBounds oracle_bounds(const DgpSpec& spec, const ScoreModel& model, long mc_n,
                                  std::uint64_t seed) {
  const double pim = marginal_labeling_rate(spec);
  const TrueParam beta0 = true_beta(spec, model, std::max<long>(mc_n, 1'000'000),
                                     derive_seed(seed, {tag("beta0")}));
  return oracle_bounds(spec, model, mc_n, seed, beta0, pim);
}

inline OracleBounds oracle_bounds_theta(const DgpSpec& spec, const ScoreModel& model, long mc_n,
                                        std::uint64_t seed, const TrueParam& theta0) {
  spec.validate();
  const int d = model.dim();
  using oracle_detail::Accum;
  Accum t1(d), t2w(d), t2wo(d), t3(d), gn(d), dd(d), aa(d);

  long done = 0;
  long chunk_id = 0;
  while (done < mc_n) {
    Rng rng(derive_seed(seed, {tag("bounds-theta"), static_cast<std::uint64_t>(chunk_id++)}));
    const long todo = std::min<long>(oracle_detail::kChunk, mc_n - done);
    for (long t = 0; t < todo; ++t) {
      const DgpDraw dr = dgp_draw(spec, rng);
      const VectorXd a = model.design(dr.x);
      const MatrixXd outer = a * a.transpose();
      const MatrixXd outer_sq = outer.cwiseProduct(outer);
      const double g = model.link(a.dot(theta0.value));
      const double gp = model.link_deriv(a.dot(theta0.value));
      const double mu = true_mu(spec, dr.x);
      const double mt = true_mu_tilde(spec, dr.x, dr.z);
      const double pi0 = dr.pi0;

      const double s_t1 = (dr.y - mt) * (dr.y - mt) / pi0;
      const double s_t2w = (mt - mu) * (mt - mu);
      const double s_t2wo = s_t2w / pi0;
      const double s_t3 = (mu - g) * (mu - g);
      const double s_gn = (1.0 - pi0) / pi0 * (mt - mu) * (mt - mu);
      const double s_dd = s_t2wo - s_t2w - s_gn;  // identically zero in theory

      t1.add(s_t1, outer, outer_sq);
      t2w.add(s_t2w, outer, outer_sq);
      t2wo.add(s_t2wo, outer, outer_sq);
      t3.add(s_t3, outer, outer_sq);
      gn.add(s_gn, outer, outer_sq);
      dd.add(s_dd, outer, outer_sq);
      aa.add(gp, outer, outer_sq);
    }
    done += todo;
  }

  OracleBounds out;
  out.population = "combined";
  out.beta0 = theta0.value;
  out.beta0_se = theta0.se;
  out.mc_samples = mc_n;
  out.margin_pi = 0.0;
  out.v_w = t1.mean(mc_n) + t2w.mean(mc_n) + t3.mean(mc_n);
  out.v_wo = t1.mean(mc_n) + t2wo.mean(mc_n) + t3.mean(mc_n);
  out.omega = (-aa.mean(mc_n)).fullPivLu().inverse();
  out.gain_core = gn.mean(mc_n);
  out.gain_core_se = gn.se(mc_n);
  out.gain = out.omega * out.gain_core * out.omega;
  out.route_diff = dd.mean(mc_n);
  out.route_diff_se = dd.se(mc_n);
  out.mc_se = std::max(out.gain_core_se.maxCoeff(), out.route_diff_se.maxCoeff());
  return out;
}

inline OracleBounds oracle_bounds_theta(const DgpSpec& spec, const ScoreModel& model, long mc_n,
                                        std::uint64_t seed) {
  const TrueParam theta0 = true_theta(spec, model, std::max<long>(mc_n, 1'000'000),
                                       derive_seed(seed, {tag("theta0")}));
  return oracle_bounds_theta(spec, model, mc_n, seed, theta0);
}

// ---------------------------------------------------------------------------
// Versioned JSON cache keyed by (spec, model, mc_n, seed). The directory is
// overridable through ACP_CACHE_DIR.

namespace oracle_detail {

inline std::string cache_path() {
  const char* dir = std::getenv("ACP_CACHE_DIR");
  const std::string base = dir && *dir ? std::string(dir) : std::string(".");
  return base + "/acp_oracle_cache_v1.json";
}

inline nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline MatrixXd matrix_from_json(const nlohmann::json& j) {
  const int r = static_cast<int>(j.size());
  const int c = r > 0 ? static_cast<int>(j[0].size()) : 0;
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

inline nlohmann::json load_cache() {
  std::ifstream in(cache_path());
  if (!in) return nlohmann::json{{"schema_version", kSchemaVersion}, {"entries", nlohmann::json::object()}};
  nlohmann::json j;
  try {
    in >> j;
  } catch (...) {
    return nlohmann::json{{"schema_version", kSchemaVersion}, {"entries", nlohmann::json::object()}};
  }
  if (!j.contains("entries"))
    return nlohmann::json{{"schema_version", kSchemaVersion}, {"entries", nlohmann::json::object()}};
  return j;
}

inline void store_cache(const nlohmann::json& j) {
  std::ofstream out(cache_path());
  if (out) out << j.dump(1) << '\n';
}

}  // namespace oracle_detail

inline std::string oracle_cache_key(const std::string& population, const DgpSpec& spec,
                                    const ScoreModel& model, long mc_n, std::uint64_t seed) {
  return population + "|" + spec.key() + "|model=" + to_string(model.kind()) +
         "|mc_n=" + std::to_string(mc_n) + "|seed=" + std::to_string(seed);
}

inline TrueParam cached_true_param(const std::string& population, const DgpSpec& spec,
                                   const ScoreModel& model, long mc_n, std::uint64_t seed) {
  const std::string key = "param|" + oracle_cache_key(population, spec, model, mc_n, seed);
  auto cache = oracle_detail::load_cache();
  if (cache["entries"].contains(key)) {
    const auto& e = cache["entries"][key];
    TrueParam p;
    p.value = oracle_detail::vector_from_json(e["value"]);
    p.se = oracle_detail::vector_from_json(e["se"]);
    p.mc_n = e["mc_n"].get<long>();
    return p;
  }
  const TrueParam p = population == "combined" ? true_theta(spec, model, mc_n, seed)
                                               : true_beta(spec, model, mc_n, seed);
  cache["entries"][key] = {{"value", oracle_detail::vector_to_json(p.value)},
                           {"se", oracle_detail::vector_to_json(p.se)},
                           {"mc_n", p.mc_n}};
  oracle_detail::store_cache(cache);
  return p;
}

inline nlohmann::json to_json(const OracleBounds& b) {
  using oracle_detail::matrix_to_json;
  using oracle_detail::vector_to_json;
  return {{"schema_version", kSchemaVersion},
          {"population", b.population},
          {"beta0", vector_to_json(b.beta0)},
          {"beta0_se", vector_to_json(b.beta0_se)},
          {"v_w", matrix_to_json(b.v_w)},
          {"v_wo", matrix_to_json(b.v_wo)},
          {"omega", matrix_to_json(b.omega)},
          {"gain", matrix_to_json(b.gain)},
          {"gain_core", matrix_to_json(b.gain_core)},
          {"gain_core_se", matrix_to_json(b.gain_core_se)},
          {"route_diff", matrix_to_json(b.route_diff)},
          {"route_diff_se", matrix_to_json(b.route_diff_se)},
          {"mc_samples", b.mc_samples},
          {"margin_pi", b.margin_pi},
          {"mc_se", b.mc_se}};
}

inline OracleBounds oracle_bounds_from_json(const nlohmann::json& e) {
  using oracle_detail::matrix_from_json;
  using oracle_detail::vector_from_json;
  OracleBounds b;
  b.population = e["population"].get<std::string>();
  b.beta0 = vector_from_json(e["beta0"]);
  b.beta0_se = vector_from_json(e["beta0_se"]);
  b.v_w = matrix_from_json(e["v_w"]);
  b.v_wo = matrix_from_json(e["v_wo"]);
  b.omega = matrix_from_json(e["omega"]);
  b.gain = matrix_from_json(e["gain"]);
  b.gain_core = matrix_from_json(e["gain_core"]);
  b.gain_core_se = matrix_from_json(e["gain_core_se"]);
  b.route_diff = matrix_from_json(e["route_diff"]);
  b.route_diff_se = matrix_from_json(e["route_diff_se"]);
  b.mc_samples = e["mc_samples"].get<long>();
  b.margin_pi = e["margin_pi"].get<double>();
  b.mc_se = e["mc_se"].get<double>();
  return b;
}

// Cache-through computation of the bounds for either population.
inline OracleBounds cached_oracle_bounds(const std::string& population, const DgpSpec& spec,
                                         const ScoreModel& model, long mc_n, std::uint64_t seed) {
  const std::string key = "bounds|" + oracle_cache_key(population, spec, model, mc_n, seed);
  auto cache = oracle_detail::load_cache();
  if (cache["entries"].contains(key))
    return oracle_bounds_from_json(cache["entries"][key]);
  const OracleBounds b = population == "combined" ? oracle_bounds_theta(spec, model, mc_n, seed)
                                                  : oracle_bounds(spec, model, mc_n, seed);
  cache["entries"][key] = to_json(b);
  oracle_detail::store_cache(cache);
  return b;
}

}  // namespace acpshift
