#pragma once

#include <json.hpp>

#include "acpshift/inference.hpp"
#include "acpshift/oracle.hpp"
#include "acpshift/simulate.hpp"

namespace acpshift {

inline nlohmann::json to_json(const EstimateResult& res) {
  nlohmann::json ci = nlohmann::json::array();
  for (const auto& iv : res.ci)
    ci.push_back({{"coord", iv.coord}, {"lo", iv.lo}, {"hi", iv.hi}});
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : res.diagnostics.fold_losses) {
    nlohmann::json e = {{"fold", f.fold}, {"propensity", f.propensity}, {"mu", f.mu}};
    if (std::isfinite(f.mu_tilde)) e["mu_tilde"] = f.mu_tilde;
    folds.push_back(e);
  }
  return {{"schema_version", kSchemaVersion},
          {"beta", oracle_detail::vector_to_json(res.beta)},
          {"cov", oracle_detail::matrix_to_json(res.covariance)},
          {"sandwich", oracle_detail::matrix_to_json(res.sandwich)},
          {"ci", ci},
          {"variant", to_string(res.variant)},
          {"diagnostics",
           {{"newton_iterations", res.diagnostics.newton_iterations},
            {"max_residual", res.diagnostics.max_residual},
            {"fold_cv_losses", folds},
            {"note", res.diagnostics.note},
            {"ci_level", res.diagnostics.ci_level},
            {"z_multiplier", res.diagnostics.z_multiplier}}}};
}

inline nlohmann::json to_json(const BootstrapResult& res, const BootstrapConfig& cfg) {
  nlohmann::json ci = nlohmann::json::array();
  for (const auto& iv : res.ci)
    ci.push_back({{"coord", iv.coord}, {"lo", iv.lo}, {"hi", iv.hi}});
  return {{"repetitions", cfg.repetitions},
          {"quantiles", {cfg.q_lo, cfg.q_hi}},
          {"ci", ci},
          {"failures", res.failures},
          {"flagged", res.flagged}};
}

inline nlohmann::json to_json(const SweepRow& r) {
  return {{"n", r.n},
          {"N", r.N},
          {"alpha_signal", r.alpha},
          {"zeta", r.zeta},
          {"family", to_string(r.family)},
          {"estimand", to_string(r.estimand)},
          {"coord", r.c.coord},
          {"mse_with", r.c.mse_with},
          {"mse_without", r.c.mse_without},
          {"are", r.c.are},
          {"coverage_with", r.c.coverage_with},
          {"coverage_without", r.c.coverage_without},
          {"width_with", r.c.width_with},
          {"width_without", r.c.width_without},
          {"replications", r.replications},
          {"valid", r.valid},
          {"error", r.error}};
}

inline nlohmann::json sweep_summary_json(const std::vector<SweepRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  bool all_valid = true;
  for (const auto& r : rows) {
    arr.push_back(to_json(r));
    all_valid = all_valid && r.valid;
  }
  return {{"schema_version", kSchemaVersion}, {"all_valid", all_valid}, {"rows", arr}};
}

}  // namespace acpshift
