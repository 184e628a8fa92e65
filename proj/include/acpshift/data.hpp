#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "acpshift/common.hpp"
#include "acpshift/errors.hpp"

namespace acpshift {

// Data layouts: no ACPs anywhere (I), ACPs on every unit (II),
// ACPs on labeled units only (III).
enum class Scenario { I, II, III };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::I: return "I";
    case Scenario::II: return "II";
    case Scenario::III: return "III";
  }
  return "?";
}

struct Observation {
  int r = 0;                    // 1 = labeled, 0 = unlabeled
  std::optional<double> y;     // outcome, present iff r = 1
  VectorXd x;                  // covariates
  std::optional<double> yhat;  // ACP value, presence depends on scenario
};

struct Dataset {
  std::vector<Observation> obs;
  int p = 0;
  Scenario scenario = Scenario::I;
  int n_labeled = 0;
  int n_unlabeled = 0;

  int size() const { return static_cast<int>(obs.size()); }
  // Marginal labeling rate; treated as known throughout.
  double pi() const { return static_cast<double>(n_labeled) / size(); }

  // True when every observed outcome is 0/1, in which case nuisance
  // regressions are fit on the log-loss scale.
  bool binary_outcome() const {
    for (const auto& o : obs) {
      if (o.y && *o.y != 0.0 && *o.y != 1.0) return false;
    }
    return true;
  }
};

// One parsed input row; optional fields mirror empty CSV cells.
struct RawRow {
  double r = 0.0;
  std::optional<double> y;
  VectorXd x;
  std::optional<double> yhat;
};

// Checks invariants, infers the scenario, and freezes the rows into a Dataset.
inline Dataset validate_dataset(const std::vector<RawRow>& rows) {
  if (rows.empty()) throw EmptyStratum("dataset has no rows");
  const int p = static_cast<int>(rows.front().x.size());

  Dataset data;
  data.p = p;
  data.obs.reserve(rows.size());

  int with_acp = 0, labeled_with_acp = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string where = "row " + std::to_string(i + 1);
    if (row.r != 0.0 && row.r != 1.0)
      throw InvalidLabelIndicator(where + ": r must be 0 or 1");
    if (static_cast<int>(row.x.size()) != p)
      throw RaggedCovariates(where + ": expected " + std::to_string(p) +
                             " covariates, found " + std::to_string(row.x.size()));
    for (int j = 0; j < p; ++j) {
      if (!std::isfinite(row.x[j]))
        throw NonFiniteValue(where + ": covariate x" + std::to_string(j + 1) + " is not finite");
    }
    if (row.y && !std::isfinite(*row.y)) throw NonFiniteValue(where + ": y is not finite");
    if (row.yhat && !std::isfinite(*row.yhat)) throw NonFiniteValue(where + ": yhat is not finite");

    Observation o;
    o.r = static_cast<int>(row.r);
    o.x = row.x;
    o.y = row.y;
    o.yhat = row.yhat;
    if (o.r == 1) {
      if (!o.y) throw MissingOutcomeOnLabeled(where + ": labeled row lacks y");
      ++data.n_labeled;
      if (o.yhat) ++labeled_with_acp;
    } else {
      if (o.y) throw OutcomePresentOnUnlabeled(where + ": unlabeled row carries y");
      ++data.n_unlabeled;
    }
    if (o.yhat) ++with_acp;
    data.obs.push_back(std::move(o));
  }

  if (data.n_labeled == 0) throw EmptyStratum("no labeled rows (n = 0)");
  if (data.n_unlabeled == 0) throw EmptyStratum("no unlabeled rows (N = 0)");

  const int total = data.size();
  if (with_acp == total) {
    data.scenario = Scenario::II;
  } else if (with_acp == 0) {
    data.scenario = Scenario::I;
  } else if (with_acp == data.n_labeled && labeled_with_acp == data.n_labeled) {
    data.scenario = Scenario::III;
  } else {
    throw InconsistentAcpPattern(
        "yhat present on " + std::to_string(with_acp) + " of " + std::to_string(total) +
        " rows; pattern matches none of scenarios I/II/III");
  }
  return data;
}

}  // namespace acpshift
