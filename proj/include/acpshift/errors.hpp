#pragma once

#include <stdexcept>
#include <string>

namespace acpshift {

// Base class for every failure this library reports deliberately.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define ACPSHIFT_DEFINE_ERROR(Name)                                \
  struct Name : Error {                                            \
    explicit Name(const std::string& msg) : Error(msg) {}          \
  }

// Dataset validation.
ACPSHIFT_DEFINE_ERROR(MissingOutcomeOnLabeled);
ACPSHIFT_DEFINE_ERROR(OutcomePresentOnUnlabeled);
ACPSHIFT_DEFINE_ERROR(RaggedCovariates);
ACPSHIFT_DEFINE_ERROR(EmptyStratum);
ACPSHIFT_DEFINE_ERROR(NonFiniteValue);
ACPSHIFT_DEFINE_ERROR(InvalidLabelIndicator);
ACPSHIFT_DEFINE_ERROR(InconsistentAcpPattern);

// Fold construction.
ACPSHIFT_DEFINE_ERROR(KTooLarge);
ACPSHIFT_DEFINE_ERROR(KTooSmall);

// Score / linear algebra.
ACPSHIFT_DEFINE_ERROR(DimensionMismatch);
ACPSHIFT_DEFINE_ERROR(SingularMatrix);
ACPSHIFT_DEFINE_ERROR(SingularJacobian);
ACPSHIFT_DEFINE_ERROR(NegativeVariance);

// Nuisance fitting.
ACPSHIFT_DEFINE_ERROR(DegenerateLabels);
ACPSHIFT_DEFINE_ERROR(SingularDesign);
ACPSHIFT_DEFINE_ERROR(TooFewSamples);
ACPSHIFT_DEFINE_ERROR(MissingACP);

// Solving / estimation.
ACPSHIFT_DEFINE_ERROR(NoConvergence);
ACPSHIFT_DEFINE_ERROR(ScenarioMismatch);

// Config / IO.
ACPSHIFT_DEFINE_ERROR(ConfigError);
ACPSHIFT_DEFINE_ERROR(IoError);

#undef ACPSHIFT_DEFINE_ERROR

}  // namespace acpshift
