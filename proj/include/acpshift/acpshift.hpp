#pragma once

// Umbrella header: doubly robust, semiparametrically efficient estimation of
// unlabeled- and combined-population parameters from semi-supervised data
// under covariate shift, with auxiliary model predictions (ACPs).

#include "acpshift/common.hpp"
#include "acpshift/config.hpp"
#include "acpshift/csv.hpp"
#include "acpshift/data.hpp"
#include "acpshift/dgp.hpp"
#include "acpshift/errors.hpp"
#include "acpshift/estimator.hpp"
#include "acpshift/folds.hpp"
#include "acpshift/inference.hpp"
#include "acpshift/json_io.hpp"
#include "acpshift/learners.hpp"
#include "acpshift/nuisance.hpp"
#include "acpshift/oracle.hpp"
#include "acpshift/report.hpp"
#include "acpshift/rng.hpp"
#include "acpshift/score.hpp"
#include "acpshift/simulate.hpp"
#include "acpshift/stacking.hpp"
#include "acpshift/threads.hpp"
