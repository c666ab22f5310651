#pragma once

#include "chaincal/observability.hpp"
#include "chaincal/optimizer.hpp"
#include "chaincal/residuals.hpp"

#include <span>
#include <string>
#include <vector>

namespace chaincal {

struct CalibrationOptions {
  SolverSettings solver;
  ResidualOptions residuals;
  /// Freeze mu at the initial estimate instead of recomputing it per evaluation.
  bool freeze_mu_at_initial = false;
  /// Diagonal parameter scaling; empty means identity.
  Eigen::VectorXd parameter_scale;
};

struct CalibrationOutcome {
  RobotModel model;
  ParameterMask mask;
  ParameterVector initial;
  ParameterVector estimate;
  SolveReport report;
  std::size_t residual_count = 0;
  std::size_t jacobian_rank = 0;
  bool rank_deficient = false;
  std::vector<std::string> warnings;
};

/**
 * Calibrates the free entries of `mask` starting from `initial`, using the
 * residuals of `combo` over `samples`. Throws ConfigError for an empty mask.
 * Rank deficiency of the final Jacobian is reported as a warning.
 */
CalibrationOutcome solve_subset(const RobotModel& initial, const ParameterMask& mask,
                                std::span<const PoseSample> samples, const ChainCombo& combo,
                                const CalibrationOptions& options = {});

}  // namespace chaincal
