#pragma once

#include "chaincal/residuals.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace chaincal {

/**
 * Singular spectrum of the identification Jacobian and two scalar indices:
 *   O1 = (s_1 * ... * s_m)^(1/m) / sqrt(n)
 *   O4 = s_m^2 / s_1
 * m is the free-parameter count (missing singular values count as zero), n
 * the number of poses. O4 is reported as exactly 0 when the Jacobian is
 * rank-deficient.
 */
struct ObservabilityReport {
  std::vector<double> singular_values;  // descending, length m
  std::size_t parameters = 0;           // m
  std::size_t poses = 0;                // n
  std::size_t rank = 0;
  double rank_tolerance = 0.0;
  double o1 = 0.0;
  double o4 = 0.0;

  bool rank_deficient() const { return rank < parameters; }
};

/// Report from a given spectrum (any order; zeros padded up to `parameters`).
ObservabilityReport observability_from_singular_values(std::vector<double> singular_values,
                                                       std::size_t parameters, std::size_t poses,
                                                       std::size_t jacobian_rows);

ObservabilityReport observability_from_jacobian(const Eigen::MatrixXd& jac, std::size_t poses);

/// Builds the stacked Jacobian at `model` and analyzes it.
ObservabilityReport analyze(const RobotModel& model, const ParameterMask& mask,
                            std::span<const PoseSample> samples, const ChainCombo& combo,
                            const ResidualOptions& options = {});

/**
 * Per column: true when the parameter has no component in the numerical null
 * space of the column-normalized Jacobian (singular values below
 * `relative_threshold` times the largest count as null).
 */
std::vector<bool> identifiable_parameters(const Eigen::MatrixXd& jac, double relative_threshold = 1e-8,
                                          double null_component_limit = 1e-3);

}  // namespace chaincal
