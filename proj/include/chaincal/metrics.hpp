#pragma once

#include "chaincal/parameters.hpp"
#include "chaincal/pose.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace chaincal {

/// Euclidean distance in mm.
double cartesian_error(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

struct ParameterErrors {
  std::vector<std::string> labels;
  std::vector<double> mean_abs_error;  // sum_r |phi_r - phi*| / R
  std::vector<double> estimate_std;    // sample std of phi_r (0 when R = 1)
};

/// `estimates` holds one packed vector per repetition, all under `mask`.
ParameterErrors parameter_errors(const std::vector<ParameterVector>& estimates, const RobotModel& truth,
                                 const ParameterMask& mask);
/// Same, checking that every repetition used `mask`. Throws ConfigError otherwise.
ParameterErrors parameter_errors(const std::vector<ParameterVector>& estimates,
                                 const std::vector<ParameterMask>& masks, const RobotModel& truth,
                                 const ParameterMask& mask);

enum class Evaluation { EndEffector3d, Reprojection };

struct TestError {
  Evaluation evaluation = Evaluation::EndEffector3d;
  double mean = 0.0;
  double std = 0.0;               // sample std over poses
  std::vector<double> per_pose;   // mean over the evaluated arms (or arm-eye pairs)
};

/**
 * Error of the calibrated model against the truth model on held-out poses.
 *
 * EndEffector3d: |FK_cal - FK_truth| per arm, averaged over `arms`.
 * Reprojection: pixel distance of the projected end-effectors for the given
 * arms into both eyes, both models evaluated at the pose joints (pairs
 * behind either camera are skipped).
 */
TestError test_error(const RobotModel& calibrated, const RobotModel& truth, std::span<const PoseSample> test,
                     Evaluation evaluation, const std::vector<Arm>& arms = {Arm::Left});

/// Arms with at least one free parameter, falling back to {Left}.
std::vector<Arm> evaluated_arms(const ParameterMask& mask);

/// Evaluation used for a mask: ee3d if any arm is free, otherwise reprojection.
Evaluation default_evaluation(const ParameterMask& mask);

struct ScatterRow {
  std::size_t repetition = 0;
  std::size_t pose = 0;
  Arm arm = Arm::Left;
  Eigen::Vector3d error = Eigen::Vector3d::Zero();  // FK_cal - FK_truth
};

/// Signed end-effector error components for every test pose and arm.
std::vector<ScatterRow> residual_scatter(const RobotModel& calibrated, const RobotModel& truth,
                                         std::span<const PoseSample> test, std::size_t repetition,
                                         const std::vector<Arm>& arms = {Arm::Left});

std::string_view evaluation_name(Evaluation e);

}  // namespace chaincal
