#pragma once

#include "chaincal/parameters.hpp"
#include "chaincal/pose.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chaincal {

struct ReprojectionPair {
  Arm arm = Arm::Left;
  Eye eye = Eye::Left;
  bool operator==(const ReprojectionPair&) const = default;
};

/**
 * Which closed loops enter the objective: the LA-RA self-touch and any of
 * the four arm-to-eye reprojections.
 *
 * Named forms: LARA, LALEye, LAREye, RALEye, RAREye, LALREye, LARALEye,
 * LARALREye. General form: '+'-separated items from {touch, LA-LEye,
 * LA-REye, RA-LEye, RA-REye}.
 */
struct ChainCombo {
  bool touch = false;
  std::vector<ReprojectionPair> reprojections;  // canonical order LA-LEye, LA-REye, RA-LEye, RA-REye

  static ChainCombo parse(std::string_view text);
  std::string name() const;
  std::size_t residuals_per_pose() const { return (touch ? 3 : 0) + 2 * reprojections.size(); }
  /// Touch blocks are mu-scaled only when mixed with reprojection blocks.
  bool mixes_units() const { return touch && !reprojections.empty(); }
  bool uses(ChainId chain) const;

  bool operator==(const ChainCombo&) const = default;
};

enum class MuMode {
  CurrentEstimate,  // recomputed from the model being evaluated
  Fixed,            // per-pose values supplied in ResidualOptions::fixed_mu
};

struct ResidualOptions {
  MuMode mu_mode = MuMode::CurrentEstimate;
  std::vector<double> fixed_mu;
  /// Replaces every per-pose mu when set (sensitivity checks).
  std::optional<double> mu_override;
  double behind_camera_sentinel = 1e6;
};

/// mu = 320 px / (d * pi/3), d in mm. Throws GeometryError for d <= 0.
double mu_coefficient(double distance_mm);

/// Distance from the left eye origin to the left arm end-effector.
double eye_to_hand_distance(const RobotModel& model, const PoseSample& sample);

/// X_RA(fingertip) - X_LA(palm) - contact_noise, in mm.
Eigen::Vector3d touch_residual(const RobotModel& model, const PoseSample& sample);

struct ReprojectionResidual {
  Eigen::Vector2d value = Eigen::Vector2d::Zero();
  bool behind_camera = false;
};

/// project(root_to_eye * X_arm) - observed pixel. Behind the camera the value
/// is (sentinel, sentinel) and the flag is set. Throws MissingObservationError.
ReprojectionResidual reprojection_residual(const RobotModel& model, const PoseSample& sample, Arm arm,
                                           Eye eye, double sentinel = 1e6);

struct ResidualVector {
  Eigen::VectorXd values;
  long behind_camera = 0;
};

/// Per-pose blocks in order: [mu * touch (3)] then each reprojection (2).
ResidualVector assemble(const RobotModel& model, std::span<const PoseSample> samples,
                        const ChainCombo& combo, const ResidualOptions& options = {});

/// Per-pose mu at `model`, for MuMode::Fixed.
std::vector<double> mu_per_pose(const RobotModel& model, std::span<const PoseSample> samples);

/// Forward-difference step: 1e-3 mm for a/d, 1e-7 rad for alpha/offset.
double jacobian_step(Field field);

/// d assemble / d packed-parameters by forward differences, residual-dim x free-count.
Eigen::MatrixXd jacobian(const RobotModel& model, const ParameterMask& mask,
                         std::span<const PoseSample> samples, const ChainCombo& combo,
                         const ResidualOptions& options = {});

}  // namespace chaincal
