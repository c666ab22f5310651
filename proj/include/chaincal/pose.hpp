#pragma once

#include "chaincal/camera.hpp"
#include "chaincal/kinematics.hpp"
#include "chaincal/model.hpp"

#include <array>
#include <optional>

namespace chaincal {

/// Recorded joints per pose: 7 LA, 7 RA, 3 neck, eye tilt, left pan, right pan.
/// The fixed torso/Root links carry no entry.
inline constexpr Eigen::Index kPoseJointCount = 20;
inline constexpr Eigen::Index kLeftArmJoints = 0;
inline constexpr Eigen::Index kRightArmJoints = 7;
inline constexpr Eigen::Index kNeckJoints = 14;
inline constexpr Eigen::Index kEyeTiltJoint = 17;
inline constexpr Eigen::Index kLeftPanJoint = 18;
inline constexpr Eigen::Index kRightPanJoint = 19;

/// Index of an (arm, eye) observation: LA-LEye, LA-REye, RA-LEye, RA-REye.
constexpr std::size_t pair_index(Arm arm, Eye eye) {
  return static_cast<std::size_t>(arm) * 2 + static_cast<std::size_t>(eye);
}

/**
 * One self-touch / self-observation configuration.
 *
 * `left_position`/`right_position` are the ground-truth end-effector
 * positions at generation time. `contact_noise` is the touch measurement
 * error subtracted in the touch residual. Pixels exist only for visible pairs.
 */
struct PoseSample {
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(kPoseJointCount);
  Eigen::Vector3d contact_noise = Eigen::Vector3d::Zero();
  Eigen::Vector3d left_position = Eigen::Vector3d::Zero();
  Eigen::Vector3d right_position = Eigen::Vector3d::Zero();
  std::array<std::optional<PixelPoint>, 4> true_pixels;
  std::array<std::optional<PixelPoint>, 4> observed_pixels;

  /// Full chain joint vector (leading 0 for the fixed Root link).
  JointAngles arm_joints(Arm arm) const;
  JointAngles eye_joints(Eye eye) const;
  bool visible(Arm arm, Eye eye) const { return observed_pixels[pair_index(arm, eye)].has_value(); }

  bool operator==(const PoseSample& other) const;
};

/// Writes chain joint vectors back into a 20-entry pose vector.
void set_arm_joints(Eigen::VectorXd& theta, Arm arm, const JointAngles& chain_q);
void set_head_joints(Eigen::VectorXd& theta, const Eigen::Vector3d& neck, double tilt, double left_pan,
                     double right_pan);

}  // namespace chaincal
