#pragma once

#include "chaincal/camera.hpp"
#include "chaincal/kinematics.hpp"

#include <array>
#include <string_view>

namespace chaincal {

enum class ChainId { LeftArm = 0, RightArm = 1, LeftEye = 2, RightEye = 3 };
enum class Arm { Left = 0, Right = 1 };
enum class Eye { Left = 0, Right = 1 };

inline constexpr std::array<ChainId, 4> kAllChains = {ChainId::LeftArm, ChainId::RightArm,
                                                      ChainId::LeftEye, ChainId::RightEye};

/// Eye chains share their first four links (Root-to-neck, neck pitch/roll/yaw).
inline constexpr std::size_t kSharedHeadLinks = 4;

std::string_view chain_name(ChainId id);  // "LA", "RA", "LEye", "REye"
ChainId parse_chain_name(std::string_view name);
ChainId chain_of(Arm arm);
ChainId chain_of(Eye eye);
std::string_view arm_name(Arm arm);
std::string_view eye_name(Eye eye);

/**
 * Upper-body model: two arms, two eyes and the shared camera intrinsics.
 *
 * All chains start in the same Root frame. The right arm carries the fixed
 * palm-to-index-fingertip transform as its tail.
 */
struct RobotModel {
  KinematicChain left_arm;
  KinematicChain right_arm;
  KinematicChain left_eye;
  KinematicChain right_eye;
  CameraIntrinsics intrinsics;

  const KinematicChain& chain(ChainId id) const;
  KinematicChain& chain(ChainId id);

  bool operator==(const RobotModel& other) const;
};

/// Copies left-eye links 1-4 (and their limits) into the right eye.
void sync_shared_head(RobotModel& model);

/// Throws chaincal::Error if any chain or the shared-head identity is violated.
void validate(const RobotModel& model);

/// Built-in iCub upper body (lengths in mm).
RobotModel default_icub_model();

/// Default fingertip tail: pure translation of 60 mm along the palm frame z axis.
Transform default_fingertip_tail();

/// Root -> eye transform, i.e. the inverse of the eye chain's forward kinematics.
Transform root_to_eye(const RobotModel& model, Eye eye, const JointAngles& q_eye);

}  // namespace chaincal
