#include "chaincal/pose.hpp"

#include "chaincal/error.hpp"

namespace chaincal {

JointAngles PoseSample::arm_joints(Arm arm) const {
  JointAngles q = JointAngles::Zero(8);
  const Eigen::Index start = arm == Arm::Left ? kLeftArmJoints : kRightArmJoints;
  q.tail<7>() = theta.segment<7>(start);
  return q;
}

JointAngles PoseSample::eye_joints(Eye eye) const {
  JointAngles q = JointAngles::Zero(6);
  q.segment<3>(1) = theta.segment<3>(kNeckJoints);
  q[4] = theta[kEyeTiltJoint];
  q[5] = theta[eye == Eye::Left ? kLeftPanJoint : kRightPanJoint];
  return q;
}

bool PoseSample::operator==(const PoseSample& o) const {
  return target == o.target && theta == o.theta && contact_noise == o.contact_noise &&
         left_position == o.left_position && right_position == o.right_position &&
         true_pixels == o.true_pixels && observed_pixels == o.observed_pixels;
}

void set_arm_joints(Eigen::VectorXd& theta, Arm arm, const JointAngles& chain_q) {
  if (chain_q.size() != 8) throw DimensionError("arm chains have 8 joint entries");
  theta.segment<7>(arm == Arm::Left ? kLeftArmJoints : kRightArmJoints) = chain_q.tail<7>();
}

void set_head_joints(Eigen::VectorXd& theta, const Eigen::Vector3d& neck, double tilt, double left_pan,
                     double right_pan) {
  theta.segment<3>(kNeckJoints) = neck;
  theta[kEyeTiltJoint] = tilt;
  theta[kLeftPanJoint] = left_pan;
  theta[kRightPanJoint] = right_pan;
}

}  // namespace chaincal
