#include "chaincal/model.hpp"

#include "chaincal/error.hpp"

#include <fmt/format.h>

#include <numbers>
#include <utility>

namespace chaincal {

namespace {

using std::numbers::pi;

constexpr double kDeg = pi / 180.0;

std::vector<JointLimit> default_limits(std::size_t n) {
  // The first link is the fixed Root-to-chain link.
  std::vector<JointLimit> limits(n, JointLimit{-pi / 2.0, pi / 2.0});
  limits.front() = JointLimit{0.0, 0.0};
  return limits;
}

}  // namespace

std::string_view chain_name(ChainId id) {
  switch (id) {
    case ChainId::LeftArm: return "LA";
    case ChainId::RightArm: return "RA";
    case ChainId::LeftEye: return "LEye";
    case ChainId::RightEye: return "REye";
  }
  return "?";
}

ChainId parse_chain_name(std::string_view name) {
  for (ChainId id : kAllChains) {
    if (chain_name(id) == name) return id;
  }
  throw ConfigError(fmt::format("unknown chain '{}' (expected LA, RA, LEye or REye)", name));
}

ChainId chain_of(Arm arm) { return arm == Arm::Left ? ChainId::LeftArm : ChainId::RightArm; }
ChainId chain_of(Eye eye) { return eye == Eye::Left ? ChainId::LeftEye : ChainId::RightEye; }
std::string_view arm_name(Arm arm) { return arm == Arm::Left ? "LA" : "RA"; }
std::string_view eye_name(Eye eye) { return eye == Eye::Left ? "LEye" : "REye"; }

const KinematicChain& RobotModel::chain(ChainId id) const {
  switch (id) {
    case ChainId::LeftArm: return left_arm;
    case ChainId::RightArm: return right_arm;
    case ChainId::LeftEye: return left_eye;
    case ChainId::RightEye: return right_eye;
  }
  throw Error("invalid chain id");
}

KinematicChain& RobotModel::chain(ChainId id) {
  return const_cast<KinematicChain&>(std::as_const(*this).chain(id));
}

namespace {

bool same_chain(const KinematicChain& a, const KinematicChain& b) {
  if (a.name != b.name || a.links != b.links || a.limits != b.limits) return false;
  if (a.fixed_tail.has_value() != b.fixed_tail.has_value()) return false;
  return !a.fixed_tail || a.fixed_tail->matrix() == b.fixed_tail->matrix();
}

}  // namespace

bool RobotModel::operator==(const RobotModel& other) const {
  return same_chain(left_arm, other.left_arm) && same_chain(right_arm, other.right_arm) &&
         same_chain(left_eye, other.left_eye) && same_chain(right_eye, other.right_eye) &&
         intrinsics == other.intrinsics;
}

void sync_shared_head(RobotModel& model) {
  for (std::size_t i = 0; i < kSharedHeadLinks; ++i) {
    model.right_eye.links[i] = model.left_eye.links[i];
    if (model.left_eye.limits.size() > i && model.right_eye.limits.size() > i) {
      model.right_eye.limits[i] = model.left_eye.limits[i];
    }
  }
}

void validate(const RobotModel& model) {
  for (ChainId id : kAllChains) validate(model.chain(id));
  validate(model.intrinsics);
  if (model.left_eye.size() <= kSharedHeadLinks || model.right_eye.size() <= kSharedHeadLinks) {
    throw Error("eye chains must have more links than the shared head part");
  }
  for (std::size_t i = 0; i < kSharedHeadLinks; ++i) {
    if (model.left_eye.links[i] != model.right_eye.links[i]) {
      throw Error(fmt::format("eye chains disagree on shared head link {}", i + 1));
    }
  }
}

Transform default_fingertip_tail() {
  Transform t = Transform::Identity();
  t.translation() = Eigen::Vector3d(0.0, 0.0, 60.0);
  return t;
}

RobotModel default_icub_model() {
  RobotModel m;

  m.left_arm.name = "LA";
  m.left_arm.links = {
      {23.36, 143.3, pi / 2.0, 105.0 * kDeg},
      {0.0, 107.74, -pi / 2.0, pi / 2.0},
      {0.0, 0.0, pi / 2.0, -pi / 2.0},
      {15.0, 152.28, -pi / 2.0, 75.0 * kDeg},
      {-15.0, 0.0, pi / 2.0, 0.0},
      {0.0, 137.3, pi / 2.0, -pi / 2.0},
      {0.0, 0.0, pi / 2.0, pi / 2.0},
      {62.5, -16.0, 0.0, 0.0},
  };
  m.left_arm.limits = default_limits(m.left_arm.links.size());

  // Reflection of the left arm through the Root x = 0 plane: a and offset
  // change sign, the joint sense is reversed. Approximate, override from file.
  m.right_arm.name = "RA";
  for (const DHLink& l : m.left_arm.links) {
    m.right_arm.links.push_back({-l.a, l.d, l.alpha, -l.offset});
  }
  m.right_arm.limits = default_limits(m.right_arm.links.size());
  m.right_arm.fixed_tail = default_fingertip_tail();

  m.left_eye.name = "LEye";
  m.left_eye.links = {
      {2.31, -193.3, -pi / 2.0, pi / 4.0},
      {33.0, 0.0, pi / 2.0, pi / 4.0},
      {0.0, 1.0, -pi / 2.0, pi / 4.0},
      {-54.0, 82.5, -pi / 2.0, pi / 4.0},
      {0.0, -34.0, -pi / 2.0, 0.0},
      {0.0, 0.0, pi / 2.0, -pi / 4.0},
  };
  m.left_eye.limits = default_limits(m.left_eye.links.size());

  m.right_eye.name = "REye";
  m.right_eye.links = m.left_eye.links;
  m.right_eye.links[4] = {0.0, 34.0, pi / 2.0, -pi / 4.0};
  m.right_eye.links[5] = {0.0, 0.0, -pi / 2.0, 0.0};
  m.right_eye.limits = default_limits(m.right_eye.links.size());

  m.intrinsics = CameraIntrinsics{};
  return m;
}

Transform root_to_eye(const RobotModel& model, Eye eye, const JointAngles& q_eye) {
  return forward_kinematics(model.chain(chain_of(eye)), q_eye).inverse(Eigen::Isometry);
}

}  // namespace chaincal
