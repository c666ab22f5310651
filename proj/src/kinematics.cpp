#include "chaincal/kinematics.hpp"

#include "chaincal/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace chaincal {

Transform dh_transform(const DHLink& link, double q) {
  const double theta = q + link.offset;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double ca = std::cos(link.alpha);
  const double sa = std::sin(link.alpha);

  Transform t = Transform::Identity();
  auto& m = t.matrix();
  m(0, 0) = ct;
  m(0, 1) = -st * ca;
  m(0, 2) = st * sa;
  m(0, 3) = link.a * ct;
  m(1, 0) = st;
  m(1, 1) = ct * ca;
  m(1, 2) = -ct * sa;
  m(1, 3) = link.a * st;
  m(2, 0) = 0.0;
  m(2, 1) = sa;
  m(2, 2) = ca;
  m(2, 3) = link.d;
  return t;
}

Transform forward_kinematics_links(const KinematicChain& chain, const JointAngles& q) {
  if (static_cast<std::size_t>(q.size()) != chain.links.size()) {
    throw DimensionError(fmt::format("chain '{}' has {} links but {} joint angles were given",
                                     chain.name, chain.links.size(), q.size()));
  }
  Transform t = Transform::Identity();
  for (std::size_t i = 0; i < chain.links.size(); ++i) {
    t = t * dh_transform(chain.links[i], q[static_cast<Eigen::Index>(i)]);
  }
  return t;
}

Transform forward_kinematics(const KinematicChain& chain, const JointAngles& q) {
  Transform t = forward_kinematics_links(chain, q);
  if (chain.fixed_tail) t = t * *chain.fixed_tail;
  return t;
}

Eigen::Vector3d end_effector_position(const KinematicChain& chain, const JointAngles& q) {
  return forward_kinematics(chain, q).translation();
}

bool is_rigid(const Eigen::Matrix3d& rotation, double tol) {
  if (!rotation.allFinite()) return false;
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

bool is_rigid(const Eigen::Matrix4d& homogeneous, double tol) {
  if (!homogeneous.allFinite()) return false;
  if (homogeneous.row(3) != Eigen::RowVector4d(0.0, 0.0, 0.0, 1.0)) return false;
  return is_rigid(Eigen::Matrix3d(homogeneous.topLeftCorner<3, 3>()), tol);
}

void validate(const KinematicChain& chain) {
  if (chain.links.empty()) throw Error(fmt::format("chain '{}' has no links", chain.name));
  for (std::size_t i = 0; i < chain.links.size(); ++i) {
    const DHLink& l = chain.links[i];
    if (!std::isfinite(l.a) || !std::isfinite(l.d) || !std::isfinite(l.alpha) ||
        !std::isfinite(l.offset)) {
      throw Error(fmt::format("chain '{}' link {} has a non-finite DH parameter", chain.name, i + 1));
    }
  }
  if (!chain.limits.empty() && chain.limits.size() != chain.links.size()) {
    throw DimensionError(fmt::format("chain '{}' has {} links but {} joint limits", chain.name,
                                     chain.links.size(), chain.limits.size()));
  }
  for (std::size_t i = 0; i < chain.limits.size(); ++i) {
    if (!(chain.limits[i].min <= chain.limits[i].max)) {
      throw Error(fmt::format("chain '{}' joint {} has min > max", chain.name, i + 1));
    }
  }
  if (chain.fixed_tail && !is_rigid(chain.fixed_tail->matrix())) {
    throw Error(fmt::format("chain '{}' fixed tail is not a rigid transform", chain.name));
  }
}

bool joints_within_limits(const KinematicChain& chain, const JointAngles& q) {
  if (chain.limits.empty()) return true;
  if (static_cast<std::size_t>(q.size()) != chain.limits.size()) return false;
  for (std::size_t i = 0; i < chain.limits.size(); ++i) {
    if (!chain.limits[i].contains(q[static_cast<Eigen::Index>(i)])) return false;
  }
  return true;
}

}  // namespace chaincal
