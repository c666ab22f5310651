#pragma once

#include <Eigen/Geometry>

#include <optional>
#include <string>
#include <vector>

namespace chaincal {

using Transform = Eigen::Isometry3d;
using JointAngles = Eigen::VectorXd;

/**
 * One Denavit-Hartenberg link, classic (proximal) convention.
 *
 * Lengths are in mm, angles in rad. Angles are stored exactly as given and
 * never wrapped.
 */
struct DHLink {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double offset = 0.0;

  bool operator==(const DHLink&) const = default;
};

struct JointLimit {
  double min = 0.0;
  double max = 0.0;

  bool contains(double q) const { return q >= min && q <= max; }
  bool operator==(const JointLimit&) const = default;
};

/**
 * Ordered DH links from the common Root frame to an end-effector.
 *
 * `limits` has one entry per link. The first link of every built-in chain is
 * the fixed Root-to-chain link, so its limit is the degenerate range [0, 0].
 */
struct KinematicChain {
  std::string name;
  std::vector<DHLink> links;
  std::optional<Transform> fixed_tail;
  std::vector<JointLimit> limits;

  std::size_t size() const { return links.size(); }
};

/// A_i(q) = Rz(q + offset) * Tz(d) * Tx(a) * Rx(alpha).
Transform dh_transform(const DHLink& link, double q);

/// T = A_1(q_1) ... A_n(q_n) [* fixed_tail]. Throws DimensionError on size mismatch.
Transform forward_kinematics(const KinematicChain& chain, const JointAngles& q);

/// Same product without the fixed tail.
Transform forward_kinematics_links(const KinematicChain& chain, const JointAngles& q);

Eigen::Vector3d end_effector_position(const KinematicChain& chain, const JointAngles& q);

/// True when the 3x3 block is orthonormal with det +1 within `tol`.
bool is_rigid(const Eigen::Matrix3d& rotation, double tol = 1e-9);

/// Validates a 4x4 homogeneous matrix (rotation orthonormal, bottom row [0 0 0 1]).
bool is_rigid(const Eigen::Matrix4d& homogeneous, double tol = 1e-9);

/// Throws chaincal::Error if the chain violates its invariants.
void validate(const KinematicChain& chain);

bool joints_within_limits(const KinematicChain& chain, const JointAngles& q);

}  // namespace chaincal
