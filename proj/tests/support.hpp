#pragma once

// Shared test helpers. The transform oracle below builds each link from
// elementary rotations and translations and must stay independent of
// chaincal::dh_transform.

#include "chaincal/dataset.hpp"
#include "chaincal/kinematics.hpp"
#include "chaincal/model.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>

namespace testing {

inline Eigen::Matrix4d rot_z(double t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(t, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return m;
}

inline Eigen::Matrix4d rot_x(double t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(t, Eigen::Vector3d::UnitX()).toRotationMatrix();
  return m;
}

inline Eigen::Matrix4d trans(double x, double y, double z) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topRightCorner<3, 1>() = Eigen::Vector3d(x, y, z);
  return m;
}

inline Eigen::Matrix4d oracle_link(const chaincal::DHLink& l, double q) {
  return rot_z(q + l.offset) * trans(0, 0, l.d) * trans(l.a, 0, 0) * rot_x(l.alpha);
}

inline Eigen::Matrix4d oracle_fk(const chaincal::KinematicChain& c, const Eigen::VectorXd& q) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (std::size_t i = 0; i < c.links.size(); ++i) t = t * oracle_link(c.links[i], q[static_cast<Eigen::Index>(i)]);
  if (c.fixed_tail) t = t * c.fixed_tail->matrix();
  return t;
}

/// Joint vector with a zero first entry and uniform draws within +-pi/2 elsewhere.
inline Eigen::VectorXd random_joints(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-std::numbers::pi / 2, std::numbers::pi / 2);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 1; i < q.size(); ++i) q[i] = u(rng);
  return q;
}

/// Clean dataset from the default model, generated once per test binary.
inline const chaincal::Dataset& clean_dataset() {
  static const chaincal::Dataset d = [] {
    chaincal::GenerationSettings g;
    g.count = 120;
    g.seed = 11;
    return chaincal::generate(chaincal::default_icub_model(), g);
  }();
  return d;
}

}  // namespace testing
