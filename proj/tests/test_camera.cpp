#include "chaincal/camera.hpp"
#include "chaincal/error.hpp"
#include "chaincal/model.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace chaincal;

namespace {

Eigen::Vector3d backproject(const PixelPoint& p, double z, const CameraIntrinsics& k) {
  return {(p.u - k.cx) * z / k.fx, (p.v - k.cy) * z / k.fy, z};
}

}  // namespace

TEST_CASE("default intrinsics") {
  const CameraIntrinsics k;
  CHECK(k.fx == 257.34);
  CHECK(k.fy == 257.34);
  CHECK(k.cx == 160.0);
  CHECK(k.cy == 120.0);
  CHECK(k.width == 320.0);
  CHECK(k.height == 240.0);
  CHECK_NOTHROW(validate(k));
}

TEST_CASE("pinhole projection") {
  const CameraIntrinsics k;
  const PixelPoint c = project({0, 0, 1000}, k);
  CHECK(c.u == 160.0);
  CHECK(c.v == 120.0);
  const PixelPoint r = project({1000, 0, 1000}, k);
  CHECK(r.u == doctest::Approx(417.34).epsilon(1e-15));
  CHECK(r.v == 120.0);
  CHECK_THROWS_AS(project({0, 0, -5}, k), BehindCameraError);
  CHECK_THROWS_AS(project({1, 1, 0}, k), BehindCameraError);
}

TEST_CASE("principal point can be zeroed") {
  CameraIntrinsics k;
  k.cx = k.cy = 0.0;
  const PixelPoint p = project({10, -20, 100}, k);
  CHECK(p.u == doctest::Approx(25.734));
  CHECK(p.v == doctest::Approx(-51.468));
}

TEST_CASE("scale invariance and back-projection round trip") {
  const CameraIntrinsics k;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> xy(-500, 500), z(1, 2000), s(0.01, 100), px(0, 320);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d p(xy(rng), xy(rng), z(rng));
    const double lambda = s(rng);
    const PixelPoint a = project(p, k);
    const PixelPoint b = project(lambda * p, k);
    CHECK(std::abs(a.u - b.u) < 1e-9);
    CHECK(std::abs(a.v - b.v) < 1e-9);

    const PixelPoint q{px(rng), px(rng) * 0.75};
    const PixelPoint back = project(backproject(q, z(rng), k), k);
    CHECK(std::abs(back.u - q.u) < 1e-9);
    CHECK(std::abs(back.v - q.v) < 1e-9);
  }
}

TEST_CASE("in-frame bounds are half open") {
  const CameraIntrinsics k;
  CHECK(in_frame({160, 120}, k));
  CHECK(in_frame({0, 0}, k));
  CHECK_FALSE(in_frame({320, 120}, k));
  CHECK_FALSE(in_frame({160, 240}, k));
  CHECK_FALSE(in_frame({-1, 0}, k));
}

TEST_CASE("intrinsics validation") {
  CameraIntrinsics k;
  k.fx = 0;
  CHECK_THROWS_AS(validate(k), Error);
  k = {};
  k.cx = 321;
  CHECK_THROWS_AS(validate(k), Error);
  k = {};
  k.cy = -1;
  CHECK_THROWS_AS(validate(k), Error);
}

TEST_CASE("root to eye inverts the eye chain") {
  const RobotModel m = default_icub_model();
  std::mt19937_64 rng(8);
  for (Eye eye : {Eye::Left, Eye::Right}) {
    for (int i = 0; i < 20; ++i) {
      const Eigen::VectorXd q = testing::random_joints(6, rng);
      const Eigen::Vector3d p(100.0 * i, -50.0, 30.0);
      const Eigen::Vector3d round = root_to_eye(m, eye, q) * (forward_kinematics(m.chain(chain_of(eye)), q) * p);
      CHECK((round - p).norm() < 1e-9);
    }
  }
  CHECK_THROWS_AS(root_to_eye(m, Eye::Left, Eigen::VectorXd::Zero(5)), DimensionError);
}

TEST_CASE("left hand seen from the left eye at zero joints") {
  const RobotModel m = default_icub_model();
  const Eigen::Vector3d hand = end_effector_position(m.left_arm, Eigen::VectorXd::Zero(8));
  const Eigen::Vector4d oracle = testing::oracle_fk(m.left_eye, Eigen::VectorXd::Zero(6)).inverse() * hand.homogeneous();
  // Frozen from a separate numpy composition.
  const Eigen::Vector3d frozen(12.49701619, 131.37447709, -21.29937476);
  CHECK((oracle.head<3>() - frozen).norm() < 1e-7);
  CHECK((root_to_eye(m, Eye::Left, Eigen::VectorXd::Zero(6)) * hand - frozen).norm() < 1e-7);
}
