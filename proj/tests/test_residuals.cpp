#include "chaincal/error.hpp"
#include "chaincal/residuals.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace chaincal;
using std::numbers::pi;

namespace {

const RobotModel& truth() {
  static const RobotModel m = default_icub_model();
  return m;
}

std::span<const PoseSample> first(std::size_t n) {
  return std::span<const PoseSample>(testing::clean_dataset().samples).first(n);
}

// Central differences on the packed vector; steps chosen independently of the library.
Eigen::MatrixXd central_jacobian(const RobotModel& model, const ParameterMask& mask,
                                 std::span<const PoseSample> samples, const ChainCombo& combo,
                                 const ResidualOptions& opt) {
  const ParameterVector x = pack(model, mask);
  const Eigen::Index rows = assemble(model, samples, combo, opt).values.size();
  Eigen::MatrixXd j(rows, x.size());
  const auto labels = mask.free_labels();
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const bool length = labels[static_cast<std::size_t>(c)].ends_with(".a") ||
                        labels[static_cast<std::size_t>(c)].ends_with(".d");
    const double h = length ? 1e-4 : 1e-7;
    ParameterVector xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    j.col(c) = (assemble(unpack(model, mask, xp), samples, combo, opt).values -
                assemble(unpack(model, mask, xm), samples, combo, opt).values) /
               (2 * h);
  }
  return j;
}

}  // namespace

TEST_CASE("mu values") {
  CHECK(mu_coefficient(320.0 / (pi / 3)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mu_coefficient(1.0) == doctest::Approx(305.57749073643905));
  for (double d : {10.0, 250.0, 400.0}) CHECK(mu_coefficient(2 * d) == doctest::Approx(mu_coefficient(d) / 2));
  CHECK_THROWS_AS(mu_coefficient(0.0), GeometryError);
  CHECK_THROWS_AS(mu_coefficient(-3.0), GeometryError);
}

TEST_CASE("combo parsing and dimensions") {
  CHECK(ChainCombo::parse("LARA").residuals_per_pose() == 3);
  CHECK(ChainCombo::parse("LALEye").residuals_per_pose() == 2);
  CHECK(ChainCombo::parse("LALREye").residuals_per_pose() == 4);
  CHECK(ChainCombo::parse("LARALREye").residuals_per_pose() == 11);
  CHECK(ChainCombo::parse("touch+RA-REye").residuals_per_pose() == 5);
  CHECK(ChainCombo::parse("LARALREye").mixes_units());
  CHECK_FALSE(ChainCombo::parse("LALREye").mixes_units());
  CHECK(ChainCombo::parse("RA-REye+touch").name() == ChainCombo::parse("touch+RA-REye").name());
  CHECK_THROWS_AS(ChainCombo::parse("LAXX"), ConfigError);
  CHECK_THROWS_AS(ChainCombo::parse(""), ConfigError);

  for (const char* name : {"LARA", "LALEye", "LALREye", "LARALREye", "LARALEye"}) {
    const ChainCombo c = ChainCombo::parse(name);
    for (std::size_t n : {1u, 7u, 40u}) {
      CHECK(assemble(truth(), first(n), c).values.size() ==
            static_cast<Eigen::Index>(n * c.residuals_per_pose()));
    }
  }
}

TEST_CASE("residuals vanish at the truth on clean data") {
  const auto r = assemble(truth(), first(60), ChainCombo::parse("LARALREye"));
  CHECK(r.behind_camera == 0);
  CHECK(r.values.cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("touch residual subtracts contact noise") {
  PoseSample s = testing::clean_dataset().samples[0];
  const Eigen::Vector3d clean = touch_residual(truth(), s);
  s.contact_noise = Eigen::Vector3d(1, -2, 0.5);
  CHECK((touch_residual(truth(), s) - (clean - Eigen::Vector3d(1, -2, 0.5))).norm() < 1e-12);
}

TEST_CASE("pixel shift moves the residual the other way") {
  PoseSample s = testing::clean_dataset().samples[3];
  const Eigen::Vector2d before = reprojection_residual(truth(), s, Arm::Left, Eye::Right).value;
  s.observed_pixels[pair_index(Arm::Left, Eye::Right)]->u += 5.0;
  const Eigen::Vector2d after = reprojection_residual(truth(), s, Arm::Left, Eye::Right).value;
  CHECK(after.x() - before.x() == doctest::Approx(-5.0));
  CHECK(after.y() == before.y());
}

TEST_CASE("missing observation") {
  PoseSample s = testing::clean_dataset().samples[0];
  s.observed_pixels[pair_index(Arm::Right, Eye::Left)].reset();
  CHECK_THROWS_AS(reprojection_residual(truth(), s, Arm::Right, Eye::Left), MissingObservationError);
  std::vector<PoseSample> one{s};
  CHECK_THROWS_AS(assemble(truth(), one, ChainCombo::parse("LARALREye")), MissingObservationError);
  CHECK_NOTHROW(assemble(truth(), one, ChainCombo::parse("LALREye")));
}

TEST_CASE("behind camera sentinel") {
  PoseSample s = testing::clean_dataset().samples[0];
  // Turn the neck yaw far enough that the hand ends up behind the left eye.
  RobotModel m = truth();
  m.left_eye.links[3].offset += pi;
  sync_shared_head(m);
  const ReprojectionResidual r = reprojection_residual(m, s, Arm::Left, Eye::Left, 1e6);
  CHECK(r.behind_camera);
  CHECK(r.value == Eigen::Vector2d(1e6, 1e6));
  std::vector<PoseSample> one{s};
  CHECK(assemble(m, one, ChainCombo::parse("LALEye")).behind_camera == 1);
}

TEST_CASE("mu scales touch blocks only in mixed combos") {
  const auto samples = first(5);
  const ChainCombo mixed = ChainCombo::parse("LARALREye");
  RobotModel off = truth();
  off.right_arm.links[3].a += 2.0;  // produces a touch residual
  ResidualOptions a, b;
  a.mu_override = 1.0;
  b.mu_override = 3.0;
  const Eigen::VectorXd ra = assemble(off, samples, mixed, a).values;
  const Eigen::VectorXd rb = assemble(off, samples, mixed, b).values;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Eigen::Index base = static_cast<Eigen::Index>(i * 11);
    CHECK((rb.segment(base, 3) - 3 * ra.segment(base, 3)).norm() < 1e-9);
    CHECK((rb.segment(base + 3, 8) - ra.segment(base + 3, 8)).norm() == 0.0);
  }
  const ChainCombo touch = ChainCombo::parse("LARA");
  CHECK(assemble(off, samples, touch, a).values == assemble(off, samples, touch, b).values);

  // Default mode: mu from the eye-to-hand distance of the evaluated model.
  const Eigen::VectorXd rd = assemble(off, samples, mixed).values;
  const double mu0 = mu_coefficient(eye_to_hand_distance(off, samples[0]));
  CHECK((rd.segment(0, 3) - mu0 * touch_residual(off, samples[0])).norm() < 1e-9);
}

TEST_CASE("fixed mu mode uses the supplied values") {
  const auto samples = first(4);
  ResidualOptions opt;
  opt.mu_mode = MuMode::Fixed;
  opt.fixed_mu = mu_per_pose(truth(), samples);
  CHECK(assemble(truth(), samples, ChainCombo::parse("LARALREye"), opt).values.isApprox(
      assemble(truth(), samples, ChainCombo::parse("LARALREye")).values));
  opt.fixed_mu.pop_back();
  CHECK_THROWS_AS(assemble(truth(), samples, ChainCombo::parse("LARALREye"), opt), DimensionError);
}

TEST_CASE("forward-difference Jacobian against central differences") {
  std::mt19937_64 rng(2024);
  const char* combos[] = {"LARA", "LALEye", "LALREye", "LARALREye"};
  const char* masks[] = {"LA:all", "all:all", "RA:all;LEye:offset"};
  double worst = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    const ChainCombo combo = ChainCombo::parse(combos[instance % 4]);
    const ParameterMask mask = default_mask(truth(), MaskSelection::parse(masks[instance % 3]));
    const RobotModel model = perturb(truth(), mask, 5.0, rng);
    const std::size_t start = static_cast<std::size_t>(instance) % 100;
    const auto samples = std::span<const PoseSample>(testing::clean_dataset().samples).subspan(start, 3);
    const Eigen::MatrixXd j = jacobian(model, mask, samples, combo);
    const Eigen::MatrixXd oracle = central_jacobian(model, mask, samples, combo, {});
    REQUIRE(j.rows() == oracle.rows());
    REQUIRE(j.cols() == oracle.cols());
    worst = std::max(worst, (j - oracle).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("d of the last arm link moves the end-effector along its z axis") {
  const auto samples = first(3);
  const ParameterMask mask = default_mask(truth(), MaskSelection::parse("LA:all;LA[8].alpha=frozen"));
  const auto labels = mask.free_labels();
  const auto col = static_cast<Eigen::Index>(std::find(labels.begin(), labels.end(), "LA[8].d") - labels.begin());
  REQUIRE(col < static_cast<Eigen::Index>(labels.size()));
  ResidualOptions opt;
  opt.mu_override = 1.0;
  const Eigen::MatrixXd j = jacobian(truth(), mask, samples, ChainCombo::parse("LARA"), opt);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    // Frame 7 z axis: the d translation of link 8 happens before its rotation about x.
    const KinematicChain& la = truth().left_arm;
    KinematicChain head = la;
    head.links.resize(7);
    head.limits.resize(7);
    head.fixed_tail.reset();
    const JointAngles q = samples[i].arm_joints(Arm::Left);
    const Eigen::Vector3d z = forward_kinematics(head, q.head(7)).linear().col(2);
    // touch = X_RA - X_LA, so the column is -z.
    const Eigen::Vector3d got = j.block(static_cast<Eigen::Index>(3 * i), col, 3, 1);
    CHECK((got + z).norm() < 1e-6);
  }
}
