#include "chaincal/metrics.hpp"

#include "chaincal/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace chaincal {

double cartesian_error(const Eigen::Vector3d& a, const Eigen::Vector3d& b) { return (a - b).norm(); }

ParameterErrors parameter_errors(const std::vector<ParameterVector>& estimates, const RobotModel& truth,
                                 const ParameterMask& mask) {
  if (estimates.empty()) throw ConfigError("parameter errors need at least one repetition");
  const ParameterVector phi = pack(truth, mask);
  for (const ParameterVector& e : estimates) {
    if (e.size() != phi.size()) {
      throw DimensionError(fmt::format("estimate has {} entries, mask frees {}", e.size(), phi.size()));
    }
  }
  const double r = static_cast<double>(estimates.size());
  ParameterErrors out;
  out.labels = mask.free_labels();
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    double abs_sum = 0.0;
    double sum = 0.0;
    for (const ParameterVector& e : estimates) {
      abs_sum += std::abs(e[i] - phi[i]);
      sum += e[i];
    }
    const double mean = sum / r;
    double ss = 0.0;
    for (const ParameterVector& e : estimates) ss += (e[i] - mean) * (e[i] - mean);
    out.mean_abs_error.push_back(abs_sum / r);
    out.estimate_std.push_back(estimates.size() > 1 ? std::sqrt(ss / (r - 1.0)) : 0.0);
  }
  return out;
}

ParameterErrors parameter_errors(const std::vector<ParameterVector>& estimates,
                                 const std::vector<ParameterMask>& masks, const RobotModel& truth,
                                 const ParameterMask& mask) {
  if (masks.size() != estimates.size()) throw ConfigError("one mask per repetition is required");
  for (std::size_t r = 0; r < masks.size(); ++r) {
    if (!(masks[r] == mask)) throw ConfigError(fmt::format("repetition {} used a different parameter mask", r));
  }
  return parameter_errors(estimates, truth, mask);
}

std::string_view evaluation_name(Evaluation e) {
  return e == Evaluation::EndEffector3d ? "ee3d" : "reprojection";
}

std::vector<Arm> evaluated_arms(const ParameterMask& mask) {
  std::vector<Arm> arms;
  if (mask.touches(ChainId::LeftArm)) arms.push_back(Arm::Left);
  if (mask.touches(ChainId::RightArm)) arms.push_back(Arm::Right);
  if (arms.empty()) arms.push_back(Arm::Left);
  return arms;
}

Evaluation default_evaluation(const ParameterMask& mask) {
  return mask.touches(ChainId::LeftArm) || mask.touches(ChainId::RightArm) ? Evaluation::EndEffector3d
                                                                            : Evaluation::Reprojection;
}

namespace {

double pose_error(const RobotModel& cal, const RobotModel& truth, const PoseSample& s, Evaluation ev,
                  const std::vector<Arm>& arms) {
  double sum = 0.0;
  int n = 0;
  for (Arm arm : arms) {
    const ChainId id = chain_of(arm);
    const JointAngles q = s.arm_joints(arm);
    const Eigen::Vector3d xc = end_effector_position(cal.chain(id), q);
    const Eigen::Vector3d xt = end_effector_position(truth.chain(id), q);
    if (ev == Evaluation::EndEffector3d) {
      sum += cartesian_error(xc, xt);
      ++n;
      continue;
    }
    for (Eye eye : {Eye::Left, Eye::Right}) {
      const Eigen::Vector3d pc = root_to_eye(cal, eye, s.eye_joints(eye)) * xc;
      const Eigen::Vector3d pt = root_to_eye(truth, eye, s.eye_joints(eye)) * xt;
      if (!(pc.z() > 0.0) || !(pt.z() > 0.0)) continue;
      sum += (project(pc, cal.intrinsics).vector() - project(pt, truth.intrinsics).vector()).norm();
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace

TestError test_error(const RobotModel& calibrated, const RobotModel& truth, std::span<const PoseSample> test,
                     Evaluation evaluation, const std::vector<Arm>& arms) {
  TestError out;
  out.evaluation = evaluation;
  if (test.empty()) return out;
  double sum = 0.0;
  for (const PoseSample& s : test) {
    out.per_pose.push_back(pose_error(calibrated, truth, s, evaluation, arms));
    sum += out.per_pose.back();
  }
  out.mean = sum / static_cast<double>(test.size());
  if (test.size() > 1) {
    double ss = 0.0;
    for (double e : out.per_pose) ss += (e - out.mean) * (e - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(test.size() - 1));
  }
  return out;
}

std::vector<ScatterRow> residual_scatter(const RobotModel& calibrated, const RobotModel& truth,
                                         std::span<const PoseSample> test, std::size_t repetition,
                                         const std::vector<Arm>& arms) {
  std::vector<ScatterRow> rows;
  rows.reserve(test.size() * arms.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (Arm arm : arms) {
      const ChainId id = chain_of(arm);
      const JointAngles q = test[i].arm_joints(arm);
      rows.push_back({repetition, i, arm,
                      end_effector_position(calibrated.chain(id), q) - end_effector_position(truth.chain(id), q)});
    }
  }
  return rows;
}

}  // namespace chaincal
