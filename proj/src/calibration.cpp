#include "chaincal/calibration.hpp"

#include "chaincal/error.hpp"

#include <fmt/format.h>

namespace chaincal {

CalibrationOutcome solve_subset(const RobotModel& initial, const ParameterMask& mask,
                                std::span<const PoseSample> samples, const ChainCombo& combo,
                                const CalibrationOptions& options) {
  const std::size_t m = mask.free_count();
  if (m == 0) throw ConfigError("the parameter mask has no free entries");
  if (samples.empty()) throw ConfigError("calibration needs at least one pose");

  ResidualOptions ropt = options.residuals;
  if (options.freeze_mu_at_initial && !ropt.mu_override) {
    ropt.mu_mode = MuMode::Fixed;
    ropt.fixed_mu = mu_per_pose(initial, samples);
  }

  const ParameterVector phi0 = pack(initial, mask);
  Eigen::VectorXd scale = options.parameter_scale;
  if (scale.size() == 0) scale = Eigen::VectorXd::Ones(phi0.size());
  if (scale.size() != phi0.size()) {
    throw DimensionError(fmt::format("parameter scale has {} entries, mask frees {}", scale.size(), m));
  }

  LeastSquaresProblem problem;
  problem.residual = [&](const Eigen::VectorXd& z) {
    const ResidualVector r = assemble(unpack(initial, mask, z.cwiseProduct(scale)), samples, combo, ropt);
    return ResidualEvaluation{r.values, r.behind_camera};
  };
  problem.jacobian = [&](const Eigen::VectorXd& z) {
    Eigen::MatrixXd j = jacobian(unpack(initial, mask, z.cwiseProduct(scale)), mask, samples, combo, ropt);
    return Eigen::MatrixXd(j * scale.asDiagonal());
  };

  CalibrationOutcome out;
  out.mask = mask;
  out.initial = phi0;
  out.report = solve(problem, phi0.cwiseQuotient(scale), options.solver);
  out.estimate = out.report.solution.cwiseProduct(scale);
  out.report.solution = out.estimate;
  out.model = unpack(initial, mask, out.estimate);
  out.residual_count = samples.size() * combo.residuals_per_pose();

  const ObservabilityReport obs =
      observability_from_jacobian(jacobian(out.model, mask, samples, combo, ropt), samples.size());
  out.jacobian_rank = obs.rank;
  out.rank_deficient = obs.rank_deficient();
  if (out.rank_deficient) {
    out.warnings.push_back(fmt::format(
        "rank-deficient identification Jacobian: rank {} < {} free parameters ({} residual equations)",
        obs.rank, m, out.residual_count));
  }
  if (out.report.behind_camera_count > 0) {
    out.warnings.push_back(
        fmt::format("{} behind-camera residuals replaced by the sentinel", out.report.behind_camera_count));
  }
  return out;
}

}  // namespace chaincal
