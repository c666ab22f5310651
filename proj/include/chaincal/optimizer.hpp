#pragma once

#include <Eigen/Core>

#include <functional>
#include <string_view>
#include <vector>

namespace chaincal {

struct SolverSettings {
  int max_iterations = 200;
  double cost_tolerance = 1e-12;  // relative cost decrease
  double step_tolerance = 1e-10;  // relative step length
  double initial_damping = 1e-3;  // times the largest diagonal of J^T J
  double damping_up = 2.0;
  double damping_down = 3.0;

  /// Throws ConfigError unless tolerances > 0 and factors > 1.
  void validate() const;
};

enum class Termination { CostTolerance, StepTolerance, MaxIterations };

std::string_view termination_name(Termination t);

struct SolveReport {
  Eigen::VectorXd solution;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  Termination termination = Termination::MaxIterations;
  /// Cost at the start and after every accepted step (non-increasing).
  std::vector<double> cost_trace;
  /// Behind-camera sentinel residuals seen over all evaluations.
  long behind_camera_count = 0;
};

struct ResidualEvaluation {
  Eigen::VectorXd values;
  long behind_camera = 0;
};

/// Closures over the parameter vector. If `jacobian` is empty a forward
/// difference with `fallback_step` is used.
struct LeastSquaresProblem {
  std::function<ResidualEvaluation(const Eigen::VectorXd&)> residual;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  double fallback_step = 1e-7;
};

/**
 * Levenberg-Marquardt on cost = ||r||^2.
 *
 * Damped normal equations (J^T J + lambda I) dx = -J^T r with lambda0 =
 * initial_damping * max diag(J^T J); lambda /= damping_down on an accepted
 * step and lambda *= damping_up on a rejected one. Accepted costs never
 * increase and the best iterate is returned. Throws SolverError when the
 * residual at x0 is not finite.
 */
SolveReport solve(const LeastSquaresProblem& problem, const Eigen::VectorXd& x0,
                  const SolverSettings& settings = {});

Eigen::MatrixXd forward_difference_jacobian(
    const std::function<ResidualEvaluation(const Eigen::VectorXd&)>& residual, const Eigen::VectorXd& x,
    const Eigen::VectorXd& r0, double step);

}  // namespace chaincal
