#include "chaincal/optimizer.hpp"

#include "chaincal/error.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace chaincal {

void SolverSettings::validate() const {
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (!(cost_tolerance > 0.0) || !(step_tolerance > 0.0)) throw ConfigError("solver tolerances must be > 0");
  if (!(initial_damping > 0.0)) throw ConfigError("initial_damping must be > 0");
  if (!(damping_up > 1.0) || !(damping_down > 1.0)) throw ConfigError("damping factors must be > 1");
}

std::string_view termination_name(Termination t) {
  switch (t) {
    case Termination::CostTolerance: return "cost_tol";
    case Termination::StepTolerance: return "step_tol";
    case Termination::MaxIterations: return "max_iter";
  }
  return "?";
}

Eigen::MatrixXd forward_difference_jacobian(
    const std::function<ResidualEvaluation(const Eigen::VectorXd&)>& residual, const Eigen::VectorXd& x,
    const Eigen::VectorXd& r0, double step) {
  Eigen::MatrixXd jac(r0.size(), x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + step;
    const double h = xp[j] - x[j];
    jac.col(j) = (residual(xp).values - r0) / h;
    xp[j] = x[j];
  }
  return jac;
}

SolveReport solve(const LeastSquaresProblem& problem, const Eigen::VectorXd& x0, const SolverSettings& settings) {
  settings.validate();
  if (!x0.allFinite()) throw SolverError("initial parameter vector is not finite");

  SolveReport report;
  Eigen::VectorXd x = x0;
  ResidualEvaluation r = problem.residual(x);
  report.behind_camera_count += r.behind_camera;
  if (r.values.size() == 0) throw SolverError("residual vector is empty");
  if (!r.values.allFinite()) throw SolverError("residual is not finite at the initial guess");

  double cost = r.values.squaredNorm();
  report.initial_cost = cost;
  report.cost_trace.push_back(cost);

  auto eval_jacobian = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& r_at) {
    if (problem.jacobian) return problem.jacobian(at);
    return forward_difference_jacobian(problem.residual, at, r_at, problem.fallback_step);
  };

  const Eigen::Index n = x.size();
  Eigen::MatrixXd jac = eval_jacobian(x, r.values);
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::VectorXd grad = jac.transpose() * r.values;
  const double max_diag = n > 0 ? jtj.diagonal().maxCoeff() : 0.0;
  double lambda = settings.initial_damping * (max_diag > 0.0 ? max_diag : 1.0);

  report.termination = Termination::MaxIterations;
  bool done = n == 0 || cost == 0.0;
  if (done) report.termination = Termination::CostTolerance;

  while (!done && report.iterations < settings.max_iterations) {
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal().array() += lambda;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      Eigen::VectorXd dx;
      bool usable = ldlt.info() == Eigen::Success;
      if (usable) {
        dx = ldlt.solve(-grad);
        usable = dx.allFinite();
      }
      if (!usable) {
        lambda *= settings.damping_up;
        if (!std::isfinite(lambda)) {
          report.termination = Termination::StepTolerance;
          done = true;
          break;
        }
        continue;
      }
      if (dx.norm() <= settings.step_tolerance * (x.norm() + settings.step_tolerance)) {
        report.termination = Termination::StepTolerance;
        done = true;
        break;
      }
      const Eigen::VectorXd x_new = x + dx;
      const ResidualEvaluation r_new = problem.residual(x_new);
      report.behind_camera_count += r_new.behind_camera;
      const double cost_new = r_new.values.allFinite() ? r_new.values.squaredNorm()
                                                       : std::numeric_limits<double>::infinity();
      if (cost_new < cost) {
        const double relative_decrease = (cost - cost_new) / cost;
        x = x_new;
        r = r_new;
        cost = cost_new;
        lambda /= settings.damping_down;
        accepted = true;
        ++report.iterations;
        report.cost_trace.push_back(cost);
        if (relative_decrease < settings.cost_tolerance || cost == 0.0) {
          report.termination = Termination::CostTolerance;
          done = true;
        }
      } else {
        lambda *= settings.damping_up;
        if (!std::isfinite(lambda)) {
          report.termination = Termination::StepTolerance;
          done = true;
          break;
        }
      }
    }
    if (!done && accepted) {
      jac = eval_jacobian(x, r.values);
      jtj.noalias() = jac.transpose() * jac;
      grad.noalias() = jac.transpose() * r.values;
    }
  }

  report.solution = x;
  report.final_cost = cost;
  return report;
}

}  // namespace chaincal
