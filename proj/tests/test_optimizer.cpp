#include "chaincal/calibration.hpp"
#include "chaincal/error.hpp"
#include "chaincal/optimizer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <random>

using namespace chaincal;

namespace {

LeastSquaresProblem linear_problem(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  LeastSquaresProblem p;
  p.residual = [a, b](const Eigen::VectorXd& x) { return ResidualEvaluation{a * x - b, 0}; };
  p.jacobian = [a](const Eigen::VectorXd&) { return a; };
  return p;
}

LeastSquaresProblem rosenbrock() {
  LeastSquaresProblem p;
  p.residual = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(2);
    r << 10 * (x[1] - x[0] * x[0]), 1 - x[0];
    return ResidualEvaluation{r, 0};
  };
  p.jacobian = [](const Eigen::VectorXd& x) {
    Eigen::MatrixXd j(2, 2);
    j << -20 * x[0], 10, -1, 0;
    return j;
  };
  return p;
}

bool non_increasing(const std::vector<double>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] > trace[i - 1]) return false;
  return true;
}

}  // namespace

TEST_CASE("orthogonal linear system solves in at most three steps") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd g(12, 5);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(12, 5);
    Eigen::VectorXd b(12);
    for (Eigen::Index i = 0; i < 12; ++i) b[i] = n(rng);
    const SolveReport rep = solve(linear_problem(q, b), Eigen::VectorXd::Zero(5));
    const Eigen::VectorXd exact = q.transpose() * b;
    CHECK(rep.iterations <= 3);
    CHECK((rep.solution - exact).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("generic linear system reaches the normal-equation solution") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd a(30, 6);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
    a.col(2) *= 20.0;
    Eigen::VectorXd b(30);
    for (Eigen::Index i = 0; i < 30; ++i) b[i] = n(rng);
    const SolveReport rep = solve(linear_problem(a, b), Eigen::VectorXd::Zero(6));
    const Eigen::VectorXd exact = a.colPivHouseholderQr().solve(b);
    // With a non-zero residual at the optimum the cost is flat to rounding
    // within about sqrt(eps) of it.
    CHECK((rep.solution - exact).cwiseAbs().maxCoeff() < 1e-7);
    CHECK(rep.final_cost <= (a * exact - b).squaredNorm() * (1 + 1e-12));
    CHECK(non_increasing(rep.cost_trace));
  }
}

TEST_CASE("Rosenbrock converges to (1, 1)") {
  for (const Eigen::Vector2d x0 : {Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(2.0, -1.0), Eigen::Vector2d(0, 0)}) {
    SolverSettings s;
    s.max_iterations = 500;
    const SolveReport rep = solve(rosenbrock(), x0, s);
    CHECK((rep.solution - Eigen::Vector2d(1, 1)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(non_increasing(rep.cost_trace));
    CHECK(rep.cost_trace.size() == static_cast<std::size_t>(rep.iterations) + 1);
  }
}

TEST_CASE("Rosenbrock with the fallback difference Jacobian") {
  LeastSquaresProblem p = rosenbrock();
  p.jacobian = nullptr;
  SolverSettings s;
  s.max_iterations = 500;
  const SolveReport rep = solve(p, Eigen::Vector2d(-1.2, 1.0), s);
  CHECK((rep.solution - Eigen::Vector2d(1, 1)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("Rosenbrock minimum agrees with plain gradient descent") {
  // Slow but independent: fixed-step descent on 0.5*|r|^2 from near the valley.
  Eigen::Vector2d x(0.8, 0.64);
  for (int i = 0; i < 200000; ++i) {
    const double r1 = 10 * (x[1] - x[0] * x[0]), r2 = 1 - x[0];
    const Eigen::Vector2d g(-20 * x[0] * r1 - r2, 10 * r1);
    x -= 1e-3 * g;
  }
  const SolveReport rep = solve(rosenbrock(), Eigen::Vector2d(0.8, 0.64));
  CHECK((rep.solution - x).norm() < 1e-6);
}

TEST_CASE("non-finite start is rejected") {
  LeastSquaresProblem p;
  p.residual = [](const Eigen::VectorXd& x) {
    return ResidualEvaluation{Eigen::VectorXd::Constant(1, std::log(x[0])), 0};
  };
  CHECK_THROWS_AS(solve(p, Eigen::VectorXd::Constant(1, -1.0)), SolverError);
  CHECK_THROWS_AS(solve(rosenbrock(), Eigen::Vector2d(std::numeric_limits<double>::quiet_NaN(), 0)), SolverError);
}

TEST_CASE("settings validation") {
  SolverSettings s;
  s.cost_tolerance = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.damping_up = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_NOTHROW(SolverSettings{}.validate());
}

TEST_CASE("noiseless self-touch calibration reaches the generation tolerance") {
  const RobotModel truth = default_icub_model();
  GenerationSettings g;
  g.count = 1000;
  g.seed = 21;
  const Dataset data = generate(truth, g);
  const ParameterMask mask = default_mask(truth, MaskSelection::parse("LA:all;RA:all"));
  std::mt19937_64 rng(4);
  const RobotModel start = perturb(truth, mask, 2.0, rng);
  const CalibrationOutcome out = solve_subset(start, mask, data.samples, ChainCombo::parse("LARA"));
  CHECK(out.report.final_cost < g.contact_tolerance_mm * g.contact_tolerance_mm);
  CHECK(non_increasing(out.report.cost_trace));
}

TEST_CASE("offsets alone are recovered exactly from clean data") {
  const RobotModel truth = default_icub_model();
  const auto& data = testing::clean_dataset();
  const std::vector<PoseSample> train(data.samples.begin(), data.samples.begin() + 50);
  const ParameterMask mask = default_mask(truth, MaskSelection::parse("LA:offset"));
  std::mt19937_64 rng(8);
  const RobotModel start = perturb(truth, mask, 5.0, rng);
  const CalibrationOutcome out = solve_subset(start, mask, train, ChainCombo::parse("LARALREye"));
  CHECK((out.estimate - pack(truth, mask)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_FALSE(out.rank_deficient);
}

TEST_CASE("empty mask is a configuration error") {
  const RobotModel truth = default_icub_model();
  const ParameterMask mask = default_mask(truth, MaskSelection::parse(""));
  CHECK_THROWS_AS(solve_subset(truth, mask, testing::clean_dataset().samples, ChainCombo::parse("LARA")),
                  ConfigError);
}

TEST_CASE("too few monocular poses are flagged as rank deficient") {
  const RobotModel truth = default_icub_model();
  const auto& data = testing::clean_dataset();
  const std::vector<PoseSample> train(data.samples.begin(), data.samples.begin() + 10);
  const ParameterMask mask = default_mask(truth, MaskSelection::parse("LA:all"));
  std::mt19937_64 rng(9);
  const CalibrationOutcome out =
      solve_subset(perturb(truth, mask, 5.0, rng), mask, train, ChainCombo::parse("LALEye"));
  CHECK(out.rank_deficient);
  CHECK(out.jacobian_rank <= 20);
  CHECK_FALSE(out.warnings.empty());
}
