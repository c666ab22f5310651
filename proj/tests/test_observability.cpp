#include "chaincal/observability.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>
#include <random>

using namespace chaincal;

TEST_CASE("indices from a known spectrum") {
  const ObservabilityReport r = observability_from_singular_values({1.0, 4.0, 2.0}, 3, 4, 12);
  CHECK(r.singular_values == std::vector<double>{4.0, 2.0, 1.0});
  CHECK(r.o4 == 0.25);
  CHECK(r.o1 == doctest::Approx(2.0 / 2.0));  // cube root of 8 over sqrt(4)
  CHECK(r.rank == 3);
  CHECK_FALSE(r.rank_deficient());
}

TEST_CASE("missing singular values make the spectrum deficient") {
  const ObservabilityReport r = observability_from_singular_values({3.0, 1.0}, 4, 1, 2);
  CHECK(r.singular_values.size() == 4);
  CHECK(r.rank == 2);
  CHECK(r.rank_deficient());
  CHECK(r.o1 == 0.0);
  CHECK(r.o4 == 0.0);
}

TEST_CASE("diagonal Jacobian") {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(6, 3);
  j(0, 0) = 3.0;
  j(2, 1) = -6.0;
  j(5, 2) = 0.5;
  const ObservabilityReport r = observability_from_jacobian(j, 3);
  CHECK(r.singular_values[0] == doctest::Approx(6.0));
  CHECK(r.singular_values[2] == doctest::Approx(0.5));
  CHECK(r.o1 == doctest::Approx(std::cbrt(9.0) / std::sqrt(3.0)));
  CHECK(r.o4 == doctest::Approx(0.25 / 6.0));
  CHECK(r.rank_tolerance == doctest::Approx(6.0 * 6 * std::numeric_limits<double>::epsilon()));
}

TEST_CASE("duplicate column is rank deficient") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Eigen::MatrixXd j(10, 4);
  for (Eigen::Index i = 0; i < j.size(); ++i) j.data()[i] = n(rng);
  j.col(3) = 2 * j.col(1);
  const ObservabilityReport r = observability_from_jacobian(j, 5);
  CHECK(r.rank == 3);
  CHECK(r.rank_deficient());
  CHECK(r.o4 == 0.0);
  const auto ident = identifiable_parameters(j);
  CHECK(ident == std::vector<bool>{true, false, true, false});
}

TEST_CASE("adding rows never lowers singular values") {
  // Interlacing: singular values of [J; K] dominate those of J.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index cols = 2 + trial % 6;
    Eigen::MatrixXd j(cols + 3, cols), k(4, cols);
    for (Eigen::Index i = 0; i < j.size(); ++i) j.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = n(rng);
    Eigen::MatrixXd stacked(j.rows() + k.rows(), cols);
    stacked << j, k;
    const auto a = observability_from_jacobian(j, 1).singular_values;
    const auto b = observability_from_jacobian(stacked, 1).singular_values;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] >= a[i] - 1e-12);
  }
}

TEST_CASE("column scaling does not change identifiability") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  Eigen::MatrixXd j(8, 3);
  for (Eigen::Index i = 0; i < j.size(); ++i) j.data()[i] = n(rng);
  j.col(0) *= 1e6;
  CHECK(identifiable_parameters(j) == std::vector<bool>{true, true, true});
}

TEST_CASE("combos with more loops observe the left arm better") {
  const RobotModel truth = default_icub_model();
  const auto& data = testing::clean_dataset();
  const std::vector<PoseSample> poses(data.samples.begin(), data.samples.begin() + 50);
  const ParameterMask mask = default_mask(truth, MaskSelection::parse("LA:all"));
  const auto full = analyze(truth, mask, poses, ChainCombo::parse("LARALREye"));
  const auto stereo = analyze(truth, mask, poses, ChainCombo::parse("LALREye"));
  const auto mono = analyze(truth, mask, poses, ChainCombo::parse("LALEye"));
  CHECK(full.parameters == 27);
  CHECK(full.poses == 50);
  CHECK(full.o1 > stereo.o1);
  CHECK(stereo.o1 > mono.o1);
  CHECK(full.o4 > stereo.o4);
  CHECK(stereo.o4 > mono.o4);

  const std::vector<PoseSample> ten(data.samples.begin(), data.samples.begin() + 10);
  CHECK(analyze(truth, mask, ten, ChainCombo::parse("LALEye")).rank_deficient());
}
