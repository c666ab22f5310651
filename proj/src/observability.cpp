#include "chaincal/observability.hpp"

#include "chaincal/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace chaincal {

ObservabilityReport observability_from_singular_values(std::vector<double> sv, std::size_t parameters,
                                                       std::size_t poses, std::size_t jacobian_rows) {
  if (poses == 0) throw Error("observability analysis needs at least one pose");
  std::sort(sv.begin(), sv.end(), std::greater<>());
  sv.resize(parameters, 0.0);

  ObservabilityReport rep;
  rep.parameters = parameters;
  rep.poses = poses;
  rep.singular_values = sv;
  if (parameters == 0) return rep;

  const double s1 = sv.front();
  rep.rank_tolerance = s1 * static_cast<double>(std::max(jacobian_rows, parameters)) *
                       std::numeric_limits<double>::epsilon();
  rep.rank = static_cast<std::size_t>(
      std::count_if(sv.begin(), sv.end(), [&](double s) { return s > rep.rank_tolerance; }));

  if (sv.back() <= 0.0) {
    rep.o1 = 0.0;
  } else {
    double log_sum = 0.0;
    for (double s : sv) log_sum += std::log(s);
    rep.o1 = std::exp(log_sum / static_cast<double>(parameters)) / std::sqrt(static_cast<double>(poses));
  }
  rep.o4 = rep.rank_deficient() || s1 <= 0.0 ? 0.0 : sv.back() * sv.back() / s1;
  return rep;
}

ObservabilityReport observability_from_jacobian(const Eigen::MatrixXd& jac, std::size_t poses) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
  const Eigen::VectorXd s = svd.singularValues();
  return observability_from_singular_values(std::vector<double>(s.data(), s.data() + s.size()),
                                            static_cast<std::size_t>(jac.cols()), poses,
                                            static_cast<std::size_t>(jac.rows()));
}

ObservabilityReport analyze(const RobotModel& model, const ParameterMask& mask, std::span<const PoseSample> samples,
                            const ChainCombo& combo, const ResidualOptions& options) {
  if (samples.empty()) throw Error("observability analysis needs at least one pose");
  return observability_from_jacobian(jacobian(model, mask, samples, combo, options), samples.size());
}

std::vector<bool> identifiable_parameters(const Eigen::MatrixXd& jac, double relative_threshold,
                                          double null_component_limit) {
  const Eigen::Index m = jac.cols();
  Eigen::MatrixXd scaled = jac;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double n = scaled.col(j).norm();
    if (n > 0.0) scaled.col(j) /= n;
  }
  std::vector<bool> out(static_cast<std::size_t>(m), false);
  if (m == 0) return out;
  // Thin V is m x min(rows, m); directions beyond the row count are null by construction.
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeFullV);
  const Eigen::VectorXd s = svd.singularValues();
  const double smax = s.size() > 0 ? s[0] : 0.0;
  const Eigen::MatrixXd& v = svd.matrixV();
  for (Eigen::Index j = 0; j < m; ++j) {
    double null_sq = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double sk = k < s.size() ? s[k] : 0.0;
      if (sk <= relative_threshold * smax) null_sq += v(j, k) * v(j, k);
    }
    out[static_cast<std::size_t>(j)] = std::sqrt(null_sq) < null_component_limit;
  }
  return out;
}

}  // namespace chaincal
