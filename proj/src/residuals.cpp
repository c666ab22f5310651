#include "chaincal/residuals.hpp"

#include "chaincal/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>

namespace chaincal {

namespace {

constexpr std::array<ReprojectionPair, 4> kCanonicalPairs = {
    ReprojectionPair{Arm::Left, Eye::Left}, ReprojectionPair{Arm::Left, Eye::Right},
    ReprojectionPair{Arm::Right, Eye::Left}, ReprojectionPair{Arm::Right, Eye::Right}};

std::string pair_name(const ReprojectionPair& p) {
  return fmt::format("{}-{}", arm_name(p.arm), eye_name(p.eye));
}

}  // namespace

ChainCombo ChainCombo::parse(std::string_view text) {
  struct Named {
    std::string_view name;
    bool touch;
    std::array<bool, 4> pairs;
  };
  static constexpr std::array<Named, 8> kNamed = {{
      {"LARA", true, {false, false, false, false}},
      {"LALEye", false, {true, false, false, false}},
      {"LAREye", false, {false, true, false, false}},
      {"RALEye", false, {false, false, true, false}},
      {"RAREye", false, {false, false, false, true}},
      {"LALREye", false, {true, true, false, false}},
      {"LARALEye", true, {true, false, true, false}},
      {"LARALREye", true, {true, true, true, true}},
  }};
  std::array<bool, 4> pairs{};
  ChainCombo combo;
  bool matched = false;
  for (const Named& n : kNamed) {
    if (n.name == text) {
      combo.touch = n.touch;
      pairs = n.pairs;
      matched = true;
    }
  }
  if (!matched) {
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t plus = text.find('+', start);
      const std::string_view item =
          text.substr(start, plus == std::string_view::npos ? std::string_view::npos : plus - start);
      bool known = false;
      if (item == "touch") {
        combo.touch = known = true;
      }
      for (std::size_t i = 0; i < kCanonicalPairs.size(); ++i) {
        if (item == pair_name(kCanonicalPairs[i])) pairs[i] = known = true;
      }
      if (!known) {
        throw ConfigError(fmt::format(
            "unknown chain combination '{}' (expected e.g. LARA, LALEye, LALREye, LARALREye or "
            "touch+LA-LEye)",
            text));
      }
      if (plus == std::string_view::npos) break;
      start = plus + 1;
    }
  }
  for (std::size_t i = 0; i < kCanonicalPairs.size(); ++i) {
    if (pairs[i]) combo.reprojections.push_back(kCanonicalPairs[i]);
  }
  if (!combo.touch && combo.reprojections.empty()) {
    throw ConfigError("a chain combination needs at least one touch or reprojection pair");
  }
  return combo;
}

std::string ChainCombo::name() const {
  for (std::string_view n : {"LARA", "LALEye", "LAREye", "RALEye", "RAREye", "LALREye", "LARALEye", "LARALREye"}) {
    if (parse(n) == *this) return std::string(n);
  }
  std::vector<std::string> items;
  if (touch) items.emplace_back("touch");
  for (const ReprojectionPair& p : reprojections) items.push_back(pair_name(p));
  std::string out;
  for (const std::string& s : items) out += (out.empty() ? "" : "+") + s;
  return out;
}

bool ChainCombo::uses(ChainId chain) const {
  if (touch && (chain == ChainId::LeftArm || chain == ChainId::RightArm)) return true;
  if (mixes_units() && chain == ChainId::LeftEye) return true;
  for (const ReprojectionPair& p : reprojections) {
    if (chain_of(p.arm) == chain || chain_of(p.eye) == chain) return true;
  }
  return false;
}

double mu_coefficient(double distance_mm) {
  if (!(distance_mm > 0.0) || !std::isfinite(distance_mm)) {
    throw GeometryError(fmt::format("eye to end-effector distance must be positive, got {}", distance_mm));
  }
  return 320.0 / (distance_mm * (std::numbers::pi / 3.0));
}

double eye_to_hand_distance(const RobotModel& model, const PoseSample& sample) {
  const Eigen::Vector3d hand = end_effector_position(model.left_arm, sample.arm_joints(Arm::Left));
  const Eigen::Vector3d eye = end_effector_position(model.left_eye, sample.eye_joints(Eye::Left));
  return (hand - eye).norm();
}

Eigen::Vector3d touch_residual(const RobotModel& model, const PoseSample& sample) {
  const Eigen::Vector3d right = end_effector_position(model.right_arm, sample.arm_joints(Arm::Right));
  const Eigen::Vector3d left = end_effector_position(model.left_arm, sample.arm_joints(Arm::Left));
  return right - left - sample.contact_noise;
}

namespace {

ReprojectionResidual reproject(const Transform& root_to_eye_tf, const Eigen::Vector3d& point_root,
                               const CameraIntrinsics& k, const PixelPoint& observed, double sentinel) {
  const Eigen::Vector3d p = root_to_eye_tf * point_root;
  ReprojectionResidual r;
  if (!(p.z() > 0.0)) {
    r.value = Eigen::Vector2d(sentinel, sentinel);
    r.behind_camera = true;
    return r;
  }
  r.value = Eigen::Vector2d(k.fx * p.x() / p.z() + k.cx - observed.u, k.fy * p.y() / p.z() + k.cy - observed.v);
  return r;
}

const PixelPoint& observed_pixel(const PoseSample& sample, Arm arm, Eye eye, std::size_t pose) {
  const auto& px = sample.observed_pixels[pair_index(arm, eye)];
  if (!px) {
    throw MissingObservationError(
        fmt::format("pose {} has no {}-{} pixel observation", pose, arm_name(arm), eye_name(eye)));
  }
  return *px;
}

}  // namespace

ReprojectionResidual reprojection_residual(const RobotModel& model, const PoseSample& sample, Arm arm,
                                           Eye eye, double sentinel) {
  const PixelPoint& obs = observed_pixel(sample, arm, eye, 0);
  const Eigen::Vector3d x = end_effector_position(model.chain(chain_of(arm)), sample.arm_joints(arm));
  return reproject(root_to_eye(model, eye, sample.eye_joints(eye)), x, model.intrinsics, obs, sentinel);
}

namespace {

/// Per-pose chain end frames; only the chains a combo needs are filled.
struct ChainCache {
  std::vector<Eigen::Vector3d> left_hand;
  std::vector<Eigen::Vector3d> right_hand;
  std::vector<Transform> left_eye_inv;
  std::vector<Eigen::Vector3d> left_eye_origin;
  std::vector<Transform> right_eye_inv;
};

void fill_chain(ChainCache& cache, const RobotModel& model, std::span<const PoseSample> samples, ChainId id) {
  const std::size_t n = samples.size();
  switch (id) {
    case ChainId::LeftArm:
      cache.left_hand.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        cache.left_hand[i] = end_effector_position(model.left_arm, samples[i].arm_joints(Arm::Left));
      break;
    case ChainId::RightArm:
      cache.right_hand.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        cache.right_hand[i] = end_effector_position(model.right_arm, samples[i].arm_joints(Arm::Right));
      break;
    case ChainId::LeftEye:
      cache.left_eye_inv.resize(n);
      cache.left_eye_origin.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Transform t = forward_kinematics(model.left_eye, samples[i].eye_joints(Eye::Left));
        cache.left_eye_origin[i] = t.translation();
        cache.left_eye_inv[i] = t.inverse(Eigen::Isometry);
      }
      break;
    case ChainId::RightEye:
      cache.right_eye_inv.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        cache.right_eye_inv[i] =
            forward_kinematics(model.right_eye, samples[i].eye_joints(Eye::Right)).inverse(Eigen::Isometry);
      break;
  }
}

void check_samples(std::span<const PoseSample> samples, const ChainCombo& combo, const ResidualOptions& opt) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const ReprojectionPair& p : combo.reprojections) observed_pixel(samples[i], p.arm, p.eye, i);
  }
  if (combo.mixes_units() && opt.mu_mode == MuMode::Fixed && !opt.mu_override &&
      opt.fixed_mu.size() != samples.size()) {
    throw DimensionError(fmt::format("fixed mu needs one value per pose ({} given, {} poses)",
                                     opt.fixed_mu.size(), samples.size()));
  }
}

ResidualVector residuals_from_cache(const ChainCache& c, const CameraIntrinsics& k,
                                    std::span<const PoseSample> samples, const ChainCombo& combo,
                                    const ResidualOptions& opt) {
  const std::size_t per_pose = combo.residuals_per_pose();
  ResidualVector out;
  out.values.resize(static_cast<Eigen::Index>(per_pose * samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Eigen::Index row = static_cast<Eigen::Index>(i * per_pose);
    if (combo.touch) {
      const Eigen::Vector3d r = c.right_hand[i] - c.left_hand[i] - samples[i].contact_noise;
      double mu = 1.0;
      if (combo.mixes_units()) {
        if (opt.mu_override) {
          mu = *opt.mu_override;
        } else if (opt.mu_mode == MuMode::Fixed) {
          mu = opt.fixed_mu[i];
        } else {
          mu = mu_coefficient((c.left_hand[i] - c.left_eye_origin[i]).norm());
        }
      }
      out.values.segment<3>(row) = mu * r;
      row += 3;
    }
    for (const ReprojectionPair& p : combo.reprojections) {
      const Eigen::Vector3d& x = p.arm == Arm::Left ? c.left_hand[i] : c.right_hand[i];
      const Transform& t = p.eye == Eye::Left ? c.left_eye_inv[i] : c.right_eye_inv[i];
      const ReprojectionResidual r =
          reproject(t, x, k, *samples[i].observed_pixels[pair_index(p.arm, p.eye)], opt.behind_camera_sentinel);
      out.values.segment<2>(row) = r.value;
      if (r.behind_camera) ++out.behind_camera;
      row += 2;
    }
  }
  return out;
}

ChainCache build_cache(const RobotModel& model, std::span<const PoseSample> samples, const ChainCombo& combo) {
  ChainCache cache;
  for (ChainId id : kAllChains) {
    if (combo.uses(id)) fill_chain(cache, model, samples, id);
  }
  return cache;
}

}  // namespace

ResidualVector assemble(const RobotModel& model, std::span<const PoseSample> samples, const ChainCombo& combo,
                        const ResidualOptions& options) {
  check_samples(samples, combo, options);
  return residuals_from_cache(build_cache(model, samples, combo), model.intrinsics, samples, combo, options);
}

std::vector<double> mu_per_pose(const RobotModel& model, std::span<const PoseSample> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const PoseSample& s : samples) out.push_back(mu_coefficient(eye_to_hand_distance(model, s)));
  return out;
}

double jacobian_step(Field field) { return is_length(field) ? 1e-3 : 1e-7; }

Eigen::MatrixXd jacobian(const RobotModel& model, const ParameterMask& mask, std::span<const PoseSample> samples,
                         const ChainCombo& combo, const ResidualOptions& options) {
  check_samples(samples, combo, options);
  const ChainCache base = build_cache(model, samples, combo);
  const ResidualVector r0 = residuals_from_cache(base, model.intrinsics, samples, combo, options);

  const std::vector<std::size_t> free = mask.free_entry_indices();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(r0.values.size(), static_cast<Eigen::Index>(free.size()));
  RobotModel work = model;
  for (std::size_t col = 0; col < free.size(); ++col) {
    const ParameterEntry& e = mask.entries[free[col]];
    const bool shared = e.chain == ChainId::LeftEye && e.link < kSharedHeadLinks;
    const bool affects = combo.uses(e.chain) || (shared && combo.uses(ChainId::RightEye));
    if (!affects) continue;

    const double h = jacobian_step(e.field);
    double& slot = field_ref(work.chain(e.chain).links.at(e.link), e.field);
    const double saved = slot;
    slot = saved + h;
    if (shared) field_ref(work.right_eye.links.at(e.link), e.field) = saved + h;
    // The actually representable step keeps the quotient consistent.
    const double step = slot - saved;

    ChainCache c = base;
    if (combo.uses(e.chain)) fill_chain(c, work, samples, e.chain);
    if (shared && combo.uses(ChainId::RightEye)) fill_chain(c, work, samples, ChainId::RightEye);
    const ResidualVector r = residuals_from_cache(c, work.intrinsics, samples, combo, options);
    jac.col(static_cast<Eigen::Index>(col)) = (r.values - r0.values) / step;

    slot = saved;
    if (shared) field_ref(work.right_eye.links.at(e.link), e.field) = saved;
  }
  return jac;
}

}  // namespace chaincal
