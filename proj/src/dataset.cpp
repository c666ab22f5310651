#include "chaincal/dataset.hpp"

#include "chaincal/error.hpp"
#include "chaincal/model_io.hpp"
#include "chaincal/optimizer.hpp"
#include "chaincal/parallel.hpp"
#include "chaincal/seeding.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>

namespace chaincal {

using nlohmann::json;

std::string NoiseSpec::label() const {
  return fmt::format("{}E{}T", sigma_camera_px, sigma_touch_mm);
}

std::vector<PoseSample> Dataset::select(const std::vector<std::size_t>& indices) const {
  std::vector<PoseSample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(samples.at(i));
  return out;
}

namespace {

enum class Stage { LeftArm, RightArm, Gaze, Limits, BehindCamera, Contact };
constexpr std::array<std::string_view, 6> kStageNames = {
    "left-arm IK", "right-arm IK", "gaze", "joint limits", "behind camera", "contact tolerance"};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Joints 2..n of a chain mapped from unconstrained z: q = c + h sin(z).
struct JointMap {
  Eigen::VectorXd center;
  Eigen::VectorXd half;

  JointMap(const KinematicChain& chain, Eigen::Index first, Eigen::Index count)
      : center(count), half(count) {
    for (Eigen::Index i = 0; i < count; ++i) {
      const JointLimit& l = chain.limits.at(static_cast<std::size_t>(first + i));
      center[i] = 0.5 * (l.min + l.max);
      half[i] = 0.5 * (l.max - l.min);
    }
  }
  Eigen::VectorXd to_q(const Eigen::VectorXd& z) const {
    return center + half.cwiseProduct(z.array().sin().matrix());
  }
};

SolverSettings ik_settings() {
  SolverSettings s;
  s.max_iterations = 300;
  s.cost_tolerance = 1e-30;
  s.step_tolerance = 1e-15;
  return s;
}

JointAngles with_root(const Eigen::VectorXd& q) {
  JointAngles full = JointAngles::Zero(q.size() + 1);
  full.tail(q.size()) = q;
  return full;
}

std::optional<JointAngles> solve_left_arm(const RobotModel& m, const Eigen::Vector3d& target,
                                          const GenerationSettings& gs, std::mt19937_64& rng) {
  const JointMap map(m.left_arm, 1, 7);
  LeastSquaresProblem p;
  p.residual = [&](const Eigen::VectorXd& z) {
    return ResidualEvaluation{end_effector_position(m.left_arm, with_root(map.to_q(z))) - target, 0};
  };
  for (int attempt = 0; attempt < gs.ik_restarts; ++attempt) {
    Eigen::VectorXd z0(7);
    for (Eigen::Index i = 0; i < 7; ++i) z0[i] = uniform(rng, -std::numbers::pi / 2, std::numbers::pi / 2);
    const SolveReport rep = solve(p, z0, ik_settings());
    if (std::sqrt(rep.final_cost) <= gs.ik_tolerance_mm) return with_root(map.to_q(rep.solution));
  }
  return std::nullopt;
}

std::optional<JointAngles> solve_right_arm(const RobotModel& m, const Eigen::Vector3d& target,
                                           const Eigen::Vector3d& palm_normal, const GenerationSettings& gs,
                                           std::mt19937_64& rng) {
  const JointMap map(m.right_arm, 1, 7);
  const double cos_limit = std::cos(gs.finger_cone_deg * std::numbers::pi / 180.0);
  auto cone_violation = [&](const Transform& t) {
    return std::max(0.0, cos_limit - t.linear().col(2).dot(-palm_normal));
  };
  LeastSquaresProblem p;
  p.residual = [&](const Eigen::VectorXd& z) {
    const Transform t = forward_kinematics(m.right_arm, with_root(map.to_q(z)));
    Eigen::VectorXd r(4);
    r.head<3>() = t.translation() - target;
    r[3] = 100.0 * cone_violation(t);
    return ResidualEvaluation{r, 0};
  };
  for (int attempt = 0; attempt < gs.ik_restarts; ++attempt) {
    Eigen::VectorXd z0(7);
    for (Eigen::Index i = 0; i < 7; ++i) z0[i] = uniform(rng, -std::numbers::pi / 2, std::numbers::pi / 2);
    const SolveReport rep = solve(p, z0, ik_settings());
    const JointAngles q = with_root(map.to_q(rep.solution));
    const Transform t = forward_kinematics(m.right_arm, q);
    if ((t.translation() - target).norm() <= gs.ik_tolerance_mm && cone_violation(t) <= 1e-9) return q;
  }
  return std::nullopt;
}

struct HeadSolution {
  Eigen::Vector3d neck;
  double tilt = 0.0;
  double left_pan = 0.0;
  double right_pan = 0.0;
};

JointAngles eye_q(const Eigen::VectorXd& h, Eye eye) {
  JointAngles q = JointAngles::Zero(6);
  q.segment<4>(1) = h.head<4>();
  q[5] = h[eye == Eye::Left ? 4 : 5];
  return q;
}

/// Points both optical rays at the target so that it lands on the desired pixels.
std::optional<HeadSolution> solve_gaze(const RobotModel& m, const Eigen::Vector3d& target,
                                       const GenerationSettings& gs, std::mt19937_64& rng) {
  const CameraIntrinsics& k = m.intrinsics;
  // Aim well inside the tolerance disc so the final check has slack.
  const double aim_radius = 0.75 * gs.gaze_tolerance_px;
  std::array<Eigen::Vector3d, 2> ray;
  std::array<Eigen::Vector2d, 2> desired;
  for (std::size_t e = 0; e < 2; ++e) {
    const double r = aim_radius * std::sqrt(uniform(rng, 0.0, 1.0));
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    desired[e] = Eigen::Vector2d(k.cx + r * std::cos(phi), k.cy + r * std::sin(phi));
    ray[e] = Eigen::Vector3d((desired[e].x() - k.cx) / k.fx, (desired[e].y() - k.cy) / k.fy, 1.0).normalized();
  }

  Eigen::VectorXd center(6), half(6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const KinematicChain& c = i < 5 ? m.left_eye : m.right_eye;
    const std::size_t link = static_cast<std::size_t>(i < 5 ? i + 1 : 5);
    center[i] = 0.5 * (c.limits.at(link).min + c.limits.at(link).max);
    half[i] = 0.5 * (c.limits.at(link).max - c.limits.at(link).min);
  }
  auto to_h = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return center + half.cwiseProduct(z.array().sin().matrix());
  };

  LeastSquaresProblem p;
  p.residual = [&](const Eigen::VectorXd& z) {
    const Eigen::VectorXd h = to_h(z);
    Eigen::VectorXd r(6);
    for (std::size_t e = 0; e < 2; ++e) {
      const Eye eye = e == 0 ? Eye::Left : Eye::Right;
      const Eigen::Vector3d x = root_to_eye(m, eye, eye_q(h, eye)) * target;
      r.segment<3>(static_cast<Eigen::Index>(3 * e)) = x.normalized() - ray[e];
    }
    return ResidualEvaluation{r, 0};
  };
  for (int attempt = 0; attempt < gs.ik_restarts; ++attempt) {
    Eigen::VectorXd z0(6);
    for (Eigen::Index i = 0; i < 6; ++i) z0[i] = uniform(rng, -std::numbers::pi / 2, std::numbers::pi / 2);
    const SolveReport rep = solve(p, z0, ik_settings());
    const Eigen::VectorXd h = to_h(rep.solution);
    bool ok = true;
    for (std::size_t e = 0; e < 2 && ok; ++e) {
      const Eye eye = e == 0 ? Eye::Left : Eye::Right;
      const Eigen::Vector3d x = root_to_eye(m, eye, eye_q(h, eye)) * target;
      if (!(x.z() > 0.0)) {
        ok = false;
        break;
      }
      const PixelPoint px = project(x, k);
      ok = (px.vector() - Eigen::Vector2d(k.cx, k.cy)).norm() < gs.gaze_tolerance_px;
    }
    if (ok) return HeadSolution{h.head<3>(), h[3], h[4], h[5]};
  }
  return std::nullopt;
}

struct Attempt {
  std::optional<PoseSample> sample;
  Stage failed = Stage::LeftArm;
};

Attempt try_target(const RobotModel& m, const Eigen::Vector3d& target, const GenerationSettings& gs,
                   std::mt19937_64& rng) {
  Attempt out;
  const std::optional<JointAngles> ql = solve_left_arm(m, target, gs, rng);
  if (!ql) return out;
  const Transform left = forward_kinematics(m.left_arm, *ql);

  out.failed = Stage::RightArm;
  const std::optional<JointAngles> qr = solve_right_arm(m, target, left.linear().col(2), gs, rng);
  if (!qr) return out;
  const Eigen::Vector3d right = end_effector_position(m.right_arm, *qr);

  out.failed = Stage::Gaze;
  const std::optional<HeadSolution> head = solve_gaze(m, target, gs, rng);
  if (!head) return out;

  PoseSample s;
  s.target = target;
  set_arm_joints(s.theta, Arm::Left, *ql);
  set_arm_joints(s.theta, Arm::Right, *qr);
  set_head_joints(s.theta, head->neck, head->tilt, head->left_pan, head->right_pan);

  out.failed = Stage::Limits;
  if (!joints_within_limits(m.left_arm, s.arm_joints(Arm::Left)) ||
      !joints_within_limits(m.right_arm, s.arm_joints(Arm::Right)) ||
      !joints_within_limits(m.left_eye, s.eye_joints(Eye::Left)) ||
      !joints_within_limits(m.right_eye, s.eye_joints(Eye::Right))) {
    return out;
  }

  out.failed = Stage::Contact;
  s.left_position = left.translation();
  s.right_position = right;
  if ((s.right_position - s.left_position).norm() > gs.contact_tolerance_mm) return out;

  out.failed = Stage::BehindCamera;
  for (Eye eye : {Eye::Left, Eye::Right}) {
    const Transform to_eye = root_to_eye(m, eye, s.eye_joints(eye));
    for (Arm arm : {Arm::Left, Arm::Right}) {
      const Eigen::Vector3d x = to_eye * (arm == Arm::Left ? s.left_position : s.right_position);
      if (!(x.z() > 0.0)) return out;
      const PixelPoint px = project(x, m.intrinsics);
      if (in_frame(px, m.intrinsics)) {
        s.true_pixels[pair_index(arm, eye)] = px;
        s.observed_pixels[pair_index(arm, eye)] = px;
      }
    }
  }
  out.sample = std::move(s);
  return out;
}

void check_box(const WorkspaceBox& box) {
  if (!box.min.allFinite() || !box.max.allFinite() || (box.max.array() < box.min.array()).any()) {
    throw ConfigError("workspace box needs finite bounds with min <= max on every axis");
  }
}

}  // namespace

Dataset generate(const RobotModel& truth, const GenerationSettings& settings) {
  validate(truth);
  check_box(settings.box);
  if (settings.ik_tolerance_mm > 0.5 * settings.contact_tolerance_mm) {
    throw ConfigError("ik_tolerance_mm must not exceed half the contact tolerance");
  }
  if (settings.attempts_per_sample < 1 || settings.ik_restarts < 1) {
    throw ConfigError("attempt and restart budgets must be positive");
  }

  Dataset out;
  out.model_hash = model_hash(truth);
  out.seed = settings.seed;
  out.box = settings.box;
  out.samples.resize(settings.count);

  parallel_for(settings.count, settings.jobs, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(settings.seed, {label_code("target"), i}));
    std::array<int, kStageNames.size()> failures{};
    for (int attempt = 0; attempt < settings.attempts_per_sample; ++attempt) {
      Eigen::Vector3d target;
      for (int a = 0; a < 3; ++a) target[a] = uniform(rng, settings.box.min[a], settings.box.max[a]);
      Attempt result = try_target(truth, target, settings, rng);
      if (result.sample) {
        out.samples[i] = std::move(*result.sample);
        return;
      }
      ++failures[static_cast<std::size_t>(result.failed)];
    }
    const auto worst = std::max_element(failures.begin(), failures.end()) - failures.begin();
    throw GenerationError(fmt::format(
        "sample {}: no feasible pose after {} targets; most frequent failing stage: {} ({} of {})", i,
        settings.attempts_per_sample, kStageNames[static_cast<std::size_t>(worst)], failures[worst],
        settings.attempts_per_sample));
  });
  return out;
}

namespace {

void check_noise(const NoiseSpec& spec) {
  if (!(spec.sigma_touch_mm >= 0.0) || !(spec.sigma_camera_px >= 0.0)) {
    throw ConfigError("noise standard deviations must be >= 0");
  }
}

/// Each sample index owns its stream, so noise does not depend on which samples are selected.
void noise_sample(PoseSample& s, std::size_t index, const NoiseSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {label_code("noise"), index}));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int a = 0; a < 3; ++a) s.contact_noise[a] = spec.sigma_touch_mm * normal(rng);
  for (std::size_t k = 0; k < s.true_pixels.size(); ++k) {
    const double du = normal(rng);
    const double dv = normal(rng);
    if (s.true_pixels[k]) {
      s.observed_pixels[k] = PixelPoint{s.true_pixels[k]->u + spec.sigma_camera_px * du,
                                        s.true_pixels[k]->v + spec.sigma_camera_px * dv};
    } else {
      s.observed_pixels[k].reset();
    }
  }
}

}  // namespace

Dataset apply_noise(const Dataset& dataset, const NoiseSpec& spec, std::uint64_t seed) {
  check_noise(spec);
  Dataset out = dataset;
  out.noise = spec;
  out.noise_seed = seed;
  for (std::size_t i = 0; i < out.samples.size(); ++i) noise_sample(out.samples[i], i, spec, seed);
  return out;
}

std::vector<PoseSample> noisy_subset(const Dataset& dataset, const std::vector<std::size_t>& indices,
                                     const NoiseSpec& spec, std::uint64_t seed) {
  check_noise(spec);
  std::vector<PoseSample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    out.push_back(dataset.samples.at(i));
    noise_sample(out.back(), i, spec, seed);
  }
  return out;
}

Split split(std::size_t count, std::size_t n_train, std::size_t n_test, std::mt19937_64& rng) {
  if (n_train + n_test > count) {
    throw ConfigError(fmt::format("cannot split {} samples into {} training and {} test poses", count, n_train,
                                  n_test));
  }
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t needed = n_train + n_test;
  for (std::size_t i = 0; i < needed; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, count - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  Split s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                 idx.begin() + static_cast<std::ptrdiff_t>(needed));
  return s;
}

Split split(const Dataset& dataset, std::size_t n_train, std::size_t n_test, std::mt19937_64& rng) {
  return split(dataset.size(), n_train, n_test, rng);
}

VisibilityStats visibility_stats(const Dataset& dataset) {
  VisibilityStats v;
  for (const PoseSample& s : dataset.samples) {
    const int seen = int(s.true_pixels[pair_index(Arm::Left, Eye::Left)].has_value()) +
                     int(s.true_pixels[pair_index(Arm::Left, Eye::Right)].has_value());
    if (seen == 2) ++v.both_eyes;
    else if (seen == 1) ++v.one_eye;
    else ++v.none;
  }
  return v;
}

double max_contact_discrepancy(const Dataset& dataset) {
  double worst = 0.0;
  for (const PoseSample& s : dataset.samples) worst = std::max(worst, (s.right_position - s.left_position).norm());
  return worst;
}

// ---- persistence ----------------------------------------------------------

namespace {

json vec_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json pixels_json(const std::array<std::optional<PixelPoint>, 4>& px) {
  json out = json::array();
  for (const auto& p : px) out.push_back(p ? json::array({p->u, p->v}) : json(nullptr));
  return out;
}

json sample_json(const PoseSample& s) {
  return json{{"target", vec_json(s.target)},
              {"theta", vec_json(s.theta)},
              {"contact_noise", vec_json(s.contact_noise)},
              {"left_position", vec_json(s.left_position)},
              {"right_position", vec_json(s.right_position)},
              {"true_pixels", pixels_json(s.true_pixels)},
              {"observed_pixels", pixels_json(s.observed_pixels)}};
}

struct Where {
  std::string file;
  std::size_t line;
  std::string str(std::string_view field) const { return fmt::format("{}:{}: {}", file, line, field); }
};

Eigen::VectorXd read_vec(const json& obj, const char* key, Eigen::Index size, const Where& w) {
  if (!obj.contains(key)) throw ParseError(w.str(fmt::format("missing field '{}'", key)));
  const json& a = obj.at(key);
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != size) {
    throw ParseError(w.str(fmt::format("'{}' must be an array of {} numbers", key, size)));
  }
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const json& x = a[static_cast<std::size_t>(i)];
    if (!x.is_number()) throw ParseError(w.str(fmt::format("'{}'[{}] is not a number", key, i)));
    v[i] = x.get<double>();
  }
  return v;
}

std::array<std::optional<PixelPoint>, 4> read_pixels(const json& obj, const char* key, const Where& w) {
  std::array<std::optional<PixelPoint>, 4> out;
  if (!obj.contains(key)) throw ParseError(w.str(fmt::format("missing field '{}'", key)));
  const json& a = obj.at(key);
  if (!a.is_array() || a.size() != 4) {
    throw ParseError(w.str(fmt::format("'{}' must list 4 entries (LA-LEye, LA-REye, RA-LEye, RA-REye)", key)));
  }
  for (std::size_t k = 0; k < 4; ++k) {
    if (a[k].is_null()) continue;
    if (!a[k].is_array() || a[k].size() != 2 || !a[k][0].is_number() || !a[k][1].is_number()) {
      throw ParseError(w.str(fmt::format("'{}'[{}] must be null or [u, v]", key, k)));
    }
    out[k] = PixelPoint{a[k][0].get<double>(), a[k][1].get<double>()};
  }
  return out;
}

template <typename T>
T header_value(const json& h, const char* key, const Where& w) {
  if (!h.contains(key)) throw ParseError(w.str(fmt::format("header is missing '{}'", key)));
  try {
    return h.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(w.str(fmt::format("header field '{}' has the wrong type", key)));
  }
}

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(fmt::format("cannot write dataset '{}'", path.string()));
  const json header{{"format", "chaincal-dataset"},
                    {"version", kDatasetFormatVersion},
                    {"model_hash", d.model_hash},
                    {"seed", d.seed},
                    {"box", {{"min_mm", vec_json(d.box.min)}, {"max_mm", vec_json(d.box.max)}}},
                    {"noise", {{"sigma_touch_mm", d.noise.sigma_touch_mm}, {"sigma_camera_px", d.noise.sigma_camera_px}}},
                    {"noise_seed", d.noise_seed},
                    {"count", d.samples.size()}};
  f << header.dump() << '\n';
  for (const PoseSample& s : d.samples) f << sample_json(s).dump() << '\n';
  if (!f) throw Error(fmt::format("failed while writing dataset '{}'", path.string()));
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(fmt::format("cannot open dataset '{}'", path.string()));
  Where w{path.string(), 0};
  std::string line;
  auto parse_line = [&]() -> json {
    try {
      return json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(w.str(fmt::format("invalid JSON ({})", e.what())));
    }
  };

  if (!std::getline(f, line)) throw ParseError(fmt::format("{}: empty dataset file", path.string()));
  w.line = 1;
  const json header = parse_line();
  if (!header.is_object() || header.value("format", std::string()) != "chaincal-dataset") {
    throw ParseError(w.str("not a chaincal dataset header"));
  }
  const int version = header_value<int>(header, "version", w);
  if (version != kDatasetFormatVersion) {
    throw UnsupportedVersionError(
        w.str(fmt::format("unsupported dataset version {} (this build reads version {})", version,
                          kDatasetFormatVersion)));
  }
  Dataset d;
  d.model_hash = header_value<std::string>(header, "model_hash", w);
  d.seed = header_value<std::uint64_t>(header, "seed", w);
  d.noise_seed = header_value<std::uint64_t>(header, "noise_seed", w);
  const std::size_t count = header_value<std::size_t>(header, "count", w);
  if (!header.contains("box") || !header.contains("noise")) throw ParseError(w.str("header needs 'box' and 'noise'"));
  d.box.min = read_vec(header.at("box"), "min_mm", 3, w);
  d.box.max = read_vec(header.at("box"), "max_mm", 3, w);
  d.noise.sigma_touch_mm = header_value<double>(header.at("noise"), "sigma_touch_mm", w);
  d.noise.sigma_camera_px = header_value<double>(header.at("noise"), "sigma_camera_px", w);

  d.samples.reserve(count);
  while (std::getline(f, line)) {
    ++w.line;
    if (line.empty()) continue;
    const json rec = parse_line();
    if (!rec.is_object()) throw ParseError(w.str("sample record must be an object"));
    PoseSample s;
    s.target = read_vec(rec, "target", 3, w);
    s.theta = read_vec(rec, "theta", kPoseJointCount, w);
    s.contact_noise = read_vec(rec, "contact_noise", 3, w);
    s.left_position = read_vec(rec, "left_position", 3, w);
    s.right_position = read_vec(rec, "right_position", 3, w);
    s.true_pixels = read_pixels(rec, "true_pixels", w);
    s.observed_pixels = read_pixels(rec, "observed_pixels", w);
    for (std::size_t k = 0; k < 4; ++k) {
      if (s.observed_pixels[k] && !s.true_pixels[k]) {
        throw ParseError(w.str(fmt::format("observed pixel {} has no visible true projection", k)));
      }
    }
    d.samples.push_back(std::move(s));
  }
  if (d.samples.size() != count) {
    throw ParseError(fmt::format("{}: header declares {} samples but {} were read", path.string(), count,
                                 d.samples.size()));
  }
  return d;
}

}  // namespace chaincal
