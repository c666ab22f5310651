#pragma once

#include "chaincal/model.hpp"
#include "chaincal/pose.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace chaincal {

inline constexpr int kDatasetFormatVersion = 1;

/// Standard deviations (not variances) of the measurement noise.
struct NoiseSpec {
  double sigma_touch_mm = 0.0;
  double sigma_camera_px = 0.0;

  /// e.g. "5E2T" (camera px first, touch mm second).
  std::string label() const;
  bool operator==(const NoiseSpec&) const = default;
};

struct WorkspaceBox {
  Eigen::Vector3d min = Eigen::Vector3d(-60.0, -220.0, -40.0);
  Eigen::Vector3d max = Eigen::Vector3d(60.0, -120.0, 120.0);
  bool operator==(const WorkspaceBox&) const = default;
};

struct GenerationSettings {
  std::size_t count = 0;
  WorkspaceBox box;
  std::uint64_t seed = 1;
  double contact_tolerance_mm = 0.01;
  /// Inner IK target; must not exceed contact_tolerance_mm / 2.
  double ik_tolerance_mm = 1e-6;
  double finger_cone_deg = 50.0;
  double gaze_tolerance_px = 20.0;
  int ik_restarts = 8;
  int attempts_per_sample = 60;
  unsigned jobs = 1;
};

struct Dataset {
  std::string model_hash;
  std::uint64_t seed = 0;
  WorkspaceBox box;
  NoiseSpec noise;
  std::uint64_t noise_seed = 0;
  std::vector<PoseSample> samples;

  std::size_t size() const { return samples.size(); }
  std::vector<PoseSample> select(const std::vector<std::size_t>& indices) const;
  bool operator==(const Dataset&) const = default;
};

/**
 * Self-touch / self-observation poses from the ground-truth model.
 *
 * Per target: the left palm reaches the target, the right index fingertip
 * reaches the same point with the finger within `finger_cone_deg` of the
 * inward palm normal, and the head gazes so that the target lands within
 * `gaze_tolerance_px` of both image centers. Every sample index draws from
 * its own RNG stream, so results do not depend on `jobs`. Throws
 * GenerationError naming the failing stage when a sample exhausts its budget.
 */
Dataset generate(const RobotModel& truth, const GenerationSettings& settings);

/// Re-draws touch noise N(0, sigma_t^2 I3) and pixel noise N(0, sigma_c^2 I2)
/// around the true pixels; deterministic in `seed`.
Dataset apply_noise(const Dataset& dataset, const NoiseSpec& spec, std::uint64_t seed);

/// Noisy copies of `indices`, identical to apply_noise(dataset, spec, seed).select(indices).
std::vector<PoseSample> noisy_subset(const Dataset& dataset, const std::vector<std::size_t>& indices,
                                     const NoiseSpec& spec, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Test indices are drawn first, then training indices from the rest.
Split split(const Dataset& dataset, std::size_t n_train, std::size_t n_test, std::mt19937_64& rng);
Split split(std::size_t count, std::size_t n_train, std::size_t n_test, std::mt19937_64& rng);

struct VisibilityStats {
  std::size_t both_eyes = 0;
  std::size_t one_eye = 0;
  std::size_t none = 0;
};

/// In-frame visibility of the left-arm end-effector per pose.
VisibilityStats visibility_stats(const Dataset& dataset);

/// Largest |X_RA - X_LA| over the samples, from the stored ground-truth positions.
double max_contact_discrepancy(const Dataset& dataset);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace chaincal
