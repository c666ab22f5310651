#pragma once

#include "chaincal/calibration.hpp"
#include "chaincal/dataset.hpp"
#include "chaincal/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace chaincal {

inline constexpr int kExperimentConfigVersion = 1;
inline constexpr int kCellFormatVersion = 1;

struct NamedMask {
  std::string name;       // used in file names and CSV rows
  std::string selection;  // MaskSelection text
};

struct DatasetSource {
  std::optional<std::filesystem::path> path;  // existing dataset file
  GenerationSettings generation;              // used when path is empty
};

/**
 * One sweep: the Cartesian product of combos x masks x perturbations x
 * training sizes x noise levels, each repeated `repetitions` times.
 *
 * Relative paths are resolved against the config file's directory.
 */
struct ExperimentConfig {
  std::string name;
  std::optional<std::filesystem::path> model_path;  // bundled default when empty
  DatasetSource dataset;
  std::vector<std::string> combos;
  std::vector<NamedMask> masks;
  std::vector<double> perturbations;
  std::vector<std::size_t> train_sizes;
  std::size_t test_size = 300;
  std::vector<NoiseSpec> noise;
  std::size_t repetitions = 10;
  std::uint64_t master_seed = 1;
  SolverSettings solver;
  bool freeze_mu_at_initial = false;
  std::optional<double> mu_override;
  std::optional<Evaluation> evaluation;  // per-mask default when empty
  bool scatter = false;
  /// Observability Jacobian at the ground truth instead of the perturbed start.
  bool observability_at_truth = false;
};

/// Parses and validates; errors name the offending JSON pointer.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct CellKey {
  std::string combo;
  std::string mask;  // NamedMask::name
  double perturbation = 0.0;
  std::size_t train_size = 0;
  NoiseSpec noise;

  /// File-name-safe identifier, e.g. "LARALREye__LA-full__p5__n50__5E5T".
  std::string id() const;
};

/// Cells in sweep order (combo outermost, noise innermost).
std::vector<CellKey> enumerate_cells(const ExperimentConfig& config);

struct RunSeeds {
  std::uint64_t split = 0;
  std::uint64_t perturbation = 0;
  std::uint64_t noise = 0;
};

/**
 * Seeds depend only on the master seed and the coordinates that influence
 * each random draw. The split ignores the cell, the perturbation ignores the
 * combo, size and noise, and the noise ignores everything but the noise
 * level, so all cells of one repetition share draws where they can.
 */
RunSeeds run_seeds(std::uint64_t master, const CellKey& cell, const std::string& mask_selection,
                   std::size_t repetition);

/// Result of one (cell, repetition) solve, as persisted.
struct RunRecord {
  CellKey cell;
  std::size_t repetition = 0;
  std::string fingerprint;
  bool ok = false;
  std::string error;

  Evaluation evaluation = Evaluation::EndEffector3d;
  double test_error_mean = 0.0;
  double test_error_std = 0.0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::string termination;
  long behind_camera = 0;
  bool monotone = true;  // accepted costs never increased
  double o1 = 0.0;
  double o4 = 0.0;
  std::size_t rank = 0;
  std::size_t free_parameters = 0;
  std::vector<double> singular_values;
  std::vector<std::string> parameter_labels;
  std::vector<double> estimate;
  std::vector<double> truth;
  std::vector<std::string> warnings;
  std::vector<ScatterRow> scatter;
};

nlohmann::json record_to_json(const RunRecord& record);
RunRecord record_from_json(const nlohmann::json& doc, const std::string& source);

/// One (cell, repetition) solve. Throws on failure; run_experiment records it instead.
RunRecord run_cell(const ExperimentConfig& config, const RobotModel& truth, const Dataset& data,
                   const CellKey& cell, std::size_t repetition);

struct ExperimentOptions {
  std::filesystem::path out_dir = "out";
  unsigned jobs = 1;
  bool resume = true;
  /// Called after each run finishes (from worker threads, serialized).
  std::function<void(const RunRecord&)> progress;
};

struct ExperimentSummary {
  std::size_t runs = 0;
  std::size_t executed = 0;  // not satisfied from persisted cells
  std::size_t failed = 0;
  std::filesystem::path directory;
  std::vector<std::filesystem::path> tables;
};

/// Runs missing cells, then writes the aggregate tables under out_dir/name.
ExperimentSummary run_experiment(const ExperimentConfig& config, const ExperimentOptions& options);

/// Rebuilds the aggregate tables from the persisted cells only.
ExperimentSummary write_report(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Loads (or generates and caches under `cache_dir`) the clean dataset for a config.
Dataset resolve_dataset(const ExperimentConfig& config, const RobotModel& truth,
                        const std::filesystem::path& cache_dir, unsigned jobs);

/// Jobs from $CHAINCAL_JOBS, else 1.
unsigned default_jobs();

}  // namespace chaincal
