// chaincal: dataset generation, single calibrations, observability analysis
// and experiment sweeps from the command line.

#include "chaincal/calibration.hpp"
#include "chaincal/dataset.hpp"
#include "chaincal/error.hpp"
#include "chaincal/experiment.hpp"
#include "chaincal/metrics.hpp"
#include "chaincal/model_io.hpp"
#include "chaincal/observability.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

namespace {

using namespace chaincal;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

WorkspaceBox parse_box(const std::vector<double>& v) {
  if (v.empty()) return {};
  if (v.size() != 6) throw ConfigError("--box takes six numbers: xmin ymin zmin xmax ymax zmax (mm)");
  WorkspaceBox b;
  b.min = Eigen::Vector3d(v[0], v[1], v[2]);
  b.max = Eigen::Vector3d(v[3], v[4], v[5]);
  if ((b.max.array() < b.min.array()).any()) throw ConfigError("--box min must not exceed max");
  return b;
}

RobotModel load_truth(const std::string& path) {
  return load_model(path.empty() ? default_model_path() : std::filesystem::path(path));
}

/// Options shared by `calibrate` and `observability`.
struct SingleRun {
  std::string model;
  std::string dataset;
  std::string combo = "LARALREye";
  std::string mask = "LA:all";
  std::size_t poses = 50;
  std::size_t test = 300;
  double pert = 5.0;
  double sigma_touch = 5.0;
  double sigma_camera = 5.0;
  std::uint64_t seed = 1;
  std::vector<double> box;
  unsigned jobs = default_jobs();

  void add_to(CLI::App* app, bool with_test) {
    app->add_option("--model", model, "Ground-truth model JSON (default: bundled iCub model)");
    app->add_option("--dataset", dataset, "Dataset file; generated on the fly when omitted");
    app->add_option("--combo", combo, "Chain combination, e.g. LARA, LALEye, LALREye, LARALREye")
        ->capture_default_str();
    app->add_option("--mask", mask, "Free-parameter selection, e.g. 'LA:all' or 'all:all'")->capture_default_str();
    app->add_option("--poses", poses, "Training poses")->capture_default_str()->check(CLI::PositiveNumber);
    if (with_test) app->add_option("--test", test, "Test poses")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--pert", pert, "Perturbation factor p")->capture_default_str()->check(CLI::NonNegativeNumber);
    app->add_option("--sigma-touch", sigma_touch, "Touch noise std (mm)")->capture_default_str();
    app->add_option("--sigma-camera", sigma_camera, "Pixel noise std (px)")->capture_default_str();
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--box", box, "Workspace box for generation: xmin ymin zmin xmax ymax zmax (mm)")
        ->expected(6);
    app->add_option("--jobs", jobs, "Worker threads (default: $CHAINCAL_JOBS or 1)");
  }

  ExperimentConfig config(std::size_t test_size) const {
    ExperimentConfig c;
    c.name = "single";
    if (!model.empty()) c.model_path = model;
    if (!dataset.empty()) c.dataset.path = dataset;
    c.dataset.generation.count = poses + test_size;
    c.dataset.generation.seed = seed;
    c.dataset.generation.box = parse_box(box);
    c.combos = {ChainCombo::parse(combo).name()};
    MaskSelection::parse(mask);
    c.masks = {{"mask", mask}};
    c.perturbations = {pert};
    c.train_sizes = {poses};
    c.test_size = test_size;
    c.noise = {{sigma_touch, sigma_camera}};
    c.repetitions = 1;
    c.master_seed = seed;
    return c;
  }

  Dataset data(const ExperimentConfig& c, const RobotModel& truth) const {
    if (c.dataset.path) {
      Dataset d = load_dataset(*c.dataset.path);
      if (d.size() < poses + c.test_size) {
        throw ConfigError(fmt::format("dataset has {} poses, need {}", d.size(), poses + c.test_size));
      }
      return d;
    }
    GenerationSettings g = c.dataset.generation;
    g.jobs = jobs;
    return generate(truth, g);
  }
};

void print_spectrum(const ObservabilityReport& obs) {
  fmt::print("singular values ({}):", obs.singular_values.size());
  for (std::size_t i = 0; i < obs.singular_values.size(); ++i) {
    fmt::print("{}{:.6g}", i % 8 == 0 ? "\n  " : " ", obs.singular_values[i]);
  }
  fmt::print("\nrank {} of {} (tolerance {:.3g})\nO1 {:.6g}\nO4 {:.6g}\n", obs.rank, obs.parameters,
             obs.rank_tolerance, obs.o1, obs.o4);
  if (obs.rank_deficient()) {
    fmt::print("warning: rank-deficient identification Jacobian ({} of {} parameters identifiable)\n", obs.rank,
               obs.parameters);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-chain kinematic calibration toolkit (self-touch and self-observation)"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic self-touch/self-observation dataset");
  std::size_t count = 0;
  std::uint64_t gen_seed = 1;
  std::vector<double> gen_box;
  double gen_st = 0.0, gen_sc = 0.0;
  std::string gen_model, gen_out;
  unsigned gen_jobs = default_jobs();
  gen->add_option("--count", count, "Number of poses")->required();
  gen->add_option("--box", gen_box, "Workspace box: xmin ymin zmin xmax ymax zmax (mm)")->expected(6);
  gen->add_option("--seed", gen_seed, "Generation seed (noise uses the same seed)")->capture_default_str();
  gen->add_option("--sigma-touch", gen_st, "Touch noise std (mm)")->capture_default_str();
  gen->add_option("--sigma-camera", gen_sc, "Pixel noise std (px)")->capture_default_str();
  gen->add_option("--model", gen_model, "Ground-truth model JSON (default: bundled iCub model)");
  gen->add_option("--out", gen_out, "Output dataset file (JSON lines)")->required();
  gen->add_option("--jobs", gen_jobs, "Worker threads (default: $CHAINCAL_JOBS or 1)");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Run one calibration and print the test end-effector error");
  SingleRun cal_opts;
  cal_opts.add_to(cal, true);

  // observability
  auto* obs = app.add_subcommand("observability", "Singular spectrum and O1/O4 of the identification Jacobian");
  SingleRun obs_opts;
  obs_opts.sigma_camera = obs_opts.sigma_touch = 0.0;
  obs_opts.add_to(obs, false);
  bool obs_at_truth = false;
  obs->add_flag("--at-truth", obs_at_truth, "Evaluate the Jacobian at the ground truth instead of the perturbed model");

  // experiment / report
  auto* exp = app.add_subcommand("experiment", "Run a parameter sweep from a JSON config");
  auto* rep = app.add_subcommand("report", "Re-aggregate the persisted cells of an experiment");
  std::string config_path, out_dir = "out";
  unsigned exp_jobs = default_jobs();
  bool no_resume = false;
  for (CLI::App* sub : {exp, rep}) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
  }
  exp->add_option("--jobs", exp_jobs, "Concurrent cells (default: $CHAINCAL_JOBS or 1)");
  exp->add_flag("--no-resume", no_resume, "Recompute cells even if a matching result exists");
  bool dry_run = false;
  exp->add_flag("--dry-run", dry_run, "Validate the config and list the sweep without running it");

  // model
  auto* mod = app.add_subcommand("model", "Write the built-in iCub model as JSON");
  std::string model_out;
  mod->add_option("--out", model_out, "Output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*gen) {
    const RobotModel truth = load_truth(gen_model);
    GenerationSettings g;
    g.count = count;
    g.seed = gen_seed;
    g.box = parse_box(gen_box);
    g.jobs = gen_jobs;
    Dataset d = generate(truth, g);
    d = apply_noise(d, {gen_st, gen_sc}, gen_seed);
    save_dataset(d, gen_out);
    const VisibilityStats v = visibility_stats(d);
    fmt::print("wrote {} poses to {}\nmax contact discrepancy {:.3g} mm\n", d.size(), gen_out,
               max_contact_discrepancy(d));
    fmt::print("left-arm end-effector in frame: both eyes {}, one eye {}, none {}\n", v.both_eyes, v.one_eye, v.none);
    return kExitOk;
  }

  if (*cal) {
    const ExperimentConfig c = cal_opts.config(cal_opts.test);
    const RobotModel truth = load_truth(cal_opts.model);
    const Dataset data = cal_opts.data(c, truth);
    const CellKey cell = enumerate_cells(c).front();
    const RunRecord r = run_cell(c, truth, data, cell, 0);
    fmt::print("combo {}  mask {}  poses {}  p {}  noise {}\n", cell.combo, cal_opts.mask, cell.train_size,
               cell.perturbation, cell.noise.label());
    fmt::print("free parameters {}  iterations {}  termination {}\n", r.free_parameters, r.iterations,
               r.termination);
    fmt::print("cost {:.6g} -> {:.6g}\n", r.initial_cost, r.final_cost);
    for (const std::string& w : r.warnings) fmt::print("warning: {}\n", w);
    fmt::print("test {} error: mean {:.6g} std {:.6g} ({} poses)\n", evaluation_name(r.evaluation),
               r.test_error_mean, r.test_error_std, c.test_size);
    return kExitOk;
  }

  if (*obs) {
    const ExperimentConfig c = obs_opts.config(0);
    const RobotModel truth = load_truth(obs_opts.model);
    Dataset data = obs_opts.data(c, truth);
    const RunSeeds seeds = run_seeds(c.master_seed, enumerate_cells(c).front(), obs_opts.mask, 0);
    std::mt19937_64 split_rng(seeds.split);
    const Split sp = split(data, obs_opts.poses, 0, split_rng);
    const ParameterMask mask = default_mask(truth, MaskSelection::parse(obs_opts.mask));
    std::mt19937_64 perturb_rng(seeds.perturbation);
    const RobotModel at = obs_at_truth ? truth : perturb(truth, mask, obs_opts.pert, perturb_rng);
    const ChainCombo combo = ChainCombo::parse(obs_opts.combo);
    const ObservabilityReport report = analyze(at, mask, data.select(sp.train), combo);
    fmt::print("combo {}  mask {}  poses {}  residuals {}  evaluated at {}\n", combo.name(), obs_opts.mask,
               obs_opts.poses, obs_opts.poses * combo.residuals_per_pose(),
               obs_at_truth ? "ground truth" : fmt::format("perturbed model (p={})", obs_opts.pert));
    print_spectrum(report);
    return kExitOk;
  }

  if (*exp) {
    const ExperimentConfig c = load_experiment_config(config_path);
    if (dry_run) {
      const std::vector<CellKey> cells = enumerate_cells(c);
      for (const CellKey& k : cells) fmt::print("{}\n", k.id());
      fmt::print("{} cells x {} repetitions = {} solves\n", cells.size(), c.repetitions,
                 cells.size() * c.repetitions);
      return kExitOk;
    }
    ExperimentOptions o;
    o.out_dir = out_dir;
    o.jobs = exp_jobs;
    o.resume = !no_resume;
    o.progress = [](const RunRecord& r) {
      if (r.ok) {
        fmt::print("{} r{}: {} {:.4g}\n", r.cell.id(), r.repetition, evaluation_name(r.evaluation), r.test_error_mean);
      } else {
        fmt::print("{} r{}: FAILED: {}\n", r.cell.id(), r.repetition, r.error);
      }
      std::fflush(stdout);
    };
    const ExperimentSummary s = run_experiment(c, o);
    fmt::print("{} runs ({} computed, {} failed); tables in {}\n", s.runs, s.executed, s.failed,
               s.directory.string());
    return s.failed == 0 ? kExitOk : kExitFailure;
  }

  if (*rep) {
    const ExperimentConfig c = load_experiment_config(config_path);
    const ExperimentSummary s = write_report(c, out_dir);
    for (const auto& t : s.tables) fmt::print("{}\n", t.string());
    if (s.failed > 0) fmt::print("{} of {} runs missing or failed\n", s.failed, s.runs);
    return s.failed == 0 ? kExitOk : kExitFailure;
  }

  if (*mod) {
    if (model_out.empty()) {
      std::cout << model_to_json(default_icub_model()).dump(2) << '\n';
    } else {
      save_model(default_icub_model(), model_out);
    }
    return kExitOk;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const chaincal::ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const chaincal::ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  }
}
