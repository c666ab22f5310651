#include "chaincal/experiment.hpp"

#include "chaincal/error.hpp"
#include "chaincal/model_io.hpp"
#include "chaincal/observability.hpp"
#include "chaincal/parallel.hpp"
#include "chaincal/seeding.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace chaincal {

using nlohmann::json;

// ---- config ---------------------------------------------------------------

namespace {

[[noreturn]] void config_error(const std::string& pointer, const std::string& what) {
  throw ConfigError(fmt::format("config {}: {}", pointer.empty() ? "/" : pointer, what));
}

void reject_unknown_keys(const json& obj, const std::string& pointer, std::initializer_list<std::string_view> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (std::string_view k : known) ok = ok || it.key() == k;
    if (!ok) config_error(pointer + "/" + it.key(), "unknown key");
  }
}

const json& require(const json& obj, const std::string& pointer, const char* key) {
  if (!obj.contains(key)) config_error(pointer + "/" + key, "required key is missing");
  return obj.at(key);
}

double as_number(const json& v, const std::string& pointer) {
  if (!v.is_number()) config_error(pointer, "expected a number");
  return v.get<double>();
}

std::uint64_t as_unsigned(const json& v, const std::string& pointer) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  config_error(pointer, "expected a non-negative integer");
}

std::string as_string(const json& v, const std::string& pointer) {
  if (!v.is_string()) config_error(pointer, "expected a string");
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& pointer, bool non_empty) {
  if (!v.is_array()) config_error(pointer, "expected an array");
  if (non_empty && v.empty()) config_error(pointer, "sweep axis must not be empty");
  return v;
}

Eigen::Vector3d as_vec3(const json& v, const std::string& pointer) {
  if (!v.is_array() || v.size() != 3) config_error(pointer, "expected [x, y, z]");
  return {as_number(v[0], pointer + "/0"), as_number(v[1], pointer + "/1"), as_number(v[2], pointer + "/2")};
}

std::string safe_name(std::string_view text) {
  std::string out;
  for (char c : text) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_';
    out += keep ? c : '-';
  }
  return out;
}

NoiseSpec parse_noise_label(const std::string& text, const std::string& pointer) {
  // <camera px>E<touch mm>T
  const std::size_t e = text.find('E');
  if (e == std::string::npos || text.empty() || text.back() != 'T') {
    config_error(pointer, fmt::format("noise label '{}' must look like 5E2T (camera px, touch mm)", text));
  }
  NoiseSpec n;
  try {
    std::size_t used = 0;
    const std::string cam = text.substr(0, e);
    const std::string touch = text.substr(e + 1, text.size() - e - 2);
    n.sigma_camera_px = std::stod(cam, &used);
    if (used != cam.size()) throw std::invalid_argument(cam);
    n.sigma_touch_mm = std::stod(touch, &used);
    if (used != touch.size()) throw std::invalid_argument(touch);
  } catch (const std::exception&) {
    config_error(pointer, fmt::format("noise label '{}' must look like 5E2T (camera px, touch mm)", text));
  }
  return n;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) config_error("", "expected an object");
  reject_unknown_keys(doc, "", {"version", "name", "model", "dataset", "combos", "masks", "perturbations",
                                "train_sizes", "test_size", "noise", "repetitions", "master_seed", "solver", "mu",
                                "evaluation", "scatter", "observability_at"});
  if (doc.contains("version")) {
    const std::uint64_t v = as_unsigned(doc.at("version"), "/version");
    if (v != kExperimentConfigVersion) {
      config_error("/version", fmt::format("unsupported config version {} (expected {})", v, kExperimentConfigVersion));
    }
  }
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  ExperimentConfig c;
  c.name = as_string(require(doc, "", "name"), "/name");
  if (c.name.empty() || safe_name(c.name) != c.name) {
    config_error("/name", "must be non-empty and use only letters, digits, '-', '_' or '.'");
  }
  if (doc.contains("model") && !doc.at("model").is_null()) c.model_path = resolve(as_string(doc.at("model"), "/model"));

  const json& ds = require(doc, "", "dataset");
  if (!ds.is_object()) config_error("/dataset", "expected an object");
  reject_unknown_keys(ds, "/dataset", {"path", "generate"});
  if (ds.contains("path") == ds.contains("generate")) {
    config_error("/dataset", "give exactly one of 'path' or 'generate'");
  }
  if (ds.contains("path")) {
    c.dataset.path = resolve(as_string(ds.at("path"), "/dataset/path"));
  } else {
    const json& g = ds.at("generate");
    const std::string gp = "/dataset/generate";
    if (!g.is_object()) config_error(gp, "expected an object");
    reject_unknown_keys(g, gp, {"count", "seed", "box"});
    c.dataset.generation.count = as_unsigned(require(g, gp, "count"), gp + "/count");
    if (g.contains("seed")) c.dataset.generation.seed = as_unsigned(g.at("seed"), gp + "/seed");
    if (g.contains("box")) {
      const json& b = g.at("box");
      if (!b.is_object()) config_error(gp + "/box", "expected an object");
      reject_unknown_keys(b, gp + "/box", {"min_mm", "max_mm"});
      c.dataset.generation.box.min = as_vec3(require(b, gp + "/box", "min_mm"), gp + "/box/min_mm");
      c.dataset.generation.box.max = as_vec3(require(b, gp + "/box", "max_mm"), gp + "/box/max_mm");
      if ((c.dataset.generation.box.max.array() < c.dataset.generation.box.min.array()).any()) {
        config_error(gp + "/box", "min_mm must not exceed max_mm");
      }
    }
  }

  const json& combos = as_array(require(doc, "", "combos"), "/combos", true);
  for (std::size_t i = 0; i < combos.size(); ++i) {
    const std::string p = fmt::format("/combos/{}", i);
    const std::string name = as_string(combos[i], p);
    try {
      c.combos.push_back(ChainCombo::parse(name).name());
    } catch (const ConfigError& e) {
      config_error(p, e.what());
    }
  }

  const json& masks = as_array(require(doc, "", "masks"), "/masks", true);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const std::string p = fmt::format("/masks/{}", i);
    NamedMask m;
    if (masks[i].is_string()) {
      m.selection = masks[i].get<std::string>();
      m.name = safe_name(m.selection);
    } else if (masks[i].is_object()) {
      reject_unknown_keys(masks[i], p, {"name", "selection"});
      m.selection = as_string(require(masks[i], p, "selection"), p + "/selection");
      m.name = masks[i].contains("name") ? as_string(masks[i].at("name"), p + "/name") : safe_name(m.selection);
      if (m.name.empty() || safe_name(m.name) != m.name) config_error(p + "/name", "must be file-name safe");
    } else {
      config_error(p, "expected a selection string or {\"name\", \"selection\"}");
    }
    try {
      MaskSelection::parse(m.selection);
    } catch (const ConfigError& e) {
      config_error(p, e.what());
    }
    for (const NamedMask& other : c.masks) {
      if (other.name == m.name) config_error(p, fmt::format("duplicate mask name '{}'", m.name));
    }
    c.masks.push_back(m);
  }

  const json& perts = as_array(require(doc, "", "perturbations"), "/perturbations", true);
  for (std::size_t i = 0; i < perts.size(); ++i) {
    const std::string p = fmt::format("/perturbations/{}", i);
    const double v = as_number(perts[i], p);
    if (!(v >= 0.0) || !std::isfinite(v)) config_error(p, "perturbation factor must be >= 0");
    c.perturbations.push_back(v);
  }

  const json& sizes = as_array(require(doc, "", "train_sizes"), "/train_sizes", true);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::string p = fmt::format("/train_sizes/{}", i);
    const std::uint64_t n = as_unsigned(sizes[i], p);
    if (n == 0) config_error(p, "training size must be >= 1");
    c.train_sizes.push_back(n);
  }
  if (doc.contains("test_size")) {
    c.test_size = as_unsigned(doc.at("test_size"), "/test_size");
    if (c.test_size == 0) config_error("/test_size", "must be >= 1");
  }

  const json& noise = as_array(require(doc, "", "noise"), "/noise", true);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const std::string p = fmt::format("/noise/{}", i);
    NoiseSpec n;
    if (noise[i].is_string()) {
      n = parse_noise_label(noise[i].get<std::string>(), p);
    } else if (noise[i].is_object()) {
      reject_unknown_keys(noise[i], p, {"sigma_camera_px", "sigma_touch_mm"});
      n.sigma_camera_px = as_number(require(noise[i], p, "sigma_camera_px"), p + "/sigma_camera_px");
      n.sigma_touch_mm = as_number(require(noise[i], p, "sigma_touch_mm"), p + "/sigma_touch_mm");
    } else {
      config_error(p, "expected a label such as \"5E2T\" or {sigma_camera_px, sigma_touch_mm}");
    }
    if (!(n.sigma_camera_px >= 0.0) || !(n.sigma_touch_mm >= 0.0)) config_error(p, "sigmas must be >= 0");
    c.noise.push_back(n);
  }

  if (doc.contains("repetitions")) {
    c.repetitions = as_unsigned(doc.at("repetitions"), "/repetitions");
    if (c.repetitions == 0) config_error("/repetitions", "must be >= 1");
  }
  if (doc.contains("master_seed")) c.master_seed = as_unsigned(doc.at("master_seed"), "/master_seed");

  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    if (!s.is_object()) config_error("/solver", "expected an object");
    reject_unknown_keys(s, "/solver", {"max_iterations", "cost_tolerance", "step_tolerance", "initial_damping"});
    if (s.contains("max_iterations")) {
      c.solver.max_iterations = static_cast<int>(as_unsigned(s.at("max_iterations"), "/solver/max_iterations"));
    }
    if (s.contains("cost_tolerance")) c.solver.cost_tolerance = as_number(s.at("cost_tolerance"), "/solver/cost_tolerance");
    if (s.contains("step_tolerance")) c.solver.step_tolerance = as_number(s.at("step_tolerance"), "/solver/step_tolerance");
    if (s.contains("initial_damping")) {
      c.solver.initial_damping = as_number(s.at("initial_damping"), "/solver/initial_damping");
    }
    try {
      c.solver.validate();
    } catch (const ConfigError& e) {
      config_error("/solver", e.what());
    }
  }
  if (doc.contains("mu")) {
    const json& m = doc.at("mu");
    if (!m.is_object()) config_error("/mu", "expected an object");
    reject_unknown_keys(m, "/mu", {"freeze_at_initial", "override"});
    if (m.contains("freeze_at_initial")) {
      if (!m.at("freeze_at_initial").is_boolean()) config_error("/mu/freeze_at_initial", "expected a boolean");
      c.freeze_mu_at_initial = m.at("freeze_at_initial").get<bool>();
    }
    if (m.contains("override") && !m.at("override").is_null()) {
      c.mu_override = as_number(m.at("override"), "/mu/override");
      if (!(*c.mu_override > 0.0)) config_error("/mu/override", "must be > 0");
    }
  }
  if (doc.contains("evaluation")) {
    const std::string e = as_string(doc.at("evaluation"), "/evaluation");
    if (e == "ee3d") c.evaluation = Evaluation::EndEffector3d;
    else if (e == "reprojection") c.evaluation = Evaluation::Reprojection;
    else if (e != "auto") config_error("/evaluation", "expected 'auto', 'ee3d' or 'reprojection'");
  }
  if (doc.contains("scatter")) {
    if (!doc.at("scatter").is_boolean()) config_error("/scatter", "expected a boolean");
    c.scatter = doc.at("scatter").get<bool>();
  }

  if (doc.contains("observability_at")) {
    const std::string at = as_string(doc.at("observability_at"), "/observability_at");
    if (at != "initial" && at != "truth") config_error("/observability_at", "expected 'initial' or 'truth'");
    c.observability_at_truth = at == "truth";
  }

  std::size_t largest = 0;
  for (std::size_t n : c.train_sizes) largest = std::max(largest, n);
  if (!c.dataset.path && largest + c.test_size > c.dataset.generation.count) {
    config_error("/dataset/generate/count",
                 fmt::format("{} poses cannot hold {} training plus {} test poses",
                             c.dataset.generation.count, largest, c.test_size));
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: invalid JSON ({})", path.string(), e.what()));
  }
  try {
    return parse_experiment_config(doc, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

// ---- cells and seeds ------------------------------------------------------

std::string CellKey::id() const {
  return fmt::format("{}__{}__p{}__n{}__{}", combo, mask, perturbation, train_size, noise.label());
}

std::vector<CellKey> enumerate_cells(const ExperimentConfig& c) {
  std::vector<CellKey> cells;
  for (const std::string& combo : c.combos)
    for (const NamedMask& mask : c.masks)
      for (double p : c.perturbations)
        for (std::size_t n : c.train_sizes)
          for (const NoiseSpec& noise : c.noise) cells.push_back({combo, mask.name, p, n, noise});
  return cells;
}

RunSeeds run_seeds(std::uint64_t master, const CellKey& cell, const std::string& mask_selection,
                   std::size_t repetition) {
  RunSeeds s;
  s.split = derive_seed(master, {label_code("split"), repetition});
  s.perturbation = derive_seed(master, {label_code("perturb"), label_code(mask_selection),
                                        value_code(cell.perturbation), repetition});
  s.noise = derive_seed(master, {label_code("noise"), value_code(cell.noise.sigma_camera_px),
                                 value_code(cell.noise.sigma_touch_mm), repetition});
  return s;
}

unsigned default_jobs() {
  if (const char* env = std::getenv("CHAINCAL_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

// ---- records --------------------------------------------------------------

json record_to_json(const RunRecord& r) {
  json cell{{"combo", r.cell.combo},
            {"mask", r.cell.mask},
            {"perturbation", r.cell.perturbation},
            {"train_size", r.cell.train_size},
            {"sigma_camera_px", r.cell.noise.sigma_camera_px},
            {"sigma_touch_mm", r.cell.noise.sigma_touch_mm}};
  json out{{"format", "chaincal-cell"},
           {"version", kCellFormatVersion},
           {"fingerprint", r.fingerprint},
           {"cell", cell},
           {"repetition", r.repetition},
           {"status", r.ok ? "ok" : "failed"}};
  if (!r.ok) {
    out["error"] = r.error;
    return out;
  }
  out["test_error"] = {{"evaluation", evaluation_name(r.evaluation)},
                       {"mean", r.test_error_mean},
                       {"std", r.test_error_std}};
  out["solver"] = {{"initial_cost", r.initial_cost},
                   {"final_cost", r.final_cost},
                   {"iterations", r.iterations},
                   {"termination", r.termination},
                   {"behind_camera", r.behind_camera},
                   {"monotone", r.monotone}};
  out["observability"] = {{"o1", r.o1},
                          {"o4", r.o4},
                          {"rank", r.rank},
                          {"free_parameters", r.free_parameters},
                          {"singular_values", r.singular_values}};
  out["parameters"] = {{"labels", r.parameter_labels}, {"estimate", r.estimate}, {"truth", r.truth}};
  out["warnings"] = r.warnings;
  json scatter = json::array();
  for (const ScatterRow& s : r.scatter) {
    scatter.push_back({s.pose, arm_name(s.arm), s.error.x(), s.error.y(), s.error.z()});
  }
  out["scatter"] = scatter;
  return out;
}

RunRecord record_from_json(const json& doc, const std::string& source) {
  try {
    if (doc.at("format") != "chaincal-cell") throw ParseError(fmt::format("{}: not a cell record", source));
    if (doc.at("version") != kCellFormatVersion) {
      throw UnsupportedVersionError(fmt::format("{}: unsupported cell record version", source));
    }
    RunRecord r;
    const json& c = doc.at("cell");
    r.cell.combo = c.at("combo").get<std::string>();
    r.cell.mask = c.at("mask").get<std::string>();
    r.cell.perturbation = c.at("perturbation").get<double>();
    r.cell.train_size = c.at("train_size").get<std::size_t>();
    r.cell.noise.sigma_camera_px = c.at("sigma_camera_px").get<double>();
    r.cell.noise.sigma_touch_mm = c.at("sigma_touch_mm").get<double>();
    r.repetition = doc.at("repetition").get<std::size_t>();
    r.fingerprint = doc.at("fingerprint").get<std::string>();
    r.ok = doc.at("status") == "ok";
    if (!r.ok) {
      r.error = doc.value("error", std::string());
      return r;
    }
    const json& te = doc.at("test_error");
    r.evaluation = te.at("evaluation") == "ee3d" ? Evaluation::EndEffector3d : Evaluation::Reprojection;
    r.test_error_mean = te.at("mean").get<double>();
    r.test_error_std = te.at("std").get<double>();
    const json& s = doc.at("solver");
    r.initial_cost = s.at("initial_cost").get<double>();
    r.final_cost = s.at("final_cost").get<double>();
    r.iterations = s.at("iterations").get<int>();
    r.termination = s.at("termination").get<std::string>();
    r.behind_camera = s.at("behind_camera").get<long>();
    r.monotone = s.at("monotone").get<bool>();
    const json& o = doc.at("observability");
    r.o1 = o.at("o1").get<double>();
    r.o4 = o.at("o4").get<double>();
    r.rank = o.at("rank").get<std::size_t>();
    r.free_parameters = o.at("free_parameters").get<std::size_t>();
    r.singular_values = o.at("singular_values").get<std::vector<double>>();
    const json& p = doc.at("parameters");
    r.parameter_labels = p.at("labels").get<std::vector<std::string>>();
    r.estimate = p.at("estimate").get<std::vector<double>>();
    r.truth = p.at("truth").get<std::vector<double>>();
    r.warnings = doc.at("warnings").get<std::vector<std::string>>();
    for (const json& row : doc.at("scatter")) {
      ScatterRow sr;
      sr.repetition = r.repetition;
      sr.pose = row.at(0).get<std::size_t>();
      sr.arm = row.at(1) == "RA" ? Arm::Right : Arm::Left;
      sr.error = Eigen::Vector3d(row.at(2).get<double>(), row.at(3).get<double>(), row.at(4).get<double>());
      r.scatter.push_back(sr);
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: malformed cell record ({})", source, e.what()));
  }
}

// ---- running --------------------------------------------------------------

namespace {

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::uint64_t dataset_digest(const Dataset& d) {
  std::ostringstream os;
  os << d.model_hash << '|' << d.size();
  for (const PoseSample& s : d.samples) {
    for (Eigen::Index i = 0; i < s.theta.size(); ++i) os << '|' << value_code(s.theta[i]);
    for (const auto& px : s.true_pixels) os << '|' << (px ? value_code(px->u) ^ mix64(value_code(px->v)) : 0);
  }
  return fnv1a64(os.str());
}

const NamedMask& mask_named(const ExperimentConfig& c, const std::string& name) {
  for (const NamedMask& m : c.masks) {
    if (m.name == name) return m;
  }
  throw ConfigError(fmt::format("unknown mask '{}'", name));
}

std::string fingerprint(const ExperimentConfig& c, const std::string& model_digest, std::uint64_t data_digest,
                        const CellKey& cell, std::size_t rep) {
  const json doc{{"cell_version", kCellFormatVersion},
                 {"model", model_digest},
                 {"dataset", hex64(data_digest)},
                 {"combo", cell.combo},
                 {"mask", mask_named(c, cell.mask).selection},
                 {"perturbation", cell.perturbation},
                 {"train_size", cell.train_size},
                 {"test_size", c.test_size},
                 {"noise", {cell.noise.sigma_camera_px, cell.noise.sigma_touch_mm}},
                 {"repetition", rep},
                 {"master_seed", c.master_seed},
                 {"solver",
                  {c.solver.max_iterations, c.solver.cost_tolerance, c.solver.step_tolerance,
                   c.solver.initial_damping, c.solver.damping_up, c.solver.damping_down}},
                 {"mu", {c.freeze_mu_at_initial, c.mu_override ? *c.mu_override : 0.0}},
                 {"evaluation", c.evaluation ? std::string(evaluation_name(*c.evaluation)) : "auto"},
                 {"scatter", c.scatter},
                 {"observability_at_truth", c.observability_at_truth}};
  return hex64(fnv1a64(doc.dump()));
}

std::filesystem::path cell_path(const std::filesystem::path& dir, const CellKey& cell, std::size_t rep) {
  return dir / "cells" / fmt::format("{}__r{}.json", cell.id(), rep);
}

std::optional<RunRecord> read_record(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) return std::nullopt;
  try {
    return record_from_json(json::parse(f), path.string());
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    f << text;
    if (!f) throw Error(fmt::format("failed while writing '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

RunRecord run_cell(const ExperimentConfig& c, const RobotModel& truth, const Dataset& data, const CellKey& cell,
                   std::size_t rep) {
  RunRecord r;
  r.cell = cell;
  r.repetition = rep;
  const NamedMask& named = mask_named(c, cell.mask);
  const RunSeeds seeds = run_seeds(c.master_seed, cell, named.selection, rep);

  std::mt19937_64 split_rng(seeds.split);
  const Split sp = split(data, cell.train_size, c.test_size, split_rng);
  const ParameterMask mask = default_mask(truth, MaskSelection::parse(named.selection));
  std::mt19937_64 perturb_rng(seeds.perturbation);
  const RobotModel initial = perturb(truth, mask, cell.perturbation, perturb_rng);
  const std::vector<PoseSample> train = noisy_subset(data, sp.train, cell.noise, seeds.noise);
  const std::vector<PoseSample> test = data.select(sp.test);
  const ChainCombo combo = ChainCombo::parse(cell.combo);

  CalibrationOptions opt;
  opt.solver = c.solver;
  opt.freeze_mu_at_initial = c.freeze_mu_at_initial;
  opt.residuals.mu_override = c.mu_override;
  const CalibrationOutcome out = solve_subset(initial, mask, train, combo, opt);

  r.evaluation = c.evaluation.value_or(default_evaluation(mask));
  const std::vector<Arm> arms = evaluated_arms(mask);
  const TestError te = test_error(out.model, truth, test, r.evaluation, arms);
  r.test_error_mean = te.mean;
  r.test_error_std = te.std;
  r.initial_cost = out.report.initial_cost;
  r.final_cost = out.report.final_cost;
  r.iterations = out.report.iterations;
  r.termination = std::string(termination_name(out.report.termination));
  r.behind_camera = out.report.behind_camera_count;
  r.monotone = std::is_sorted(out.report.cost_trace.rbegin(), out.report.cost_trace.rend());

  const ObservabilityReport obs =
      analyze(c.observability_at_truth ? truth : initial, mask, train, combo, opt.residuals);
  r.o1 = obs.o1;
  r.o4 = obs.o4;
  r.rank = obs.rank;
  r.free_parameters = obs.parameters;
  r.singular_values = obs.singular_values;

  r.parameter_labels = mask.free_labels();
  const ParameterVector phi = pack(truth, mask);
  r.truth.assign(phi.data(), phi.data() + phi.size());
  r.estimate.assign(out.estimate.data(), out.estimate.data() + out.estimate.size());
  r.warnings = out.warnings;
  if (c.scatter) r.scatter = residual_scatter(out.model, truth, test, rep, arms);
  r.ok = true;
  return r;
}

namespace {

RobotModel load_truth(const ExperimentConfig& c) {
  return c.model_path ? load_model(*c.model_path) : load_model(default_model_path());
}

}  // namespace

Dataset resolve_dataset(const ExperimentConfig& c, const RobotModel& truth, const std::filesystem::path& cache_dir,
                        unsigned jobs) {
  const std::string hash = model_hash(truth);
  Dataset d;
  if (c.dataset.path) {
    d = load_dataset(*c.dataset.path);
    if (d.model_hash != hash) {
      throw ConfigError(fmt::format("dataset '{}' was generated from model {} but the experiment model is {}",
                                    c.dataset.path->string(), d.model_hash, hash));
    }
  } else {
    const GenerationSettings& g = c.dataset.generation;
    const std::filesystem::path cached = cache_dir / fmt::format("dataset_s{}_n{}.jsonl", g.seed, g.count);
    bool reuse = false;
    if (std::filesystem::exists(cached)) {
      try {
        d = load_dataset(cached);
        reuse = d.model_hash == hash && d.seed == g.seed && d.size() == g.count && d.box == g.box;
      } catch (const ParseError&) {
        reuse = false;
      }
    }
    if (!reuse) {
      GenerationSettings gs = g;
      gs.jobs = jobs;
      d = generate(truth, gs);
      save_dataset(d, cached);
    }
  }
  std::size_t largest = 0;
  for (std::size_t n : c.train_sizes) largest = std::max(largest, n);
  if (largest + c.test_size > d.size()) {
    throw ConfigError(fmt::format("dataset has {} poses, fewer than {} training plus {} test poses", d.size(),
                                  largest, c.test_size));
  }
  return d;
}

ExperimentSummary run_experiment(const ExperimentConfig& c, const ExperimentOptions& options) {
  const std::filesystem::path dir = options.out_dir / c.name;
  std::filesystem::create_directories(dir / "cells");
  const RobotModel truth = load_truth(c);
  const Dataset data = resolve_dataset(c, truth, dir, options.jobs);
  const std::string model_digest = model_hash(truth);
  const std::uint64_t data_digest = dataset_digest(data);

  struct Job {
    CellKey cell;
    std::size_t rep;
  };
  std::vector<Job> jobs;
  for (const CellKey& cell : enumerate_cells(c))
    for (std::size_t rep = 0; rep < c.repetitions; ++rep) jobs.push_back({cell, rep});

  std::mutex progress_mutex;
  std::atomic<std::size_t> executed{0};
  parallel_for(jobs.size(), options.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    const std::filesystem::path path = cell_path(dir, job.cell, job.rep);
    const std::string fp = fingerprint(c, model_digest, data_digest, job.cell, job.rep);
    if (options.resume) {
      const std::optional<RunRecord> existing = read_record(path);
      if (existing && existing->ok && existing->fingerprint == fp) {
        if (options.progress) {
          std::lock_guard lock(progress_mutex);
          options.progress(*existing);
        }
        return;
      }
    }
    RunRecord r;
    try {
      r = run_cell(c, truth, data, job.cell, job.rep);
    } catch (const std::exception& e) {
      r = RunRecord{};
      r.cell = job.cell;
      r.repetition = job.rep;
      r.ok = false;
      r.error = e.what();
    }
    r.fingerprint = fp;
    write_text_atomic(path, record_to_json(r).dump(1) + "\n");
    ++executed;
    if (options.progress) {
      std::lock_guard lock(progress_mutex);
      options.progress(r);
    }
  });

  ExperimentSummary summary = write_report(c, options.out_dir);
  summary.executed = executed.load();
  return summary;
}

// ---- aggregation ----------------------------------------------------------

namespace {

std::string num(double v) { return fmt::format("{}", v); }

std::string cell_columns(const CellKey& k) {
  return fmt::format("{},{},{},{},{},{}", k.combo, k.mask, num(k.perturbation), k.train_size,
                     num(k.noise.sigma_camera_px), num(k.noise.sigma_touch_mm));
}

constexpr std::string_view kCellHeader = "combo,mask,perturbation,train_poses,sigma_camera_px,sigma_touch_mm";

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

}  // namespace

ExperimentSummary write_report(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
  const std::filesystem::path dir = out_dir / c.name;
  ExperimentSummary summary;
  summary.directory = dir;

  std::string summary_csv = fmt::format(
      "{},evaluation,repetitions,failed,mean_error,std_error,se_error,mean_o1,mean_o4,rank_deficient,"
      "mean_iterations,mean_final_cost\n",
      kCellHeader);
  std::string reps_csv = fmt::format("{},repetition,metric,value\n", kCellHeader);
  std::string params_csv = fmt::format("{},parameter,truth,mean_abs_error,estimate_std,repetitions\n", kCellHeader);
  std::string obs_csv = fmt::format("{},repetition,index,singular_value\n", kCellHeader);
  std::vector<std::pair<std::filesystem::path, std::string>> scatter_files;

  for (const CellKey& cell : enumerate_cells(c)) {
    std::vector<RunRecord> ok;
    std::size_t failed = 0;
    for (std::size_t rep = 0; rep < c.repetitions; ++rep) {
      ++summary.runs;
      std::optional<RunRecord> r = read_record(cell_path(dir, cell, rep));
      if (r && r->ok) ok.push_back(std::move(*r));
      else ++failed;
    }
    summary.failed += failed;
    const std::string cols = cell_columns(cell);

    std::vector<double> err, o1, o4, iters, cost;
    std::size_t deficient = 0;
    for (const RunRecord& r : ok) {
      err.push_back(r.test_error_mean);
      o1.push_back(r.o1);
      o4.push_back(r.o4);
      iters.push_back(r.iterations);
      cost.push_back(r.final_cost);
      if (r.rank < r.free_parameters) ++deficient;
      const std::pair<std::string_view, double> metrics[] = {
          {"test_error_mean", r.test_error_mean}, {"test_error_std", r.test_error_std},
          {"initial_cost", r.initial_cost},       {"final_cost", r.final_cost},
          {"iterations", r.iterations},           {"o1", r.o1},
          {"o4", r.o4},                           {"rank", static_cast<double>(r.rank)},
          {"behind_camera", static_cast<double>(r.behind_camera)}};
      for (const auto& [name, value] : metrics) {
        reps_csv += fmt::format("{},{},{},{}\n", cols, r.repetition, name, num(value));
      }
      for (std::size_t i = 0; i < r.singular_values.size(); ++i) {
        obs_csv += fmt::format("{},{},{},{}\n", cols, r.repetition, i + 1, num(r.singular_values[i]));
      }
    }
    const Moments e = moments(err);
    const double se = err.empty() ? 0.0 : e.std / std::sqrt(static_cast<double>(err.size()));
    const std::string_view eval =
        ok.empty() ? std::string_view("none") : evaluation_name(ok.front().evaluation);
    summary_csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", cols, eval, ok.size(), failed, num(e.mean),
                               num(e.std), num(se), num(moments(o1).mean), num(moments(o4).mean), deficient,
                               num(moments(iters).mean), num(moments(cost).mean));

    if (!ok.empty()) {
      const std::size_t m = ok.front().estimate.size();
      for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> est;
        double abs_sum = 0.0;
        for (const RunRecord& r : ok) {
          est.push_back(r.estimate.at(i));
          abs_sum += std::abs(r.estimate.at(i) - r.truth.at(i));
        }
        params_csv += fmt::format("{},{},{},{},{},{}\n", cols, ok.front().parameter_labels.at(i),
                                  num(ok.front().truth.at(i)), num(abs_sum / static_cast<double>(ok.size())),
                                  num(moments(est).std), ok.size());
      }
    }

    if (c.scatter) {
      for (Arm arm : {Arm::Left, Arm::Right}) {
        std::string text = "repetition,pose,ex,ey,ez\n";
        bool any = false;
        for (const RunRecord& r : ok) {
          for (const ScatterRow& s : r.scatter) {
            if (s.arm != arm) continue;
            any = true;
            text += fmt::format("{},{},{},{},{}\n", r.repetition, s.pose, num(s.error.x()), num(s.error.y()),
                                num(s.error.z()));
          }
        }
        if (any) {
          scatter_files.emplace_back(dir / "scatter" / fmt::format("{}__{}.csv", cell.id(), arm_name(arm)), text);
        }
      }
    }
  }

  std::filesystem::create_directories(dir);
  const std::pair<std::filesystem::path, std::string*> tables[] = {
      {dir / (c.name + ".csv"), &summary_csv},
      {dir / (c.name + "_reps.csv"), &reps_csv},
      {dir / (c.name + "_params.csv"), &params_csv},
      {dir / (c.name + "_observability.csv"), &obs_csv}};
  for (const auto& [path, text] : tables) {
    write_text_atomic(path, *text);
    summary.tables.push_back(path);
  }
  for (const auto& [path, text] : scatter_files) {
    write_text_atomic(path, text);
    summary.tables.push_back(path);
  }
  return summary;
}

}  // namespace chaincal
