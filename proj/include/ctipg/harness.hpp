#pragma once

// Experiment configuration, single runs, the epsilon x method x ratio sweep,
// telemetry writers and the accuracy-vs-cost report table.

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctipg/mrf.hpp"
#include "ctipg/operators.hpp"
#include "ctipg/solver.hpp"

namespace ctipg {

inline constexpr int kSchemaVersion = 1;

struct SequenceConfig {
  Index length = 64;
  double tr_ms = 37.0;
  double te_ms = 18.5;
  double max_flip_deg = 60.0;
  double half_periods = 2.5;

  ExcitationSequence build() const {
    ExcitationSequence seq{smooth_flip_profile(length, max_flip_deg, half_periods), tr_ms, te_ms};
    seq.validate();
    return seq;
  }
};

struct RunSpec {
  std::string method = "brute-exact";  // brute-exact | tree-exact | tree-ann
  double epsilon = 0.0;
  Index ratio = 8;
  std::optional<EpsilonSchedule> schedule;  // overrides the constant-epsilon default
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  SequenceConfig sequence;
  GridSpec grid;
  std::optional<PhantomSpec> phantom;  // default: desk layout sized below
  Index phantom_height = 32;
  Index phantom_width = 32;
  std::string shift_rule = "lattice";
  double noise_norm = 0.0;
  int max_iters = 40;
  double tolerance = 1e-6;
  std::optional<double> step_size;
  double audit_fraction = 0.0;
  double pd_floor = kBackgroundPdFloor;  // background cutoff for T1/T2 maps, fraction of peak PD
  RunSpec solve;
  std::vector<double> sweep_epsilons{0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<std::string> sweep_methods{"brute-exact", "tree-exact", "tree-ann"};
  std::vector<Index> sweep_ratios{8, 16};

  void validate() const {
    require(shift_rule == "lattice", "unsupported shift rule '" + shift_rule + "'");
    require(noise_norm >= 0.0, "noise_norm must be >= 0");
    require(pd_floor >= 0.0 && pd_floor < 1.0, "metrics.pd_floor must lie in [0, 1)");
    for (double e : sweep_epsilons) require(e >= 0.0 && std::isfinite(e), "sweep epsilons must be finite and >= 0");
    for (const auto& m : sweep_methods)
      require(m == "brute-exact" || m == "tree-exact" || m == "tree-ann", "unknown sweep method '" + m + "'");
    for (Index r : sweep_ratios) require(r >= 1, "sampling ratios must be >= 1");
    require(solve.method == "brute-exact" || solve.method == "tree-exact" || solve.method == "tree-ann",
            "unknown solve method '" + solve.method + "'");
  }
};

namespace detail {

inline EpsilonSchedule schedule_from_json(const nlohmann::json& j) {
  EpsilonSchedule s;
  const auto variant = j.value("variant", std::string("constant"));
  if (variant == "constant")
    s.variant = EpsilonSchedule::Variant::Constant;
  else if (variant == "geometric")
    s.variant = EpsilonSchedule::Variant::Geometric;
  else if (variant == "objective_feedback")
    s.variant = EpsilonSchedule::Variant::ObjectiveFeedback;
  else if (variant == "gradient_feedback")
    s.variant = EpsilonSchedule::Variant::GradientFeedback;
  else
    throw Error("unknown schedule variant '" + variant + "'");
  const auto kind = j.value("kind", std::string(s.variant == EpsilonSchedule::Variant::ObjectiveFeedback ||
                                                        s.variant == EpsilonSchedule::Variant::GradientFeedback
                                                    ? "additive"
                                                    : "multiplicative"));
  require(kind == "multiplicative" || kind == "additive", "schedule kind must be multiplicative or additive");
  s.kind = kind == "additive" ? ApproxKind::Additive : ApproxKind::Multiplicative;
  s.epsilon = j.value("epsilon", 0.0);
  s.decay = j.value("decay", 0.5);
  s.gamma = j.value("gamma", 0.0);
  s.validate();
  return s;
}

inline nlohmann::json schedule_to_json(const EpsilonSchedule& s) {
  static const char* names[] = {"constant", "geometric", "objective_feedback", "gradient_feedback"};
  return {{"variant", names[static_cast<int>(s.variant)]},
          {"kind", s.kind == ApproxKind::Additive ? "additive" : "multiplicative"},
          {"epsilon", s.epsilon},
          {"decay", s.decay},
          {"gamma", s.gamma}};
}

// Shortest round-trip decimal form, stable across runs.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    require(j.at("schema_version").get<int>() == kSchemaVersion,
            "unsupported config schema_version (expected " + std::to_string(kSchemaVersion) + ")");
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("sequence")) {
      const auto& s = j["sequence"];
      c.sequence.length = s.value("length", c.sequence.length);
      c.sequence.tr_ms = s.value("tr_ms", c.sequence.tr_ms);
      c.sequence.te_ms = s.value("te_ms", c.sequence.tr_ms / 2.0);
      c.sequence.max_flip_deg = s.value("max_flip_deg", c.sequence.max_flip_deg);
      c.sequence.half_periods = s.value("half_periods", c.sequence.half_periods);
    }
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      c.grid.t1_min = g.value("t1_min", c.grid.t1_min);
      c.grid.t1_max = g.value("t1_max", c.grid.t1_max);
      c.grid.t1_count = g.value("t1_count", c.grid.t1_count);
      c.grid.t2_min = g.value("t2_min", c.grid.t2_min);
      c.grid.t2_max = g.value("t2_max", c.grid.t2_max);
      c.grid.t2_count = g.value("t2_count", c.grid.t2_count);
    }
    if (j.contains("phantom")) {
      const auto& p = j["phantom"];
      c.phantom_height = p.value("height", c.phantom_height);
      c.phantom_width = p.value("width", c.phantom_width);
      if (p.contains("segments")) c.phantom = phantom_spec_from_json(p);
    }
    if (j.contains("sampling")) c.shift_rule = j["sampling"].value("shift_rule", c.shift_rule);
    c.noise_norm = j.value("noise_norm", 0.0);
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      c.max_iters = s.value("max_iters", c.max_iters);
      c.tolerance = s.value("tolerance", c.tolerance);
      if (s.contains("step_size") && !s["step_size"].is_null()) c.step_size = s["step_size"].get<double>();
      c.audit_fraction = s.value("audit_fraction", c.audit_fraction);
    }
    if (j.contains("metrics")) c.pd_floor = j["metrics"].value("pd_floor", c.pd_floor);
    if (j.contains("solve")) {
      const auto& s = j["solve"];
      c.solve.method = s.value("method", c.solve.method);
      c.solve.epsilon = s.value("epsilon", c.solve.epsilon);
      c.solve.ratio = s.value("ratio", c.solve.ratio);
      if (s.contains("schedule")) c.solve.schedule = detail::schedule_from_json(s["schedule"]);
    }
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      c.sweep_epsilons = s.value("epsilons", c.sweep_epsilons);
      c.sweep_methods = s.value("methods", c.sweep_methods);
      c.sweep_ratios = s.value("ratios", c.sweep_ratios);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open config " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.seed;
  j["sequence"] = {{"length", c.sequence.length},
                   {"tr_ms", c.sequence.tr_ms},
                   {"te_ms", c.sequence.te_ms},
                   {"max_flip_deg", c.sequence.max_flip_deg},
                   {"half_periods", c.sequence.half_periods}};
  j["grid"] = {{"t1_min", c.grid.t1_min}, {"t1_max", c.grid.t1_max}, {"t1_count", c.grid.t1_count},
               {"t2_min", c.grid.t2_min}, {"t2_max", c.grid.t2_max}, {"t2_count", c.grid.t2_count}};
  j["phantom"] = c.phantom ? phantom_spec_to_json(*c.phantom)
                           : nlohmann::json{{"height", c.phantom_height}, {"width", c.phantom_width}};
  j["sampling"] = {{"shift_rule", c.shift_rule}};
  j["noise_norm"] = c.noise_norm;
  j["solver"] = {{"max_iters", c.max_iters},
                 {"tolerance", c.tolerance},
                 {"step_size", c.step_size ? nlohmann::json(*c.step_size) : nlohmann::json(nullptr)},
                 {"audit_fraction", c.audit_fraction}};
  j["metrics"] = {{"pd_floor", c.pd_floor}};
  j["solve"] = {{"method", c.solve.method}, {"epsilon", c.solve.epsilon}, {"ratio", c.solve.ratio}};
  if (c.solve.schedule) j["solve"]["schedule"] = detail::schedule_to_json(*c.solve.schedule);
  j["sweep"] = {{"epsilons", c.sweep_epsilons}, {"methods", c.sweep_methods}, {"ratios", c.sweep_ratios}};
  return j;
}

/// Everything a run needs that does not depend on the sampling ratio.
struct Artifacts {
  Dictionary dict;
  std::optional<DictionaryTree> tree;
  PhantomSpec phantom_spec;
  Phantom phantom;
  SynthesizedImage truth;
};

inline PhantomSpec resolve_phantom_spec(const ExperimentConfig& c, const Dictionary& dict) {
  return c.phantom ? *c.phantom : desk_phantom_spec(dict.params(), c.phantom_height, c.phantom_width);
}

inline Artifacts prepare_artifacts(const ExperimentConfig& c, bool with_tree = true) {
  Artifacts a;
  a.dict = build_dictionary(c.sequence.build(), make_grid(c.grid));
  if (with_tree) a.tree = a.dict.build_tree();
  a.phantom_spec = resolve_phantom_spec(c, a.dict);
  a.phantom = rasterize(a.phantom_spec);
  a.truth = synthesize_phantom(a.phantom, a.dict);
  return a;
}

inline Artifacts assemble_artifacts(Dictionary dict, std::optional<DictionaryTree> tree, PhantomSpec spec) {
  Artifacts a;
  a.dict = std::move(dict);
  a.tree = std::move(tree);
  a.phantom_spec = std::move(spec);
  a.phantom = rasterize(a.phantom_spec);
  a.truth = synthesize_phantom(a.phantom, a.dict);
  return a;
}

struct RunSummary {
  std::string method;
  double epsilon = 0.0;
  Index ratio = 1;
  double final_rel_error = 0.0;  // |x - x0| / |x0|
  double t1_mae = 0.0;
  double t2_mae = 0.0;
  std::uint64_t cum_distances = 0;
  int iterations = 0;
  bool converged = false;
  Index clamped_pixels = 0;  // summed over iterations
  double step_size = 0.0;
  double wall_time_s = 0.0;
  AuditReport audit;
};

struct RunOutput {
  SolverResult result;
  RunSummary summary;
  EpiPattern pattern;
  CVector measurements;
};

inline SolverConfig solver_config_for(const ExperimentConfig& c, const RunSpec& run) {
  SolverConfig s;
  s.step_size = c.step_size;
  s.max_iters = c.max_iters;
  s.tolerance = c.tolerance;
  s.audit_fraction = c.audit_fraction;
  s.seed = c.seed;
  if (run.method == "brute-exact") {
    s.search = SolverConfig::Search::BruteExact;
  } else if (run.method == "tree-exact") {
    s.search = SolverConfig::Search::Tree;
    s.schedule = EpsilonSchedule::constant(0.0);
  } else if (run.method == "tree-ann") {
    s.search = SolverConfig::Search::Tree;
    s.schedule = run.schedule.value_or(EpsilonSchedule::constant(run.epsilon));
  } else {
    throw Error("unknown method '" + run.method + "'");
  }
  return s;
}

/// Samples the synthesized phantom with the lattice EPI pattern and solves.
inline RunOutput run_experiment(const Artifacts& a, const ExperimentConfig& c, const RunSpec& run) {
  const SolverConfig scfg = solver_config_for(c, run);
  if (scfg.search == SolverConfig::Search::Tree) require(a.tree.has_value(), "method " + run.method + " needs a cover tree");
  RunOutput out;
  out.pattern = lattice_epi_pattern(a.phantom.height, a.phantom.width, a.dict.dim(), run.ratio);
  const EpiOperator op(out.pattern);
  out.measurements = add_noise(op.apply(vectorize(a.truth.X)), c.noise_norm, c.seed);

  const auto& table = a.dict.params();
  const IterationMetrics metrics = [&](const std::vector<Index>& ids, const std::vector<double>& gammas,
                                       IterationRecord& r) {
    const ParameterMaps maps = params_from_atoms(ids, gammas, table, c.pd_floor);
    r.t1_mae = mean_abs_error(maps.t1, a.phantom.t1);
    r.t2_mae = mean_abs_error(maps.t2, a.phantom.t2);
  };
  const auto start = std::chrono::steady_clock::now();
  out.result = ipg_run(op, a.dict, a.tree ? &*a.tree : nullptr, out.measurements, scfg, &a.truth.X, metrics);
  const auto stop = std::chrono::steady_clock::now();

  const IterationRecord& last = out.result.records.back();
  RunSummary& s = out.summary;
  s.method = run.method;
  s.epsilon = run.method == "tree-ann" ? run.epsilon : 0.0;
  s.ratio = run.ratio;
  s.final_rel_error = last.rel_error;
  s.t1_mae = last.t1_mae;
  s.t2_mae = last.t2_mae;
  s.cum_distances = last.distances_cum;
  s.iterations = last.iter;
  s.converged = out.result.converged;
  for (const auto& r : out.result.records) s.clamped_pixels += r.clamped_pixels;
  s.step_size = out.result.step_size;
  s.wall_time_s = std::chrono::duration<double>(stop - start).count();
  s.audit = out.result.audit;
  return out;
}

inline const char* kTelemetryHeader =
    "iter,objective,rel_solution_mse,t1_mae,t2_mae,epsilon_t,distances_iter,distances_cum";

inline std::string telemetry_csv(const std::vector<IterationRecord>& records) {
  std::ostringstream os;
  os << kTelemetryHeader << '\n';
  for (const auto& r : records)
    os << r.iter << ',' << detail::fmt(r.objective) << ',' << detail::fmt(r.rel_error) << ','
       << detail::fmt(r.t1_mae) << ',' << detail::fmt(r.t2_mae) << ',' << detail::fmt(r.epsilon) << ','
       << r.distances << ',' << r.distances_cum << '\n';
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot open " + path.string() + " for writing");
  os << text;
  require(static_cast<bool>(os), "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// 64-bit FNV-1a over the file bytes.
inline std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : read_text(path)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
  return {{"schema_version", kSchemaVersion},
          {"method", s.method},
          {"epsilon", s.epsilon},
          {"ratio", s.ratio},
          {"final_rel_error", s.final_rel_error},
          {"t1_mae", s.t1_mae},
          {"t2_mae", s.t2_mae},
          {"cum_distances", s.cum_distances},
          {"iterations", s.iterations},
          {"converged", s.converged},
          {"clamped_pixels", s.clamped_pixels},
          {"step_size", s.step_size},
          {"wall_time_s", s.wall_time_s},
          {"audit", {{"checked", s.audit.checked}, {"violations", s.audit.violations}}}};
}

inline RunSummary summary_from_json(const nlohmann::json& j) {
  RunSummary s;
  try {
    require(j.at("schema_version").get<int>() == kSchemaVersion, "unsupported summary schema_version");
    s.method = j.at("method").get<std::string>();
    s.epsilon = j.at("epsilon").get<double>();
    s.ratio = j.at("ratio").get<Index>();
    s.final_rel_error = j.at("final_rel_error").get<double>();
    s.t1_mae = j.at("t1_mae").get<double>();
    s.t2_mae = j.at("t2_mae").get<double>();
    s.cum_distances = j.at("cum_distances").get<std::uint64_t>();
    s.iterations = j.value("iterations", 0);
    s.converged = j.value("converged", false);
    s.clamped_pixels = j.value("clamped_pixels", Index{0});
    s.step_size = j.value("step_size", 0.0);
    s.wall_time_s = j.value("wall_time_s", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed run summary: ") + e.what());
  }
  return s;
}

/// Empirical embedding constants of `op` over `count` random product-model
/// images (uniform atom per pixel, intensity in [0, 1]), all pairs, and the
/// additive-theorem bound they imply for step size mu.
inline nlohmann::json bound_report(const LinearOperator& op, const Dictionary& dict, double mu, std::uint64_t seed,
                                   Index count = 12) {
  const Index J = op.input_dim() / dict.dim();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, dict.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<CVector> points;
  for (Index p = 0; p < count; ++p) {
    CMatrix X(static_cast<Eigen::Index>(dict.dim()), static_cast<Eigen::Index>(J));
    for (Index j = 0; j < J; ++j) X.col(static_cast<Eigen::Index>(j)) = unit(rng) * dict.normalized_atom(pick(rng));
    points.push_back(vectorize(X));
  }
  const EmbeddingEstimate e = estimate_bilipschitz(op, points, count * count);
  nlohmann::json j{{"mu", mu}, {"alpha_hat", e.alpha_hat}, {"beta_hat", e.beta_hat}, {"pairs", e.pairs_evaluated}};
  if (e.alpha_hat > 0.0) {
    const ConvergenceBound b = compute_bound(BoundTheorem::CsipaAdditive, {e.alpha_hat, e.beta_hat, mu});
    j["csipa_rho"] = b.rho;
    j["csipa_valid"] = b.valid;
    j["violated"] = b.violated;
  }
  return j;
}

/// Summary JSON for one run: config echo, run summary and bound report.
inline nlohmann::json run_report_json(const ExperimentConfig& c, const RunOutput& out, const Dictionary& dict) {
  nlohmann::json j = summary_to_json(out.summary);
  j["config"] = config_to_json(c);
  j["bound"] = bound_report(EpiOperator(out.pattern), dict, out.result.step_size, c.seed);
  j["measurements"] = out.measurements.size();
  return j;
}

inline std::string run_label(const RunSummary& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_eps%.2f_r%zu", s.method.c_str(), s.epsilon, static_cast<std::size_t>(s.ratio));
  return buf;
}

/// Writes telemetry.csv and summary.json into `dir`.
inline void write_run(const std::filesystem::path& dir, const ExperimentConfig& c, const RunOutput& out,
                      const Dictionary& dict) {
  write_text(dir / "telemetry.csv", telemetry_csv(out.result.records));
  write_text(dir / "summary.json", run_report_json(c, out, dict).dump(2) + "\n");
}

/// Rows (method, epsilon, ratio, final MSE, T1 MAE, T2 MAE, cum distances),
/// sorted by cumulative distances; ties keep input order.
inline std::vector<RunSummary> report_table(std::vector<RunSummary> runs) {
  require(!runs.empty(), "report needs at least one run summary");
  std::stable_sort(runs.begin(), runs.end(),
                   [](const RunSummary& a, const RunSummary& b) { return a.cum_distances < b.cum_distances; });
  return runs;
}

inline std::string report_csv(const std::vector<RunSummary>& rows) {
  std::ostringstream os;
  os << "method,epsilon,ratio,final_mse,t1_mae,t2_mae,cum_distances\n";
  for (const auto& r : rows)
    os << r.method << ',' << detail::fmt(r.epsilon) << ',' << r.ratio << ',' << detail::fmt(r.final_rel_error) << ','
       << detail::fmt(r.t1_mae) << ',' << detail::fmt(r.t2_mae) << ',' << r.cum_distances << '\n';
  return os.str();
}

inline nlohmann::json report_json(const std::vector<RunSummary>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"method", r.method},
                   {"epsilon", r.epsilon},
                   {"ratio", r.ratio},
                   {"final_mse", r.final_rel_error},
                   {"t1_mae", r.t1_mae},
                   {"t2_mae", r.t2_mae},
                   {"cum_distances", r.cum_distances}});
  return {{"schema_version", kSchemaVersion}, {"rows", arr}};
}

/// Expands the sweep grid: per ratio, brute-exact and tree-exact once each
/// (epsilon is meaningless for them) and tree-ann for every nonzero epsilon.
inline std::vector<RunSpec> sweep_plan(const ExperimentConfig& c) {
  std::vector<RunSpec> plan;
  auto wants = [&](const char* m) {
    return std::find(c.sweep_methods.begin(), c.sweep_methods.end(), m) != c.sweep_methods.end();
  };
  for (Index ratio : c.sweep_ratios) {
    if (wants("brute-exact")) plan.push_back({"brute-exact", 0.0, ratio, std::nullopt});
    if (wants("tree-exact")) plan.push_back({"tree-exact", 0.0, ratio, std::nullopt});
    if (wants("tree-ann"))
      for (double e : c.sweep_epsilons)
        if (e > 0.0) plan.push_back({"tree-ann", e, ratio, std::nullopt});
  }
  return plan;
}

struct SweepResult {
  std::vector<RunSummary> summaries;
  std::vector<std::filesystem::path> telemetry_files;
};

/// Runs the plan sequentially; each run writes into its own directory under
/// `out_dir`, then report.csv / report.json are written at the top.
inline SweepResult run_sweep(const Artifacts& a, const ExperimentConfig& c, const std::filesystem::path& out_dir) {
  SweepResult res;
  for (const RunSpec& run : sweep_plan(c)) {
    RunOutput out = run_experiment(a, c, run);
    const auto dir = out_dir / run_label(out.summary);
    write_run(dir, c, out, a.dict);
    res.summaries.push_back(out.summary);
    res.telemetry_files.push_back(dir / "telemetry.csv");
  }
  const auto rows = report_table(res.summaries);
  write_text(out_dir / "report.csv", report_csv(rows));
  write_text(out_dir / "report.json", report_json(rows).dump(2) + "\n");
  return res;
}

/// Collects every summary.json below `dir` in path order.
inline std::vector<RunSummary> collect_summaries(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "summary.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<RunSummary> out;
  for (const auto& f : files) {
    try {
      out.push_back(summary_from_json(nlohmann::json::parse(read_text(f))));
    } catch (const nlohmann::json::exception& e) {
      throw Error(f.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ctipg
