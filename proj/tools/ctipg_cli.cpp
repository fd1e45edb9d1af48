#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ctipg/ctipg.hpp"

namespace fs = std::filesystem;
using namespace ctipg;

namespace {

constexpr int kExitError = 1;
constexpr int kExitInvalid = 2;

struct Paths {
  std::string config;
  std::string workdir = "work";
  std::string out;

  fs::path dictionary() const { return fs::path(workdir) / "dictionary.bin"; }
  fs::path tree() const { return fs::path(workdir) / "tree.bin"; }
  fs::path phantom() const { return fs::path(workdir) / "phantom.json"; }
  fs::path out_or(const char* fallback) const { return out.empty() ? fs::path(workdir) / fallback : fs::path(out); }
};

void need(const fs::path& p, const char* producer) {
  require(fs::exists(p), "missing artifact " + p.string() + " (run `" + producer + "` first)");
}

Dictionary load_dict(const Paths& p) {
  need(p.dictionary(), "gen-dict");
  return load_dictionary(p.dictionary().string());
}

DictionaryTree load_tree(const Paths& p, const Dictionary& dict) {
  need(p.tree(), "build-tree");
  std::ifstream is(p.tree(), std::ios::binary);
  require(static_cast<bool>(is), "cannot open " + p.tree().string());
  return DictionaryTree::load(is, dict.shared_normalized());
}

PhantomSpec load_phantom(const Paths& p) {
  need(p.phantom(), "gen-phantom");
  return phantom_spec_from_json(nlohmann::json::parse(read_text(p.phantom())));
}

Artifacts load_artifacts(const Paths& p, bool with_tree) {
  Dictionary dict = load_dict(p);
  std::optional<DictionaryTree> tree;
  if (with_tree) tree = load_tree(p, dict);
  return assemble_artifacts(std::move(dict), std::move(tree), load_phantom(p));
}

int gen_dict(const Paths& p) {
  const ExperimentConfig c = load_config(p.config);
  const Dictionary dict = build_dictionary(c.sequence.build(), make_grid(c.grid));
  fs::create_directories(p.workdir);
  save_dictionary(p.dictionary().string(), dict);
  std::cout << "dictionary: d=" << dict.size() << " n=" << dict.dim() << " -> " << p.dictionary().string() << "\n";
  return 0;
}

int build_tree(const Paths& p) {
  const Dictionary dict = load_dict(p);
  const DictionaryTree tree = dict.build_tree();
  std::ofstream os(p.tree(), std::ios::binary);
  require(static_cast<bool>(os), "cannot open " + p.tree().string() + " for writing");
  tree.save(os);
  require(static_cast<bool>(os), "write failed for " + p.tree().string());
  std::cout << "tree: nodes=" << tree.nodes().size() << " sigma=" << tree.sigma() << " max_scale=" << tree.max_scale()
            << " build_distances=" << tree.build_distance_count() << " -> " << p.tree().string() << "\n";
  return 0;
}

int gen_phantom(const Paths& p) {
  const ExperimentConfig c = load_config(p.config);
  const Dictionary dict = load_dict(p);
  const PhantomSpec spec = resolve_phantom_spec(c, dict);
  const Phantom ph = rasterize(spec);
  synthesize_phantom(ph, dict);  // fails if a segment is off-grid
  write_text(p.phantom(), phantom_spec_to_json(spec).dump(2) + "\n");
  std::cout << "phantom: " << ph.height << "x" << ph.width << " segments=" << spec.segments.size() << " -> "
            << p.phantom().string() << "\n";
  return 0;
}

int solve(const Paths& p) {
  const ExperimentConfig c = load_config(p.config);
  const Artifacts a = load_artifacts(p, c.solve.method != "brute-exact");
  const RunOutput out = run_experiment(a, c, c.solve);
  const fs::path dir = p.out_or("solve");
  write_run(dir, c, out, a.dict);
  write_text(dir / "pattern.json", pattern_to_json(out.pattern).dump(2) + "\n");
  write_measurements((dir / "measurements.bin").string(), out.measurements);
  const auto& s = out.summary;
  std::cout << run_label(s) << ": iterations=" << s.iterations << " rel_error=" << s.final_rel_error
            << " t1_mae=" << s.t1_mae << " t2_mae=" << s.t2_mae << " distances=" << s.cum_distances << " -> "
            << dir.string() << "\n";
  if (s.audit.violations > 0) {
    std::cerr << "projection audit failed: " << s.audit.first_violation << "\n";
    return kExitInvalid;
  }
  return 0;
}

int sweep(const Paths& p) {
  const ExperimentConfig c = load_config(p.config);
  const Artifacts a = load_artifacts(p, true);
  const fs::path dir = p.out_or("sweep");
  const SweepResult res = run_sweep(a, c, dir);
  std::cout << report_csv(report_table(res.summaries));
  for (const auto& s : res.summaries)
    if (s.audit.violations > 0) {
      std::cerr << run_label(s) << ": projection audit failed\n";
      return kExitInvalid;
    }
  return 0;
}

int validate_tree(const Paths& p) {
  const Dictionary dict = load_dict(p);
  const DictionaryTree tree = load_tree(p, dict);
  const InvariantReport r = tree.validate();
  auto line = [](const char* name, const PropertyCheck& c) {
    std::cout << name << ": " << (c.pass ? "pass" : "FAIL " + c.counterexample) << "\n";
  };
  line("nesting", r.nesting);
  line("covering", r.covering);
  line("separation", r.separation);
  line("maxdist", r.maxdist);
  return r.all() ? 0 : kExitInvalid;
}

int report(const Paths& p) {
  const auto rows = report_table(collect_summaries(p.workdir));
  const fs::path dir = p.out.empty() ? fs::path(p.workdir) : fs::path(p.out);
  write_text(dir / "report.csv", report_csv(rows));
  write_text(dir / "report.json", report_json(rows).dump(2) + "\n");
  std::cout << report_csv(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cover-tree accelerated inexact projected gradient: dictionary, tree, phantom, solve, sweep"};
  app.require_subcommand(1);
  Paths paths;
  auto add = [&](const char* name, const char* help, bool config, bool out) {
    CLI::App* sub = app.add_subcommand(name, help);
    if (config) sub->add_option("-c,--config", paths.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("-w,--workdir", paths.workdir, "artifact directory")->capture_default_str();
    if (out) sub->add_option("-o,--out", paths.out, "output directory");
    return sub;
  };
  auto* c_dict = add("gen-dict", "simulate fingerprints and write dictionary.bin", true, false);
  auto* c_tree = add("build-tree", "build the cover tree over dictionary.bin", false, false);
  auto* c_phantom = add("gen-phantom", "write the phantom spec snapped to the dictionary grid", true, false);
  auto* c_solve = add("solve", "sample the phantom and run one reconstruction", true, true);
  auto* c_sweep = add("sweep", "run the epsilon x method x ratio grid", true, true);
  auto* c_validate = add("validate-tree", "check cover tree invariants of tree.bin", false, false);
  auto* c_report = add("report", "aggregate summary.json files under --workdir", false, true);

  CLI11_PARSE(app, argc, argv);
  try {
    if (c_dict->parsed()) return gen_dict(paths);
    if (c_tree->parsed()) return build_tree(paths);
    if (c_phantom->parsed()) return gen_phantom(paths);
    if (c_solve->parsed()) return solve(paths);
    if (c_sweep->parsed()) return sweep(paths);
    if (c_validate->parsed()) return validate_tree(paths);
    if (c_report->parsed()) return report(paths);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
