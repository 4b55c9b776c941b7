#pragma once

// Command-line front end: gen-goals, run, eval, render. Lives in a header so
// tests can drive it in-process; tools/granular_main.cpp is a thin wrapper.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "granular/evaluation.hpp"
#include "granular/goals.hpp"
#include "granular/heightfield.hpp"

namespace granular::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Raised for bad flag values that CLI11 cannot catch on its own.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenGoalsOptions {
  std::vector<std::string> families{"rectangle", "l_shape", "polygon"};
  int per_family = 100;
  std::uint64_t seed = 0;
  std::string out_dir = "goals";
  int depth_min_mm = GoalGenOptions{}.depth.min_mm;
  int depth_max_mm = GoalGenOptions{}.depth.max_mm;
};

struct RunOptions {
  std::string policy = "bcpp";
  std::string goals = "goals";
  int episodes = 100;
  std::string obs = "priv";
  std::uint64_t seed = 0;
  std::string out = "results.csv";
  std::string log;  // optional per-step CSV
  unsigned threads = 1;
  double noise_std = 0.0;
  double repose_deg = 35.0;
};

struct EvalOptions {
  std::string a;
  std::string b;
  std::string metric = "height_diff_mm";
};

struct RenderOptions {
  std::string map;
  std::string out;
  std::string format = "pgm";
};

inline std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

/// Writes <out_dir>/<family>/<id>.ghm for seeds seed .. seed+per_family-1 of
/// each family, plus <out_dir>/manifest.csv.
inline void cmd_gen_goals(const GenGoalsOptions& opt, std::ostream& log) {
  if (opt.per_family < 1) throw UsageError("--per-family must be >= 1");
  std::vector<GoalFamily> families;
  for (const auto& name : opt.families) {
    const auto f = parse_family(name);
    if (!f) throw UsageError("unknown goal family '" + name + "' (expected rectangle, l_shape or polygon)");
    families.push_back(*f);
  }
  GoalGenOptions gen;
  gen.depth.min_mm = opt.depth_min_mm;
  gen.depth.max_mm = opt.depth_max_mm;
  if (gen.depth.min_mm < 1 || gen.depth.min_mm > gen.depth.max_mm || gen.depth.max_mm > 30)
    throw UsageError("depth range must satisfy 1 <= --depth-min-mm <= --depth-max-mm <= 30");
  const std::filesystem::path root(opt.out_dir);
  std::ostringstream manifest;
  manifest << "id,family,seed,path\n";
  for (GoalFamily f : families) {
    for (int i = 0; i < opt.per_family; ++i) {
      const std::uint64_t s = opt.seed + static_cast<std::uint64_t>(i);
      const GoalSpec goal = gen_goal(f, s, GridGeometry{}, gen);
      const std::filesystem::path rel = std::filesystem::path(std::string(to_string(f))) / (goal.id + ".ghm");
      save_goal(goal, root / rel);
      manifest << goal.id << ',' << to_string(f) << ',' << s << ',' << rel.generic_string() << '\n';
    }
  }
  auto out = open_output(root / "manifest.csv");
  out << manifest.str();
  log << "wrote " << families.size() * static_cast<std::size_t>(opt.per_family) << " goals to " << root.string()
      << '\n';
}

inline EnvConfig env_config(const RunOptions& opt) {
  EnvConfig cfg;
  cfg.observation_mode = parse_observation_mode(opt.obs);
  cfg.noise_std = opt.noise_std;
  cfg.repose.angle_repose = opt.repose_deg * std::numbers::pi / 180.0;
  return cfg;
}

inline void write_run_metadata(std::ostream& out, const RunOptions& opt, const EnvConfig& cfg) {
  out << "policy = " << opt.policy << '\n'
      << "obs = " << opt.obs << '\n'
      << "episodes = " << opt.episodes << '\n'
      << "seed = " << opt.seed << '\n'
      << "repose_deg = " << opt.repose_deg << '\n'
      << "transfer_gain = " << cfg.repose.transfer_gain << '\n'
      << "noise_std = " << opt.noise_std << '\n'
      << "changed_epsilon_m = " << kChangedEpsilon << '\n'
      << "contact_model = cut to tool bottom, even spread over the footprint ring, relax per substep\n";
}

inline std::vector<EpisodeResult> cmd_run(const RunOptions& opt, std::ostream& log) {
  BenchmarkConfig bench;
  try {
    bench.approach = parse_approach(opt.policy);
    bench.env = env_config(opt);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (opt.episodes < 1) throw UsageError("--episodes must be >= 1");
  bench.episodes = opt.episodes;
  bench.seed = opt.seed;
  bench.threads = opt.threads;
  const std::vector<GoalSpec> goals = load_goal_dir(opt.goals);
  const std::vector<EpisodeResult> results = run_benchmark(bench, goals);

  const bool recon = bench.env.observation_mode == ObservationMode::reconstructed;
  {
    auto out = open_output(opt.out);
    write_results_csv(out, results, recon);
  }
  {
    auto meta = open_output(opt.out + ".meta");
    write_run_metadata(meta, opt, bench.env);
  }
  if (!opt.log.empty()) {
    auto out = open_output(opt.log);
    write_episode_log_csv(out, results);
  }
  write_summary(log, to_string(bench.approach) + " (" + opt.obs + ")", summarize(results));
  return results;
}

/// Reads one numeric column of a results CSV.
inline std::vector<double> read_metric_column(const std::string& path, const std::string& metric) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto it = std::find(header.begin(), header.end(), metric);
  if (it == header.end()) throw std::runtime_error(path + ": schema error, missing column '" + metric + "'");
  const std::size_t col = static_cast<std::size_t>(it - header.begin());
  std::vector<double> values;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t k = 0;
    bool found = false;
    while (std::getline(ss, cell, ',')) {
      if (k++ == col) {
        found = true;
        break;
      }
    }
    if (!found) throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": too few columns");
    try {
      std::size_t used = 0;
      values.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
    }
  }
  if (values.empty()) throw std::runtime_error(path + ": no rows");
  return values;
}

inline MannWhitneyResult cmd_eval(const EvalOptions& opt, std::ostream& log) {
  const std::vector<double> a = read_metric_column(opt.a, opt.metric);
  const std::vector<double> b = read_metric_column(opt.b, opt.metric);
  const MetricSummary sa = summarize(a), sb = summarize(b);
  const MannWhitneyResult mw = mann_whitney_u(a, b);
  char buf[256];
  std::snprintf(buf, sizeof buf, "metric %s\n", opt.metric.c_str());
  log << buf;
  std::snprintf(buf, sizeof buf, "a: n=%zu mean=%.4f std=%.4f  (%s)\n", a.size(), sa.mean, sa.std, opt.a.c_str());
  log << buf;
  std::snprintf(buf, sizeof buf, "b: n=%zu mean=%.4f std=%.4f  (%s)\n", b.size(), sb.mean, sb.std, opt.b.c_str());
  log << buf;
  std::snprintf(buf, sizeof buf, "U=%.1f p=%.6g %s%s%s\n", mw.u, mw.p, mw.exact ? "(exact)" : "(normal approx.)",
                mw.degenerate ? " degenerate" : "", stars(mw.p).empty() ? "" : (" " + stars(mw.p)).c_str());
  log << buf;
  return mw;
}

inline void cmd_render(const RenderOptions& opt, std::ostream& log) {
  if (opt.format != "pgm") throw UsageError("unsupported format '" + opt.format + "' (only pgm)");
  const GhmDocument doc = load_ghm(opt.map);
  auto out = open_output(opt.out, std::ios::out | std::ios::binary);
  write_pgm(out, doc.map);
  log << "wrote " << opt.out << '\n';
}

/// Flat `key = value` files whose keys are the long flag names of the
/// subcommand being run.
class FlatConfig : public CLI::ConfigINI {
 public:
  explicit FlatConfig(std::string subcommand) : subcommand_(std::move(subcommand)) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> items = CLI::ConfigINI::from_config(input);
    for (auto& item : items)
      if (item.parents.empty() && !subcommand_.empty()) item.parents.push_back(subcommand_);
    return items;
  }

 private:
  std::string subcommand_;
};

/// Parses argv and dispatches. Exit codes: 0 success, 1 usage, 2 runtime.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Granular height-map shaping benchmark"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string subcommand;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "gen-goals" || a == "run" || a == "eval" || a == "render") {
      subcommand = a;
      break;
    }
  }
  app.config_formatter(std::make_shared<FlatConfig>(subcommand));
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "key = value file with the subcommand's flag names; flags override it");

  GenGoalsOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-goals", "Generate a deterministic goal set");
  gen_cmd->add_option("--families", gen.families, "Comma-separated goal families")
      ->delimiter(',')
      ->capture_default_str();
  gen_cmd->add_option("--per-family", gen.per_family, "Goals per family")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Base seed; goal i uses seed + i")->capture_default_str();
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->capture_default_str();
  gen_cmd->add_option("--depth-min-mm", gen.depth_min_mm, "Shallowest goal depth (mm)")->capture_default_str();
  gen_cmd->add_option("--depth-max-mm", gen.depth_max_mm, "Deepest goal depth (mm)")->capture_default_str();

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run a baseline over a goal directory");
  run_cmd->add_option("--policy", run.policy, "rand or bcpp")->capture_default_str();
  run_cmd->add_option("--goals", run.goals, "Goal directory (searched recursively for .ghm)")->capture_default_str();
  run_cmd->add_option("--episodes", run.episodes, "Number of episodes")->capture_default_str();
  run_cmd->add_option("--obs", run.obs, "priv or recon")->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "Base seed; episode i uses seed + i")->capture_default_str();
  run_cmd->add_option("--out", run.out, "Results CSV")->capture_default_str();
  run_cmd->add_option("--log", run.log, "Optional per-step episode log CSV");
  run_cmd->add_option("--threads", run.threads, "Worker threads")->capture_default_str();
  run_cmd->add_option("--noise-std", run.noise_std, "Depth noise std (m), recon mode")->capture_default_str();
  run_cmd->add_option("--repose-deg", run.repose_deg, "Angle of repose (degrees)")->capture_default_str();

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Mann-Whitney U test between two results files");
  eval_cmd->add_option("--a", ev.a, "First results CSV")->required();
  eval_cmd->add_option("--b", ev.b, "Second results CSV")->required();
  eval_cmd->add_option("--metric", ev.metric, "Column to compare")->capture_default_str();

  RenderOptions rd;
  auto* render_cmd = app.add_subcommand("render", "Render a GHM map as a 16-bit PGM");
  render_cmd->add_option("--map", rd.map, "GHM file")->required();
  render_cmd->add_option("--out", rd.out, "Output image")->required();
  render_cmd->add_option("--format", rd.format, "Image format")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) cmd_gen_goals(gen, out);
    if (*run_cmd) cmd_run(run, out);
    if (*eval_cmd) cmd_eval(ev, out);
    if (*render_cmd) cmd_render(rd, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace granular::cli
