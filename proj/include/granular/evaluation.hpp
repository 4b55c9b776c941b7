#pragma once

// Episode metrics, the Mann-Whitney U test and the batch benchmark runner.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "granular/baselines.hpp"
#include "granular/env.hpp"
#include "granular/goals.hpp"
#include "granular/rewards.hpp"

namespace granular {

/// A goal cell counts as changed once it moved more than this from h0.
inline constexpr double kChangedEpsilon = 0.0005;

inline double metric_height_diff(const HeightMap& final_map, const GoalSpec& goal) {
  return d_hat(final_map, goal, Region::goal_area);
}

inline double metric_changed(const HeightMap& final_map, const GoalSpec& goal, double eps = kChangedEpsilon) {
  const CellMask& m = goal.goal_mask;
  if (final_map.rows() != m.rows || final_map.cols() != m.cols)
    throw std::invalid_argument("metric_changed: map and mask grids differ");
  const std::size_t total = m.count();
  if (total == 0) throw std::invalid_argument("metric_changed: empty goal mask");
  std::size_t changed = 0;
  for (std::size_t i = 0; i < m.cells.size(); ++i)
    if (m.cells[i] && std::abs(final_map[i] - goal.h0) > eps) ++changed;
  return 100.0 * static_cast<double>(changed) / static_cast<double>(total);
}

/// Steps before the earliest run of three consecutive out-of-medium steps
/// that follows the tool's first contact. A tool that never touches the
/// medium executes 0 steps; one that never leaves for three steps executes
/// the whole episode. Steps are 1-based in the log, so a window starting
/// right after step k yields k.
inline int metric_execution(const std::vector<bool>& in_medium) {
  const int n = static_cast<int>(in_medium.size());
  int first_in = -1;
  for (int i = 0; i < n; ++i)
    if (in_medium[static_cast<std::size_t>(i)]) {
      first_in = i;
      break;
    }
  if (first_in < 0) return 0;
  int run = 0;
  for (int i = first_in + 1; i < n; ++i) {
    run = in_medium[static_cast<std::size_t>(i)] ? 0 : run + 1;
    if (run == 3) return i - 2;
  }
  return n;
}

inline int metric_execution(const std::vector<StepInfo>& steps) {
  std::vector<bool> flags;
  flags.reserve(steps.size());
  for (const auto& s : steps) flags.push_back(s.in_medium);
  return metric_execution(flags);
}

struct MannWhitneyResult {
  double u = 0.0;  // U statistic of the first sample
  double p = 1.0;  // two-sided
  bool exact = false;
  bool degenerate = false;
};

namespace detail {

inline std::vector<double> midranks(const std::vector<double>& pooled) {
  std::vector<std::size_t> idx(pooled.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && pooled[idx[j + 1]] == pooled[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Two-sided Mann-Whitney U test. Exact enumeration over rank assignments
/// when both samples have at most 8 values, otherwise the normal
/// approximation with tie and continuity correction.
inline MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mann_whitney_u: both samples must be non-empty");
  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  for (double v : pooled)
    if (!std::isfinite(v)) throw std::invalid_argument("mann_whitney_u: non-finite value");

  MannWhitneyResult res;
  const std::vector<double> ranks = detail::midranks(pooled);
  const double base = 0.5 * static_cast<double>(n1 * (n1 + 1));
  double ra = 0.0;
  for (std::size_t i = 0; i < n1; ++i) ra += ranks[i];
  res.u = ra - base;
  const double mean = 0.5 * static_cast<double>(n1 * n2);

  if (std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled[0]; })) {
    res.p = 1.0;
    res.degenerate = true;
    return res;
  }

  if (n1 <= 8 && n2 <= 8) {
    res.exact = true;
    const double obs = std::abs(res.u - mean) - 1e-9;
    std::uint64_t hits = 0, total = 0;
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(n1), true);
    // prev_permutation walks every n1-subset exactly once.
    do {
      double r = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (pick[i]) r += ranks[i];
      ++total;
      if (std::abs(r - base - mean) >= obs) ++hits;
    } while (std::prev_permutation(pick.begin(), pick.end()));
    res.p = static_cast<double>(hits) / static_cast<double>(total);
    return res;
  }

  std::vector<double> sorted(pooled);
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double dn = static_cast<double>(n);
  const double var = static_cast<double>(n1 * n2) / 12.0 * ((dn + 1.0) - ties / (dn * (dn - 1.0)));
  const double num = std::max(std::abs(res.u - mean) - 0.5, 0.0);
  const double z = num / std::sqrt(var);
  res.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

inline std::string stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  return "";
}

enum class Approach { rand, bcpp };

inline std::string to_string(Approach a) { return a == Approach::rand ? "rand" : "bcpp"; }

inline Approach parse_approach(const std::string& s) {
  if (s == "rand") return Approach::rand;
  if (s == "bcpp") return Approach::bcpp;
  throw std::invalid_argument("unknown policy '" + s + "' (expected rand or bcpp)");
}

inline std::string to_string(ObservationMode m) { return m == ObservationMode::privileged ? "priv" : "recon"; }

inline ObservationMode parse_observation_mode(const std::string& s) {
  if (s == "priv") return ObservationMode::privileged;
  if (s == "recon") return ObservationMode::reconstructed;
  throw std::invalid_argument("unknown observation mode '" + s + "' (expected priv or recon)");
}

struct EpisodeResult {
  int episode = 0;
  std::string goal_id;
  Approach approach = Approach::rand;
  double height_diff = 0.0;  // m
  double changed_pct = 0.0;
  int execution_steps = 0;
  std::uint64_t seed = 0;
  /// Episode mean of the per-step reconstruction error (m); NaN in
  /// privileged mode.
  double recon_error = std::numeric_limits<double>::quiet_NaN();
  EpisodeTrace trace;
};

/// Metrics come from the simulator's own map, whatever the policy observed.
inline EpisodeResult run_episode(Approach approach, const GoalSpec& goal, std::uint64_t seed, EnvConfig cfg) {
  cfg.enforce_episode_cap = approach == Approach::rand;
  Environment env(cfg);
  env.reset(goal, seed);
  EpisodeResult res;
  res.goal_id = goal.id;
  res.approach = approach;
  res.seed = seed;
  if (approach == Approach::rand) {
    res.trace = rand_policy(env);
  } else {
    const WaypointPlan plan = plan_bcpp(goal, env.world().ee());
    res.trace = execute_plan(env, plan);
  }
  res.height_diff = metric_height_diff(res.trace.final_map, goal);
  res.changed_pct = metric_changed(res.trace.final_map, goal);
  res.execution_steps = metric_execution(res.trace.steps);
  if (cfg.observation_mode == ObservationMode::reconstructed && !res.trace.steps.empty()) {
    double sum = 0.0;
    for (const auto& s : res.trace.steps) sum += s.recon_error;
    res.recon_error = sum / static_cast<double>(res.trace.steps.size());
  }
  return res;
}

struct BenchmarkConfig {
  Approach approach = Approach::bcpp;
  int episodes = 100;
  std::uint64_t seed = 0;
  EnvConfig env;
  unsigned threads = 1;
};

/// Goals are drawn from a seeded permutation of the set, so up to
/// goals.size() episodes never repeat a goal. Episode i uses seed + i.
inline std::vector<EpisodeResult> run_benchmark(const BenchmarkConfig& cfg, const std::vector<GoalSpec>& goals) {
  if (goals.empty()) throw std::invalid_argument("run_benchmark: no goals");
  if (cfg.episodes < 1) throw std::invalid_argument("run_benchmark: episodes must be >= 1");
  cfg.env.validate();
  std::vector<std::size_t> order(goals.size());
  std::iota(order.begin(), order.end(), 0);
  Rng pick(mix_seed(cfg.seed, 0x60a15));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

  std::vector<EpisodeResult> results(static_cast<std::size_t>(cfg.episodes));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < cfg.episodes; i = next++) {
      const GoalSpec& goal = goals[order[static_cast<std::size_t>(i) % order.size()]];
      results[static_cast<std::size_t>(i)] =
          run_episode(cfg.approach, goal, cfg.seed + static_cast<std::uint64_t>(i), cfg.env);
      results[static_cast<std::size_t>(i)].episode = i;
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.episodes)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

inline void write_results_csv(std::ostream& out, const std::vector<EpisodeResult>& results, bool with_recon) {
  out << "episode,goal_id,approach,height_diff_mm,changed_pct,execution_steps,seed";
  if (with_recon) out << ",recon_error_mm";
  out << '\n';
  char buf[256];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%d,%s,%s,%.6f,%.4f,%d,%llu", r.episode, r.goal_id.c_str(),
                  to_string(r.approach).c_str(), r.height_diff * 1000.0, r.changed_pct, r.execution_steps,
                  static_cast<unsigned long long>(r.seed));
    out << buf;
    if (with_recon) {
      std::snprintf(buf, sizeof buf, ",%.6f", r.recon_error * 1000.0);
      out << buf;
    }
    out << '\n';
  }
}

/// Per-step log, enough to recompute every metric offline.
inline void write_episode_log_csv(std::ostream& out, const std::vector<EpisodeResult>& results) {
  out << "episode,step,ax,ay,az,reward,r_move,r_shaping,d_hat,d_hat_out,x,y,z,in_medium\n";
  char buf[512];
  for (const auto& r : results)
    for (const auto& s : r.trace.steps) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.6f,%.9g,%.9g,%.9g,%.9g,%.9g,%.6f,%.6f,%.6f,%d\n", r.episode,
                    s.step, s.action[0], s.action[1], s.action[2], s.reward, s.r_move, s.r_shaping, s.d_hat,
                    s.d_hat_out, s.ee_position.x, s.ee_position.y, s.ee_position.z, s.in_medium ? 1 : 0);
      out << buf;
    }
}

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MetricSummary summarize(const std::vector<double>& v) {
  MetricSummary s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct BenchmarkSummary {
  MetricSummary height_diff_mm;
  MetricSummary changed_pct;
  MetricSummary execution_steps;
  std::size_t episodes = 0;
};

inline BenchmarkSummary summarize(const std::vector<EpisodeResult>& results) {
  std::vector<double> h, c, e;
  for (const auto& r : results) {
    h.push_back(r.height_diff * 1000.0);
    c.push_back(r.changed_pct);
    e.push_back(r.execution_steps);
  }
  return {summarize(h), summarize(c), summarize(e), results.size()};
}

inline void write_summary(std::ostream& out, const std::string& label, const BenchmarkSummary& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %12s\n", "", label.c_str());
  out << buf;
  std::snprintf(buf, sizeof buf, "%-20s %6s %5s\n", "Metric", "mean", "std");
  out << buf;
  auto row = [&](const char* name, const MetricSummary& m) {
    std::snprintf(buf, sizeof buf, "%-20s %6.1f %5.1f\n", name, m.mean, m.std);
    out << buf;
  };
  row("Height Diff. [mm]", s.height_diff_mm);
  row("Changed [%]", s.changed_pct);
  row("Execution [steps]", s.execution_steps);
  std::snprintf(buf, sizeof buf, "(%zu episodes)\n", s.episodes);
  out << buf;
}

}  // namespace granular
