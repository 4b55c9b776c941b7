#pragma once

// Multi-case checks behind the acceptance criteria. Unit tests run them at
// reduced size, the acceptance binary at full size.

#include <cstdio>
#include <string>

#include "granular/env.hpp"
#include "granular/evaluation.hpp"
#include "granular/goals.hpp"
#include "granular/perception.hpp"
#include "granular/rewards.hpp"
#include "support.hpp"

namespace granular::testing {

inline std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

/// Conservation (relative 1e-9, no clamping), stability, idempotence and
/// 90-degree rotation symmetry of relax on `maps` random maps.
inline CheckResult check_sand_properties(int maps, std::uint64_t seed, double* worst_rotation = nullptr) {
  CheckResult out;
  Rng rng(seed);
  const ReposeConfig cfg;
  double rot = 0.0;
  for (int i = 0; i < maps; ++i) {
    const int rows = static_cast<int>(rng.uniform_int(2, 32));
    const int cols = static_cast<int>(rng.uniform_int(2, 32));
    const HeightMap m = random_map(rng, rows, cols);
    RelaxStats s;
    const HeightMap a = relax(m, cfg, &s);
    const std::string tag = "map " + std::to_string(i) + ": ";
    if (s.spilled != 0.0 || a.min() <= kMinHeight || a.max() >= kMaxHeight) out.fail(tag + "clamping occurred");
    const double v0 = volume_oracle(m), v1 = volume_oracle(a);
    if (std::abs(v1 - v0) > 1e-9 * v0) out.fail(tag + fmt("volume drift %.3e relative", std::abs(v1 - v0) / v0));
    const double excess = slope_excess_oracle(a, cfg.angle_repose);
    if (excess > cfg.tolerance) out.fail(tag + fmt("slope excess %.3e after relax", excess));
    const double idem = max_abs_diff(relax(a, cfg), a);
    if (idem > cfg.tolerance) out.fail(tag + fmt("second relax moved a cell by %.3e", idem));
    const double r = max_abs_diff(relax(rotate90(m), cfg), rotate90(a));
    rot = std::max(rot, r);
    if (r > 1e-9) out.fail(tag + fmt("rotation asymmetry %.3e", r));
  }
  if (worst_rotation) *worst_rotation = rot;
  return out;
}

inline GoalSpec manual_goal(const HeightMap& goal_map, const CellMask& mask, double h0 = 0.06) {
  GoalSpec g;
  g.goal_map = goal_map;
  g.goal_mask = mask;
  g.h0 = h0;
  g.id = "manual";
  return g;
}

/// Distance hand cases, delta telescoping and the progressive bound over
/// `trajectories` random episodes, and the movement reward range under
/// position fuzzing.
inline CheckResult check_reward_oracles(int trajectories, std::uint64_t seed) {
  CheckResult out;
  const RewardConfig rc;

  // Distance hand cases.
  {
    HeightMap g(2, 2, 0.01, 0.06);
    g.at(0, 0) = 0.05;
    const GoalSpec goal = manual_goal(g, CellMask(2, 2, true));
    const double d = d_hat(HeightMap::flat(2, 2, 0.01, 0.06), goal, Region::goal_area);
    if (std::abs(d - 0.0025) > 1e-15) out.fail(fmt("d_hat 2x2 case gave %.6g, want 0.0025", d));
    if (d_hat(g, goal, Region::goal_area) != 0.0) out.fail("d_hat of the goal itself is not 0");
    HeightMap piled = g;
    piled.at(0, 1) = 0.08;
    if (d_hat(piled, goal, Region::goal_area) != 0.0) out.fail("material above h0 changed d_hat");
  }
  {
    HeightMap g = HeightMap::flat(32, 32, 0.01, 0.06);
    CellMask mask(32, 32);
    for (int r = 5; r < 12; ++r)
      for (int c = 8; c < 13; ++c) {
        g.at(r, c) = 0.05;
        mask.set(r, c, true);
      }
    const double d = d_hat(HeightMap::flat(32, 32, 0.01, 0.06), manual_goal(g, mask), Region::goal_area);
    if (std::abs(d - 0.01) > 1e-15) out.fail(fmt("flat bed vs 1 cm rectangle gave %.6g, want 0.01", d));
  }
  {
    EpisodeRewardState s = EpisodeRewardState::start(0.0025, 0.0);
    const double r1 = reward_delta(s, 0.0020, rc);
    const double r2 = reward_delta(s, 0.0025, rc);
    if (std::abs(r1 - 2.5) > 1e-9 || std::abs(r2 + 2.5) > 1e-9) out.fail(fmt("delta hand case %.6g / %.6g", r1, r2));
    EpisodeRewardState p = EpisodeRewardState::start(0.0025, 0.0);
    const ProgressiveTerms t = progressive_terms(p, 0.0020, 0.0, rc);
    if (std::abs(t.progress - 2.5) > 1e-9 || p.d_hat_closest != 0.0020)
      out.fail(fmt("progressive hand case %.6g", t.progress));
    EpisodeRewardState q = EpisodeRewardState::start(0.003, 0.0);
    double positive = 0.0;
    for (int k = 0; k < 20; ++k) positive += progressive_terms(q, k % 2 ? 0.003 : 0.002, 0.0, rc).progress;
    if (std::abs(positive - rc.alpha_c * 0.001) > 1e-9) out.fail(fmt("oscillation paid %.6g", positive));
  }

  // Telescoping and the progressive bound on simulated trajectories.
  Rng rng(seed);
  EnvConfig cfg;
  const GoalFamily families[] = {GoalFamily::rectangle, GoalFamily::l_shape, GoalFamily::polygon};
  for (int k = 0; k < trajectories; ++k) {
    const GoalSpec goal = gen_goal(families[k % 3], seed + static_cast<std::uint64_t>(k));
    Environment env(cfg);
    env.reset(goal, seed + static_cast<std::uint64_t>(k));
    // Start low over the goal so the tool actually digs.
    const CellRange b = mask_bounds(goal.goal_mask);
    env.teleport({goal.goal_map.center_x((b.c0 + b.c1) / 2), goal.goal_map.center_y((b.r0 + b.r1) / 2), 0.061});
    const double d0 = env.reward_state().d_hat_prev;
    double sum = 0.0, d_last = d0, positive = 0.0;
    EpisodeRewardState prog = EpisodeRewardState::start(d0, env.reward_state().d_hat_out_furthest);
    for (int t = 0; t < cfg.episode_steps; ++t) {
      const std::array<double, 3> a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.6, 0.4)};
      const StepResult res = env.step(a);
      sum += res.info.r_shaping;
      d_last = res.info.d_hat;
      positive += progressive_terms(prog, res.info.d_hat, res.info.d_hat_out, rc).progress;
      const double rm = res.info.r_move;
      if (!(rm > -1.0 && rm <= 1.0)) out.fail(fmt("r_m = %.17g out of (-1, 1]", rm));
    }
    const double want = rc.alpha_c * (d0 - d_last);
    if (std::abs(sum - want) > 1e-9)
      out.fail("trajectory " + std::to_string(k) + fmt(": delta sum %.12g vs %.12g", sum, want));
    if (positive > rc.alpha_c * d0 + 1e-9)
      out.fail("trajectory " + std::to_string(k) + fmt(": progressive positive sum %.6g > %.6g", positive, rc.alpha_c * d0));
  }

  // Movement reward.
  {
    HeightMap g = HeightMap::flat(32, 32, 0.01, 0.06);
    CellMask mask(32, 32);
    g.at(10, 10) = 0.05;
    mask.set(10, 10, true);
    const GoalSpec goal = manual_goal(g, mask);
    EndEffectorState ee;
    // 6 cm and 8 cm away horizontally at goal height: d_m = 0.1, footprint clear.
    ee.position = {0.165, 0.185, 0.05};
    const MoveReward m = reward_move(ee, goal, rc);
    if (std::abs(m.distance - 0.1) > 1e-12 || std::abs(m.reward + std::tanh(1.0)) > 1e-12)
      out.fail(fmt("d_m = 0.1 case gave %.6g", m.reward));
    ee.position = {0.105, 0.105, 0.05};
    if (reward_move(ee, goal, rc).reward != 1.0) out.fail("tool over the goal does not score 1");
    const WorkspaceConfig ws;
    for (int i = 0; i < 20000; ++i) {
      ee.position = {rng.uniform(0, ws.extent_x), rng.uniform(0, ws.extent_y), rng.uniform(ws.z_min, ws.z_max)};
      const double r = reward_move(ee, goal, rc).reward;
      if (!(r > -1.0 && r <= 1.0)) out.fail(fmt("r_m = %.17g out of (-1, 1]", r));
    }
  }
  return out;
}

struct PerceptionStats {
  double worst_cell = 0.0;
  double worst_mean = 0.0;
  int occluded_checked = 0;
};

/// reconstruct(render(m)) against m on `maps` relaxed tool-free maps, plus
/// hold-last on tool-covered cells for each map.
inline CheckResult check_perception(int maps, std::uint64_t seed, PerceptionStats* stats = nullptr) {
  CheckResult out;
  PerceptionStats st;
  Rng rng(seed);
  const Camera cam = default_camera();
  const ReposeConfig cfg;
  for (int i = 0; i < maps; ++i) {
    const HeightMap m = relax(random_map(rng, 32, 32), cfg);
    ReconstructionState state = ReconstructionState::flat({}, 0.06);
    const HeightMap got = reconstruct(render_depth(m, nullptr, cam), state, CellMask(32, 32));
    double mean = 0.0, worst = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double e = std::abs(got[k] - m[k]);
      mean += e;
      worst = std::max(worst, e);
    }
    mean /= static_cast<double>(m.size());
    st.worst_cell = std::max(st.worst_cell, worst);
    st.worst_mean = std::max(st.worst_mean, mean);
    const std::string tag = "map " + std::to_string(i) + ": ";
    if (worst > 2e-3) out.fail(tag + fmt("per-cell error %.3f mm", worst * 1e3));
    if (mean > 0.5e-3) out.fail(tag + fmt("mean error %.3f mm", mean * 1e3));

    // Tool hovering over the map: its cells must keep the held values.
    EndEffectorState ee;
    ee.position = {rng.uniform(0.02, 0.30), rng.uniform(0.02, 0.30), 0.0};
    const CellMask covered = ee_mask(ee, 32, 32, 0.01);
    double top = 0.0;
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c)
        if (covered.at(r, c)) top = std::max(top, m.at(r, c));
    ee.position.z = top + rng.uniform(0.001, 0.03);
    const HeightMap held = got;
    const HeightMap next = reconstruct(render_depth(m, &ee, cam), state, covered, &ee);
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c)
        if (covered.at(r, c)) {
          ++st.occluded_checked;
          if (next.at(r, c) != held.at(r, c)) out.fail(tag + "occluded cell changed");
        }
  }
  if (stats) *stats = st;
  return out;
}

inline CheckResult check_mann_whitney_exact() {
  CheckResult out;
  const MannWhitneyResult r = mann_whitney_u({1, 2, 3}, {4, 5, 6});
  if (r.u != 0.0) out.fail(fmt("U = %g, want 0", r.u));
  if (!r.exact) out.fail("small samples did not use the exact test");
  if (r.p != 0.1) out.fail(fmt("p = %.17g, want 0.1", r.p));
  const MannWhitneyResult self = mann_whitney_u({1, 2, 3}, {1, 2, 3});
  if (self.p != 1.0) out.fail(fmt("self-comparison p = %.17g, want 1", self.p));
  return out;
}

}  // namespace granular::testing
