#pragma once

// Training-free controllers: uniform random actions from a goal cell, and
// boustrophedon coverage of the goal mask.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "granular/env.hpp"
#include "granular/goals.hpp"

namespace granular {

/// Everything an evaluation needs from one episode.
struct EpisodeTrace {
  std::vector<StepInfo> steps;
  HeightMap final_map;
};

struct Waypoint {
  Vec3 position;
  int region = 0;
};

struct WaypointPlan {
  std::vector<Waypoint> waypoints;
  /// Index of the first waypoint of each visited region, in visit order.
  std::vector<std::size_t> region_starts;
  /// Region ids (flood-fill labels) in visit order.
  std::vector<int> region_order;
  int region_count = 0;
  int sweep_spacing_cells = 0;
};

struct RegionInfo {
  std::vector<std::pair<int, int>> cells;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
};

inline std::vector<RegionInfo> extract_regions(const GoalSpec& goal) {
  std::vector<int> labels;
  const int n = label_regions(goal.goal_mask, labels);
  std::vector<RegionInfo> regions(static_cast<std::size_t>(n));
  const HeightMap& g = goal.goal_map;
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) {
      const int l = labels[g.index(r, c)];
      if (l < 0) continue;
      auto& reg = regions[static_cast<std::size_t>(l)];
      reg.cells.push_back({r, c});
      reg.centroid_x += g.center_x(c);
      reg.centroid_y += g.center_y(r);
    }
  for (auto& reg : regions) {
    reg.centroid_x /= static_cast<double>(reg.cells.size());
    reg.centroid_y /= static_cast<double>(reg.cells.size());
  }
  return regions;
}

/// Greedy nearest-neighbour tour over region centroids, starting with the
/// region closest to (start_x, start_y). Ties go to the lower region id.
inline std::vector<int> greedy_region_order(const std::vector<RegionInfo>& regions, double start_x, double start_y) {
  std::vector<int> order;
  std::vector<bool> used(regions.size(), false);
  double x = start_x, y = start_y;
  for (std::size_t k = 0; k < regions.size(); ++k) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < regions.size(); ++i) {
      if (used[i]) continue;
      const double d = std::hypot(regions[i].centroid_x - x, regions[i].centroid_y - y);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    order.push_back(best);
    x = regions[static_cast<std::size_t>(best)].centroid_x;
    y = regions[static_cast<std::size_t>(best)].centroid_y;
  }
  return order;
}

/// Boustrophedon plan: flood-fill regions, greedy tour over centroids,
/// then per region serpentine sweep lines one footprint apart along the
/// longer bounding-box side, one waypoint per grid coordinate.
inline WaypointPlan plan_bcpp(const GoalSpec& goal, double footprint_width, double footprint_depth, Vec3 ee_start) {
  if (!goal.goal_mask.any()) throw std::invalid_argument("plan_bcpp: empty goal mask");
  const HeightMap& g = goal.goal_map;
  const double cs = g.cell_size();
  // A partially covered cell counts as covered.
  const int fp_cols = std::max(1, static_cast<int>(std::ceil(footprint_width / cs - 1e-9)));
  const int fp_rows = std::max(1, static_cast<int>(std::ceil(footprint_depth / cs - 1e-9)));

  const std::vector<RegionInfo> regions = extract_regions(goal);
  WaypointPlan plan;
  plan.region_count = static_cast<int>(regions.size());
  plan.region_order = greedy_region_order(regions, ee_start.x, ee_start.y);

  std::vector<int> labels;
  label_regions(goal.goal_mask, labels);

  for (const int id : plan.region_order) {
    const RegionInfo& reg = regions[static_cast<std::size_t>(id)];
    CellRange box{g.rows(), -1, g.cols(), -1};
    for (auto [r, c] : reg.cells) {
      box.r0 = std::min(box.r0, r);
      box.r1 = std::max(box.r1, r);
      box.c0 = std::min(box.c0, c);
      box.c1 = std::max(box.c1, c);
    }
    // along_x: sweep lines run along x (columns), stacked over rows.
    const bool along_x = (box.c1 - box.c0) >= (box.r1 - box.r0);
    const int cross_lo = along_x ? box.r0 : box.c0;
    const int cross_hi = along_x ? box.r1 : box.c1;
    const int band = along_x ? fp_rows : fp_cols;
    const int along_fp = along_x ? fp_cols : fp_rows;
    if (plan.sweep_spacing_cells == 0) plan.sweep_spacing_cells = band;

    auto in_region = [&](int r, int c) { return g.contains(r, c) && labels[g.index(r, c)] == id; };

    plan.region_starts.push_back(plan.waypoints.size());
    int line = 0;
    for (int s = cross_lo; s <= cross_hi; s += band) {
      // The last band is pulled back inside the bounding box when the
      // region height is not a multiple of the footprint.
      const int start = std::max(cross_lo, std::min(s, cross_hi - band + 1));
      int a_lo = std::numeric_limits<int>::max(), a_hi = std::numeric_limits<int>::min();
      for (int k = start; k < start + band; ++k)
        for (int a = (along_x ? box.c0 : box.r0); a <= (along_x ? box.c1 : box.r1); ++a)
          if (along_x ? in_region(k, a) : in_region(a, k)) {
            a_lo = std::min(a_lo, a);
            a_hi = std::max(a_hi, a);
          }
      if (a_lo > a_hi) continue;

      const double cross_pos = (start + 0.5 * band) * cs;
      // Tool centers keep the footprint inside [a_lo, a_hi] where possible.
      double min_center = (a_lo + 0.5 * along_fp) * cs;
      double max_center = (a_hi + 1 - 0.5 * along_fp) * cs;
      if (min_center > max_center) min_center = max_center = 0.5 * (a_lo + a_hi + 1) * cs;

      std::vector<int> coords;
      for (int a = a_lo; a <= a_hi; ++a) coords.push_back(a);
      if (line % 2 == 1) std::reverse(coords.begin(), coords.end());
      for (const int a : coords) {
        const double along_pos = std::clamp((a + 0.5) * cs, min_center, max_center);
        Waypoint w;
        w.region = id;
        w.position.x = along_x ? along_pos : cross_pos;
        w.position.y = along_x ? cross_pos : along_pos;
        EndEffectorState probe;
        probe.position = w.position;
        probe.footprint_width = footprint_width;
        probe.footprint_depth = footprint_depth;
        const CellRange fp = clip(footprint_cells(probe, cs), g.rows(), g.cols());
        double sum = 0.0;
        int n = 0;
        for (int r = fp.r0; r <= fp.r1; ++r)
          for (int c = fp.c0; c <= fp.c1; ++c)
            if (in_region(r, c)) {
              sum += g.at(r, c);
              ++n;
            }
        w.position.z = n > 0 ? sum / n : goal.h0;
        // Short lines clamp several cells onto the same center.
        if (plan.waypoints.size() > plan.region_starts.back() && plan.waypoints.back().position == w.position) continue;
        plan.waypoints.push_back(w);
      }
      ++line;
    }
  }
  return plan;
}

inline WaypointPlan plan_bcpp(const GoalSpec& goal, const EndEffectorState& ee) {
  return plan_bcpp(goal, ee.footprint_width, ee.footprint_depth, ee.position);
}

/// `x,y,z,region` rows, one per waypoint.
inline void write_plan_csv(std::ostream& out, const WaypointPlan& plan) {
  out << "index,x,y,z,region\n";
  char buf[128];
  for (std::size_t i = 0; i < plan.waypoints.size(); ++i) {
    const auto& w = plan.waypoints[i];
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%d\n", i, w.position.x, w.position.y, w.position.z, w.region);
    out << buf;
  }
}

namespace detail {

/// Moves the tool to `target` in as many steps as the per-axis limit
/// requires, recording every step.
inline void move_to(Environment& env, Vec3 target, EpisodeTrace& trace) {
  const double max_step = env.config().workspace.max_step;
  const Vec3 d = target - env.world().ee().position;
  const double span = std::max({std::abs(d.x), std::abs(d.y), std::abs(d.z)});
  if (span < 1e-12) return;
  const int n = std::max(1, static_cast<int>(std::ceil(span / max_step - 1e-9)));
  for (int i = 0; i < n; ++i) {
    const Vec3 now = env.world().ee().position;
    const Vec3 rest = target - now;
    const int left = n - i;
    const std::array<double, 3> a{rest.x / left / max_step, rest.y / left / max_step, rest.z / left / max_step};
    trace.steps.push_back(env.step(a).info);
  }
}

}  // namespace detail

/// Follows the plan from the current tool pose. Transit between regions
/// (and the initial approach) happens at h0 + lift. The episode cap is
/// ignored; the plan length defines the episode.
inline EpisodeTrace execute_plan(Environment& env, const WaypointPlan& plan, double lift = 0.02) {
  EpisodeTrace trace;
  const double transit_z = env.config().h0 + lift;
  int current_region = -1;
  for (const Waypoint& w : plan.waypoints) {
    if (w.region != current_region) {
      if (current_region >= 0) {
        Vec3 up = env.world().ee().position;
        up.z = transit_z;
        detail::move_to(env, up, trace);
      }
      detail::move_to(env, {w.position.x, w.position.y, transit_z}, trace);
      current_region = w.region;
    }
    detail::move_to(env, w.position, trace);
  }
  trace.final_map = env.world().map();
  return trace;
}

/// Starts on a uniformly drawn goal cell center at bed height, then takes
/// episode_steps uniform actions in [-1, 1]^3. Randomness comes from the
/// environment's episode RNG.
inline EpisodeTrace rand_policy(Environment& env) {
  const GoalSpec& goal = env.goal();
  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < goal.goal_mask.rows; ++r)
    for (int c = 0; c < goal.goal_mask.cols; ++c)
      if (goal.goal_mask.at(r, c)) cells.push_back({r, c});
  if (cells.empty()) throw std::invalid_argument("rand_policy: empty goal mask");
  Rng& rng = env.rng();
  const auto [r, c] = cells[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))];
  env.teleport({goal.goal_map.center_x(c), goal.goal_map.center_y(r), goal.h0});

  EpisodeTrace trace;
  for (int t = 0; t < env.config().episode_steps; ++t) {
    const std::array<double, 3> a{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const StepResult res = env.step(a);
    trace.steps.push_back(res.info);
    if (res.done) break;
  }
  trace.final_map = env.world().map();
  return trace;
}

}  // namespace granular
