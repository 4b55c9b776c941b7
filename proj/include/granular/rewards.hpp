#pragma once

// Shaping and movement rewards plus the per-episode distance bookkeeping
// they need. All distances are in meters.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "granular/goals.hpp"
#include "granular/heightfield.hpp"
#include "granular/world.hpp"

namespace granular {

enum class Region { goal_area, outside, all };
enum class ShapingVariant { delta, progressive, none };

/// How the outside-area term of the progressive reward is signed.
/// `as_printed`: -alpha_f * min(d_out - d_out_furthest, 0).
/// `prose`:      -alpha_f * max(d_out - d_out_furthest_prev, 0), i.e. a
///               penalty only for exceeding the furthest distance so far.
enum class ProgPenaltySign { as_printed, prose };

struct RewardConfig {
  double alpha_c = 5000.0;
  double alpha_f = 1000.0;
  double alpha_m = 10.0;
  ShapingVariant shaping = ShapingVariant::delta;
  /// false gives the ablation without the goal-area movement term.
  bool include_movement = true;
  ProgPenaltySign prog_penalty_sign = ProgPenaltySign::as_printed;

  void validate() const {
    if (!(alpha_c > 0.0 && alpha_f > 0.0 && alpha_m > 0.0))
      throw std::invalid_argument("RewardConfig: all alpha scales must be > 0");
  }
};

/// Mean absolute difference between goal heights and current heights
/// truncated at h0, over the selected cells. Material piled above h0 is
/// ignored.
inline double d_hat(const HeightMap& current, const GoalSpec& goal, Region region) {
  if (current.rows() != goal.goal_map.rows() || current.cols() != goal.goal_map.cols())
    throw std::invalid_argument("d_hat: current and goal grids differ");
  double sum = 0.0;
  std::size_t n = 0;
  const auto& g = goal.goal_map.data();
  const auto& h = current.data();
  const auto& m = goal.goal_mask.cells;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const bool in_goal = m[i] != 0;
    if ((region == Region::goal_area && !in_goal) || (region == Region::outside && in_goal)) continue;
    sum += std::abs(g[i] - std::min(goal.h0, h[i]));
    ++n;
  }
  if (n == 0) throw std::invalid_argument("d_hat: empty region");
  return sum / static_cast<double>(n);
}

/// Outside-area distance, 0 when the goal covers the whole grid.
inline double d_hat_outside_or_zero(const HeightMap& current, const GoalSpec& goal) {
  if (goal.goal_mask.count() == goal.goal_mask.cells.size()) return 0.0;
  return d_hat(current, goal, Region::outside);
}

struct EpisodeRewardState {
  double d_hat_prev = 0.0;
  double d_hat_closest = 0.0;
  double d_hat_out_furthest = 0.0;

  static EpisodeRewardState start(double d_hat_initial, double d_hat_out_initial) {
    return {d_hat_initial, d_hat_initial, d_hat_out_initial};
  }
};

/// alpha_c * (d_prev - d_now); advances d_hat_prev.
inline double reward_delta(EpisodeRewardState& state, double d_hat_now, const RewardConfig& cfg = {}) {
  const double r = cfg.alpha_c * (state.d_hat_prev - d_hat_now);
  state.d_hat_prev = d_hat_now;
  return r;
}

struct ProgressiveTerms {
  double progress = 0.0;  // alpha_c * max(closest - d, 0), never negative
  double outside = 0.0;   // signed outside-area term
  double total() const { return progress + outside; }
};

inline ProgressiveTerms progressive_terms(EpisodeRewardState& state, double d_hat_now, double d_hat_out_now,
                                          const RewardConfig& cfg = {}) {
  ProgressiveTerms t;
  t.progress = cfg.alpha_c * std::max(state.d_hat_closest - d_hat_now, 0.0);
  if (cfg.prog_penalty_sign == ProgPenaltySign::as_printed)
    t.outside = -cfg.alpha_f * std::min(d_hat_out_now - state.d_hat_out_furthest, 0.0);
  else
    t.outside = -cfg.alpha_f * std::max(d_hat_out_now - state.d_hat_out_furthest, 0.0);
  state.d_hat_closest = std::min(state.d_hat_closest, d_hat_now);
  state.d_hat_out_furthest = std::max(state.d_hat_out_furthest, d_hat_out_now);
  state.d_hat_prev = d_hat_now;
  return t;
}

inline double reward_progressive(EpisodeRewardState& state, double d_hat_now, double d_hat_out_now,
                                 const RewardConfig& cfg = {}) {
  return progressive_terms(state, d_hat_now, d_hat_out_now, cfg).total();
}

struct MoveReward {
  double distance = 0.0;  // d_m
  bool reached = false;
  double reward = 0.0;
};

/// -tanh(alpha_m * d_m) + 1[reached]. d_m runs from the tool's bottom-center
/// to the nearest goal-area point (cell center at goal height); reaching
/// means the footprint overlaps the goal mask at any height.
inline MoveReward reward_move(const EndEffectorState& ee, const GoalSpec& goal, const RewardConfig& cfg = {}) {
  const CellMask& mask = goal.goal_mask;
  if (!mask.any()) throw std::invalid_argument("reward_move: empty goal mask");
  const HeightMap& g = goal.goal_map;
  MoveReward out;

  const CellRange fp = clip(footprint_cells(ee, g.cell_size()), g.rows(), g.cols());
  if (!fp.empty()) {
    for (int r = fp.r0; r <= fp.r1 && !out.reached; ++r)
      for (int c = fp.c0; c <= fp.c1; ++c)
        if (mask.at(r, c)) {
          out.reached = true;
          break;
        }
  }
  if (out.reached) {
    out.distance = 0.0;
  } else {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) {
        if (!mask.at(r, c)) continue;
        const Vec3 p{g.center_x(c), g.center_y(r), g.at(r, c)};
        best = std::min(best, (ee.position - p).norm());
      }
    out.distance = best;
  }
  out.reward = -std::tanh(cfg.alpha_m * out.distance) + (out.reached ? 1.0 : 0.0);
  return out;
}

/// r = r_m + r_s, honoring the configured term selection.
inline double reward_total(double move_reward, double shaping_reward, const RewardConfig& cfg = {}) {
  const double m = cfg.include_movement ? move_reward : 0.0;
  const double s = cfg.shaping == ShapingVariant::none ? 0.0 : shaping_reward;
  return m + s;
}

}  // namespace granular
