#pragma once

// Gym-style episode loop: reset / step over a World, with rewards and the
// policy observation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "granular/goals.hpp"
#include "granular/heightfield.hpp"
#include "granular/perception.hpp"
#include "granular/rewards.hpp"
#include "granular/rng.hpp"
#include "granular/world.hpp"

namespace granular {

/// Side length of the square observation maps; smaller grids are zero-padded.
inline constexpr int kObservationGrid = 32;

enum class ObservationMode { privileged, reconstructed };

struct EnvConfig {
  int episode_steps = 40;
  double h0 = 0.06;
  GridGeometry grid;
  /// Start cuboid (x, y, z extents) centered over the workspace, with its
  /// bottom `start_clearance` above the bed.
  Vec3 start_box{0.30, 0.30, 0.05};
  double start_clearance = 0.02;
  ObservationMode observation_mode = ObservationMode::privileged;
  RewardConfig reward;
  ReposeConfig repose;
  WorkspaceConfig workspace;
  double footprint_width = 0.02;
  double footprint_depth = 0.02;
  double tool_length = 0.15;
  double noise_std = 0.0;
  std::optional<Camera> camera;  // default_camera(grid, h0) when unset
  /// Baseline execution disables the N_ep cap.
  bool enforce_episode_cap = true;

  void validate() const {
    if (episode_steps < 1) throw std::invalid_argument("EnvConfig: episode_steps must be >= 1");
    if (grid.rows > kObservationGrid || grid.cols > kObservationGrid)
      throw std::invalid_argument("EnvConfig: grid larger than the 32 x 32 observation");
    const double cx = 0.5 * workspace.extent_x, cy = 0.5 * workspace.extent_y;
    const double z0 = h0 + start_clearance;
    if (cx - start_box.x / 2 < 0.0 || cy - start_box.y / 2 < 0.0 || z0 < workspace.z_min ||
        z0 + start_box.z > workspace.z_max)
      throw std::invalid_argument("EnvConfig: start box outside the workspace");
    reward.validate();
    repose.validate();
    workspace.validate();
  }
};

struct Observation {
  std::array<double, 3> ee_current{};
  std::array<double, 3> ee_previous{};
  /// (H_g - H_c) / 0.20 clamped to [-1, 1], kObservationGrid^2 row-major.
  std::vector<double> diff_map;
  std::vector<std::uint8_t> ee_mask;
  std::vector<std::uint8_t> goal_mask;
};

/// Shapes and bounds of the observation and action spaces.
struct SpaceSpec {
  int grid = kObservationGrid;
  int position_dims = 3;
  int action_dims = 3;
  double low = -1.0;
  double high = 1.0;
  /// 64 encoded map features + 6 tool scalars.
  int encoded_dims = 70;
};

inline SpaceSpec spaces() { return {}; }

struct StepInfo {
  int step = 0;
  double r_move = 0.0;
  double r_shaping = 0.0;
  double reward = 0.0;
  double d_hat = 0.0;
  double d_hat_out = 0.0;
  double d_move = 0.0;
  bool reached = false;
  double displaced_volume = 0.0;
  double spilled = 0.0;
  bool in_medium = false;
  Vec3 ee_position;
  std::array<double, 3> action{};
  /// Mean |H_R - H_P| over the grid in reconstructed mode, NaN otherwise.
  double recon_error = std::numeric_limits<double>::quiet_NaN();
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

namespace detail {

inline double to_unit(double v, double lo, double hi) { return std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0); }

}  // namespace detail

/// Normalizes tool positions (x, y over the workspace, z over [0, 0.20]) and
/// assembles the maps, zero-padding grids smaller than 32 x 32 around a
/// centered placement.
inline Observation build_observation(const World& world, const GoalSpec& goal, const HeightMap& current) {
  const HeightMap& g = goal.goal_map;
  if (current.rows() != g.rows() || current.cols() != g.cols())
    throw std::invalid_argument("build_observation: current and goal grids differ");
  const WorkspaceConfig& ws = world.workspace();
  Observation obs;
  auto norm = [&](Vec3 p) {
    return std::array<double, 3>{detail::to_unit(p.x, 0.0, ws.extent_x), detail::to_unit(p.y, 0.0, ws.extent_y),
                                 detail::to_unit(p.z, kMinHeight, kMaxHeight)};
  };
  obs.ee_current = norm(world.ee().position);
  obs.ee_previous = norm(world.ee().previous_position);

  const std::size_t n = static_cast<std::size_t>(kObservationGrid) * kObservationGrid;
  obs.diff_map.assign(n, 0.0);
  obs.ee_mask.assign(n, 0);
  obs.goal_mask.assign(n, 0);
  const int off_r = (kObservationGrid - g.rows()) / 2;
  const int off_c = (kObservationGrid - g.cols()) / 2;
  const CellMask tool = ee_mask(world.ee(), g.rows(), g.cols(), g.cell_size());
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      const std::size_t o = static_cast<std::size_t>(r + off_r) * kObservationGrid + (c + off_c);
      obs.diff_map[o] = std::clamp((g.at(r, c) - current.at(r, c)) / kMaxHeight, -1.0, 1.0);
      obs.ee_mask[o] = tool.at(r, c) ? 1 : 0;
      obs.goal_mask[o] = goal.goal_mask.at(r, c) ? 1 : 0;
    }
  }
  return obs;
}

class Environment {
 public:
  explicit Environment(EnvConfig config) : config_(std::move(config)) {
    config_.validate();
    camera_ = config_.camera ? *config_.camera : default_camera(config_.grid, config_.h0);
  }

  const EnvConfig& config() const noexcept { return config_; }

  Observation reset(const GoalSpec& goal, std::uint64_t seed) {
    const HeightMap& g = goal.goal_map;
    if (g.rows() != config_.grid.rows || g.cols() != config_.grid.cols ||
        std::abs(g.cell_size() - config_.grid.cell_size) > 1e-12)
      throw std::invalid_argument("reset: goal '" + goal.id + "' grid does not match the environment grid");
    if (std::abs(goal.h0 - config_.h0) > 1e-9)
      throw std::invalid_argument("reset: goal '" + goal.id + "' bed height does not match the environment");
    goal_ = goal;
    rng_ = Rng(seed);
    noise_rng_ = Rng(mix_seed(seed, 1));

    const WorkspaceConfig& ws = config_.workspace;
    const Vec3 start{rng_.uniform(0.5 * (ws.extent_x - config_.start_box.x), 0.5 * (ws.extent_x + config_.start_box.x)),
                     rng_.uniform(0.5 * (ws.extent_y - config_.start_box.y), 0.5 * (ws.extent_y + config_.start_box.y)),
                     config_.h0 + config_.start_clearance + rng_.uniform(0.0, config_.start_box.z)};
    EndEffectorState ee;
    ee.position = start;
    ee.footprint_width = config_.footprint_width;
    ee.footprint_depth = config_.footprint_depth;
    ee.length = config_.tool_length;
    world_.emplace(HeightMap::flat(config_.grid.rows, config_.grid.cols, config_.grid.cell_size, config_.h0), ee,
                   ws, config_.repose);
    recon_ = ReconstructionState::flat(config_.grid, config_.h0);
    recon_.noise_std = config_.noise_std;
    t_ = 0;
    done_ = false;

    const HeightMap& current = observe_current();
    rewards_ = EpisodeRewardState::start(d_hat(current, *goal_, Region::goal_area),
                                         d_hat_outside_or_zero(current, *goal_));
    return build_observation(*world_, *goal_, current);
  }

  /// Places the tool without moving material; the next observation reflects
  /// the new pose.
  Observation teleport(Vec3 p) {
    require_reset();
    world_->teleport(p);
    return build_observation(*world_, *goal_, observe_current());
  }

  StepResult step(const std::array<double, 3>& action) {
    require_reset();
    if (done_) throw std::logic_error("step called after the episode finished; call reset");
    const ActionReport report = world_->apply_action(action);
    ++t_;

    const HeightMap& current = observe_current();
    StepInfo info;
    info.step = t_;
    info.action = action;
    info.d_hat = d_hat(current, *goal_, Region::goal_area);
    info.d_hat_out = d_hat_outside_or_zero(current, *goal_);
    switch (config_.reward.shaping) {
      case ShapingVariant::delta: info.r_shaping = reward_delta(rewards_, info.d_hat, config_.reward); break;
      case ShapingVariant::progressive:
        info.r_shaping = reward_progressive(rewards_, info.d_hat, info.d_hat_out, config_.reward);
        break;
      case ShapingVariant::none: rewards_.d_hat_prev = info.d_hat; break;
    }
    const MoveReward move = reward_move(world_->ee(), *goal_, config_.reward);
    info.r_move = move.reward;
    info.d_move = move.distance;
    info.reached = move.reached;
    info.reward = reward_total(info.r_move, info.r_shaping, config_.reward);
    info.displaced_volume = report.displaced_volume;
    info.spilled = report.spilled;
    info.in_medium = in_medium(world_->map(), world_->ee());
    info.ee_position = world_->ee().position;
    if (config_.observation_mode == ObservationMode::reconstructed) {
      double err = 0.0;
      for (std::size_t i = 0; i < current.size(); ++i) err += std::abs(current[i] - world_->map()[i]);
      info.recon_error = err / static_cast<double>(current.size());
    }

    StepResult out;
    out.observation = build_observation(*world_, *goal_, current);
    out.reward = info.reward;
    done_ = config_.enforce_episode_cap && t_ >= config_.episode_steps;
    out.done = done_;
    out.info = info;
    return out;
  }

  const World& world() const {
    require_reset();
    return *world_;
  }
  const GoalSpec& goal() const {
    require_reset();
    return *goal_;
  }
  const EpisodeRewardState& reward_state() const noexcept { return rewards_; }
  int steps_taken() const noexcept { return t_; }
  bool done() const noexcept { return done_; }
  Rng& rng() noexcept { return rng_; }
  const Camera& camera() const noexcept { return camera_; }
  /// Last height map handed to the policy (privileged or reconstructed).
  const HeightMap& observed_map() const {
    require_reset();
    return config_.observation_mode == ObservationMode::privileged ? world_->map() : recon_.last_map;
  }

 private:
  void require_reset() const {
    if (!world_ || !goal_) throw std::logic_error("environment used before reset");
  }

  const HeightMap& observe_current() {
    if (config_.observation_mode == ObservationMode::privileged) return world_->map();
    const EndEffectorState& ee = world_->ee();
    const DepthImage img = render_depth(world_->map(), &ee, camera_, config_.noise_std, &noise_rng_);
    const CellMask tool = ee_mask(ee, config_.grid.rows, config_.grid.cols, config_.grid.cell_size);
    reconstruct(img, recon_, tool, &ee);
    return recon_.last_map;
  }

  EnvConfig config_;
  Camera camera_;
  std::optional<World> world_;
  std::optional<GoalSpec> goal_;
  ReconstructionState recon_;
  EpisodeRewardState rewards_;
  Rng rng_{0};
  Rng noise_rng_{0};
  int t_ = 0;
  bool done_ = false;
};

}  // namespace granular
