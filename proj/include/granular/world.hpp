#pragma once

// Kinematic cubic end effector pushing material around the height map.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "granular/heightfield.hpp"

namespace granular {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

/// `position` is the bottom-center of the cuboid tool.
struct EndEffectorState {
  Vec3 position;
  Vec3 previous_position;
  double footprint_width = 0.02;  // along x
  double footprint_depth = 0.02;  // along y
  double length = 0.15;
};

struct WorkspaceConfig {
  double extent_x = 0.32;
  double extent_y = 0.32;
  double z_min = 0.005;
  double z_max = 0.20;
  double max_step = 0.04;
  double substep_fraction = 0.5;

  void validate() const {
    if (!(max_step > 0.0)) throw std::invalid_argument("WorkspaceConfig: max_step must be > 0");
    if (!(z_min >= 0.0) || !(z_max > z_min)) throw std::invalid_argument("WorkspaceConfig: need 0 <= z_min < z_max");
    if (!(extent_x > 0.0 && extent_y > 0.0)) throw std::invalid_argument("WorkspaceConfig: extents must be > 0");
    if (!(substep_fraction > 0.0)) throw std::invalid_argument("WorkspaceConfig: substep_fraction must be > 0");
  }

  Vec3 clamp(Vec3 p) const {
    return {std::clamp(p.x, 0.0, extent_x), std::clamp(p.y, 0.0, extent_y), std::clamp(p.z, z_min, z_max)};
  }
  bool contains(Vec3 p) const {
    return p.x >= 0.0 && p.x <= extent_x && p.y >= 0.0 && p.y <= extent_y && p.z >= z_min && p.z <= z_max;
  }
};

namespace detail {

inline double snap_to_integer(double v) {
  const double n = std::round(v);
  return std::abs(v - n) < 1e-9 ? n : v;
}

/// Cells whose centers lie in [lo, hi) along one axis.
inline std::array<int, 2> center_inside(double lo, double hi, double cell) {
  const int first = static_cast<int>(std::ceil(snap_to_integer(lo / cell - 0.5)));
  const int last = static_cast<int>(std::ceil(snap_to_integer(hi / cell - 0.5))) - 1;
  return {first, last};
}

}  // namespace detail

/// Footprint cells (center-inside rule, half-open on the upper edges) before
/// clipping to the grid.
inline CellRange footprint_cells(const EndEffectorState& ee, double cell_size) {
  const auto cs = detail::center_inside(ee.position.x - ee.footprint_width / 2, ee.position.x + ee.footprint_width / 2,
                                        cell_size);
  const auto rs = detail::center_inside(ee.position.y - ee.footprint_depth / 2, ee.position.y + ee.footprint_depth / 2,
                                        cell_size);
  return {rs[0], rs[1], cs[0], cs[1]};
}

inline CellRange clip(CellRange r, int rows, int cols) {
  return {std::max(r.r0, 0), std::min(r.r1, rows - 1), std::max(r.c0, 0), std::min(r.c1, cols - 1)};
}

inline CellMask ee_mask(const EndEffectorState& ee, int rows, int cols, double cell_size) {
  CellMask mask(rows, cols);
  const CellRange fp = clip(footprint_cells(ee, cell_size), rows, cols);
  if (fp.empty()) return mask;
  for (int r = fp.r0; r <= fp.r1; ++r)
    for (int c = fp.c0; c <= fp.c1; ++c) mask.set(r, c, true);
  return mask;
}

struct DisplaceResult {
  double displaced_volume = 0.0;
  double spilled = 0.0;
};

/// Cuts every footprint cell down to the tool bottom and spreads the removed
/// volume evenly over the in-grid cells of the surrounding one-cell ring.
inline DisplaceResult displace_in_place(HeightMap& map, const EndEffectorState& ee) {
  DisplaceResult result;
  const CellRange full = footprint_cells(ee, map.cell_size());
  const CellRange fp = clip(full, map.rows(), map.cols());
  if (fp.empty()) return result;

  const CellRange ring_box = clip({full.r0 - 1, full.r1 + 1, full.c0 - 1, full.c1 + 1}, map.rows(), map.cols());
  int ring_cells = 0;
  for (int r = ring_box.r0; r <= ring_box.r1; ++r)
    for (int c = ring_box.c0; c <= ring_box.c1; ++c)
      if (!full.contains(r, c)) ++ring_cells;
  // Footprint covering the whole grid leaves nowhere to push material.
  if (ring_cells == 0) return result;

  const double bottom = std::max(ee.position.z, 0.0);
  double removed_height = 0.0;
  for (int r = fp.r0; r <= fp.r1; ++r) {
    for (int c = fp.c0; c <= fp.c1; ++c) {
      double& h = map.at(r, c);
      if (h > bottom) {
        removed_height += h - bottom;
        h = bottom;
      }
    }
  }
  if (removed_height == 0.0) return result;

  const double area = map.cell_size() * map.cell_size();
  const double gain = removed_height / ring_cells;
  for (int r = ring_box.r0; r <= ring_box.r1; ++r) {
    for (int c = ring_box.c0; c <= ring_box.c1; ++c) {
      if (full.contains(r, c)) continue;
      double& h = map.at(r, c);
      h += gain;
      if (h > kMaxHeight) {
        result.spilled += (h - kMaxHeight) * area;
        h = kMaxHeight;
      }
    }
  }
  result.displaced_volume = removed_height * area;
  return result;
}

inline HeightMap displace(HeightMap map, const EndEffectorState& ee, DisplaceResult* result = nullptr) {
  DisplaceResult r = displace_in_place(map, ee);
  if (result) *result = r;
  return map;
}

/// True when the tool bottom is at or below the surface of any in-grid
/// footprint cell (within `contact_tolerance`).
inline bool in_medium(const HeightMap& map, const EndEffectorState& ee, double contact_tolerance = 1e-4) {
  const CellRange fp = clip(footprint_cells(ee, map.cell_size()), map.rows(), map.cols());
  if (fp.empty()) return false;
  for (int r = fp.r0; r <= fp.r1; ++r)
    for (int c = fp.c0; c <= fp.c1; ++c)
      if (ee.position.z < map.at(r, c) + contact_tolerance) return true;
  return false;
}

struct ActionReport {
  double displaced_volume = 0.0;
  double spilled = 0.0;
  int substeps = 0;
  int relax_sweeps = 0;
};

/// Height map plus tool. Not thread-safe; use one instance per episode.
class World {
 public:
  World(HeightMap map, EndEffectorState ee, WorkspaceConfig workspace = {}, ReposeConfig repose = {})
      : map_(std::move(map)), ee_(ee), workspace_(workspace), repose_(repose) {
    workspace_.validate();
    repose_.validate();
    if (!(ee_.footprint_width > 0.0 && ee_.footprint_depth > 0.0))
      throw std::invalid_argument("World: footprint dimensions must be > 0");
    ee_.position = workspace_.clamp(ee_.position);
    ee_.previous_position = ee_.position;
  }

  const HeightMap& map() const noexcept { return map_; }
  HeightMap& mutable_map() noexcept { return map_; }
  const EndEffectorState& ee() const noexcept { return ee_; }
  const WorkspaceConfig& workspace() const noexcept { return workspace_; }
  const ReposeConfig& repose() const noexcept { return repose_; }
  double total_spilled() const noexcept { return spilled_; }

  /// Moves the tool without touching the medium.
  void teleport(Vec3 p) {
    ee_.position = workspace_.clamp(p);
    ee_.previous_position = ee_.position;
  }

  /// `action` is a normalized increment in [-1, 1]^3 (clipped), scaled by
  /// max_step. The tool travels the straight segment in substeps no longer
  /// than substep_fraction * cell_size, displacing and relaxing after each.
  ActionReport apply_action(const std::array<double, 3>& action) {
    for (double a : action)
      if (!std::isfinite(a)) throw std::invalid_argument("apply_action: action must be finite");

    ActionReport report;
    const Vec3 start = ee_.position;
    ee_.previous_position = start;
    const Vec3 increment{std::clamp(action[0], -1.0, 1.0) * workspace_.max_step,
                         std::clamp(action[1], -1.0, 1.0) * workspace_.max_step,
                         std::clamp(action[2], -1.0, 1.0) * workspace_.max_step};
    const Vec3 target = workspace_.clamp(start + increment);
    const Vec3 travel = target - start;
    const double length = travel.norm();
    if (length == 0.0) return report;

    const double max_substep = workspace_.substep_fraction * map_.cell_size();
    const int n = std::max(1, static_cast<int>(std::ceil(length / max_substep - 1e-12)));
    for (int i = 1; i <= n; ++i) {
      ee_.position = i == n ? target : start + (static_cast<double>(i) / n) * travel;
      const DisplaceResult d = displace_in_place(map_, ee_);
      report.displaced_volume += d.displaced_volume;
      report.spilled += d.spilled;
      if (d.displaced_volume > 0.0) {
        const RelaxStats s = relax_in_place(map_, repose_);
        report.relax_sweeps += s.sweeps;
        report.spilled += s.spilled;
      }
    }
    report.substeps = n;
    spilled_ += report.spilled;
    return report;
  }

 private:
  HeightMap map_;
  EndEffectorState ee_;
  WorkspaceConfig workspace_;
  ReposeConfig repose_;
  double spilled_ = 0.0;
};

}  // namespace granular
