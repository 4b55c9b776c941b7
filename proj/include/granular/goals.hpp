#pragma once

// Procedural goal height maps: rectangles, L-shapes and star-convex polygons
// pressed into a flat bed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "granular/heightfield.hpp"
#include "granular/rng.hpp"

namespace granular {

enum class GoalFamily { rectangle, l_shape, polygon };

inline std::string_view to_string(GoalFamily f) {
  switch (f) {
    case GoalFamily::rectangle: return "rectangle";
    case GoalFamily::l_shape: return "l_shape";
    case GoalFamily::polygon: return "polygon";
  }
  return "?";
}

inline std::optional<GoalFamily> parse_family(std::string_view s) {
  if (s == "rectangle") return GoalFamily::rectangle;
  if (s == "l_shape") return GoalFamily::l_shape;
  if (s == "polygon") return GoalFamily::polygon;
  return std::nullopt;
}

/// Cells closer than this to h0 count as untouched bed.
inline constexpr double kGoalMaskEpsilon = 1e-7;
inline constexpr double kMaxGoalExtent = 0.10;
inline constexpr double kMaxGoalDepth = 0.03;

struct GoalSpec {
  HeightMap goal_map;
  CellMask goal_mask;
  GoalFamily family = GoalFamily::rectangle;
  std::string id;
  double h0 = 0.06;
  std::uint64_t seed = 0;
};

class GoalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline CellMask derive_goal_mask(const HeightMap& goal_map, double h0) {
  CellMask mask(goal_map.rows(), goal_map.cols());
  for (int r = 0; r < goal_map.rows(); ++r)
    for (int c = 0; c < goal_map.cols(); ++c) mask.set(r, c, std::abs(goal_map.at(r, c) - h0) > kGoalMaskEpsilon);
  return mask;
}

inline CellRange mask_bounds(const CellMask& mask) {
  CellRange b{mask.rows, -1, mask.cols, -1};
  for (int r = 0; r < mask.rows; ++r)
    for (int c = 0; c < mask.cols; ++c)
      if (mask.at(r, c)) {
        b.r0 = std::min(b.r0, r);
        b.r1 = std::max(b.r1, r);
        b.c0 = std::min(b.c0, c);
        b.c1 = std::max(b.c1, c);
      }
  return b;
}

/// 8-connected components; labels[i] = component index or -1.
inline int label_regions(const CellMask& mask, std::vector<int>& labels) {
  labels.assign(mask.cells.size(), -1);
  int next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) {
      if (!mask.at(r, c) || labels[static_cast<std::size_t>(r) * mask.cols + c] >= 0) continue;
      stack.push_back({r, c});
      labels[static_cast<std::size_t>(r) * mask.cols + c] = next;
      while (!stack.empty()) {
        auto [cr, cc] = stack.back();
        stack.pop_back();
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int nr = cr + dr, nc = cc + dc;
            if (!mask.contains(nr, nc) || !mask.at(nr, nc)) continue;
            int& l = labels[static_cast<std::size_t>(nr) * mask.cols + nc];
            if (l < 0) {
              l = next;
              stack.push_back({nr, nc});
            }
          }
      }
      ++next;
    }
  }
  return next;
}

/// A goal a single straight pass can produce: a filled rectangle no wider
/// than the footprint along one axis, at one depth.
inline bool single_stroke_achievable(const GoalSpec& goal, int footprint_cells) {
  const CellRange b = mask_bounds(goal.goal_mask);
  if (b.empty()) return true;
  if (static_cast<std::size_t>(b.cell_count()) != goal.goal_mask.count()) return false;
  const int h = b.r1 - b.r0 + 1;
  const int w = b.c1 - b.c0 + 1;
  if (std::min(h, w) > footprint_cells) return false;
  const double depth = goal.goal_map.at(b.r0, b.c0);
  for (int r = b.r0; r <= b.r1; ++r)
    for (int c = b.c0; c <= b.c1; ++c)
      if (std::abs(goal.goal_map.at(r, c) - depth) > kGoalMaskEpsilon) return false;
  return true;
}

/// Throws GoalError describing the first violated goal invariant.
inline void validate_goal(const GoalSpec& goal) {
  const HeightMap& g = goal.goal_map;
  if (goal.goal_mask.rows != g.rows() || goal.goal_mask.cols != g.cols())
    throw GoalError("goal '" + goal.id + "': mask and map dimensions differ");
  if (!(goal.goal_mask == derive_goal_mask(g, goal.h0)))
    throw GoalError("goal '" + goal.id + "': mask inconsistent with goal map");
  if (!goal.goal_mask.any()) throw GoalError("goal '" + goal.id + "': empty goal area");
  for (double h : g.data()) {
    if (h > goal.h0 + kGoalMaskEpsilon) throw GoalError("goal '" + goal.id + "': goal rises above h0");
    if (goal.h0 - h > kMaxGoalDepth + kGoalMaskEpsilon)
      throw GoalError("goal '" + goal.id + "': goal deeper than 3 cm");
  }
  const CellRange b = mask_bounds(goal.goal_mask);
  const double limit = kMaxGoalExtent + 1e-9;
  if ((b.r1 - b.r0 + 1) * g.cell_size() > limit || (b.c1 - b.c0 + 1) * g.cell_size() > limit)
    throw GoalError("goal '" + goal.id + "': goal area exceeds 10 x 10 cm");
}

namespace detail {

inline bool point_in_polygon(double x, double y, const std::vector<std::array<double, 2>>& poly) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) inside = !inside;
  }
  return inside;
}

/// Goal depths below h0 in whole millimeters.
struct DepthRange {
  int min_mm = 5;
  int max_mm = 7;
};

/// Depth in meters, uniform over [min_mm, max_mm] in 1 mm steps.
inline double sample_depth(Rng& rng, int min_mm, int max_mm) {
  return static_cast<double>(rng.uniform_int(min_mm, max_mm)) / 1000.0;
}

inline double sample_depth(Rng& rng, const DepthRange& d) { return sample_depth(rng, d.min_mm, d.max_mm); }

// Shapes are drawn in a local box first and placed afterwards. Entries hold
// depth below h0 (0 = untouched).
struct LocalShape {
  int rows = 0;
  int cols = 0;
  std::vector<double> depth;
  double& at(int r, int c) { return depth[static_cast<std::size_t>(r) * cols + c]; }
};

inline LocalShape sample_rectangle(Rng& rng, const DepthRange& depth) {
  LocalShape s;
  s.rows = static_cast<int>(rng.uniform_int(3, 10));
  s.cols = static_cast<int>(rng.uniform_int(3, 10));
  s.depth.assign(static_cast<std::size_t>(s.rows) * s.cols, sample_depth(rng, depth));
  return s;
}

// Vertical and horizontal bar meeting at a shared corner, then one of the
// four corner orientations.
inline LocalShape sample_l_shape(Rng& rng, const DepthRange& depth) {
  LocalShape s;
  s.rows = static_cast<int>(rng.uniform_int(4, 10));
  s.cols = static_cast<int>(rng.uniform_int(4, 10));
  const int bar_h = static_cast<int>(rng.uniform_int(2, std::min(5, s.rows - 2)));
  const int bar_w = static_cast<int>(rng.uniform_int(2, std::min(5, s.cols - 2)));
  const double d = sample_depth(rng, depth);
  s.depth.assign(static_cast<std::size_t>(s.rows) * s.cols, 0.0);
  for (int r = 0; r < s.rows; ++r)
    for (int c = 0; c < s.cols; ++c)
      if (r < bar_h || c < bar_w) s.at(r, c) = d;
  const bool flip_r = rng.uniform() < 0.5;
  const bool flip_c = rng.uniform() < 0.5;
  LocalShape out = s;
  for (int r = 0; r < s.rows; ++r)
    for (int c = 0; c < s.cols; ++c)
      out.at(flip_r ? s.rows - 1 - r : r, flip_c ? s.cols - 1 - c : c) = s.at(r, c);
  return out;
}

/// Half of the polygons are terraced: an inner core one extra step deeper.
inline LocalShape sample_polygon(Rng& rng, const DepthRange& depth) {
  const int n = static_cast<int>(rng.uniform_int(5, 8));
  std::vector<std::array<double, 2>> poly;
  double mean_radius = 0.0;
  const double sector = 2.0 * std::numbers::pi / n;
  for (int k = 0; k < n; ++k) {
    const double angle = sector * (k + rng.uniform(-0.35, 0.35));
    const double radius = rng.uniform(1.5, 5.0);
    mean_radius += radius / n;
    poly.push_back({radius * std::cos(angle), radius * std::sin(angle)});
  }
  // Local box of 10 x 10 cells centered on the polygon center.
  LocalShape s;
  s.rows = 10;
  s.cols = 10;
  s.depth.assign(100, 0.0);
  const bool terrace = rng.uniform() < 0.5;
  const double d1 = sample_depth(rng, depth);
  const double d2 = terrace ? std::min(kMaxGoalDepth, d1 + sample_depth(rng, 1, depth.min_mm)) : d1;
  const double inner = 0.5 * mean_radius;
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) {
      const double x = c + 0.5 - 5.0;
      const double y = r + 0.5 - 5.0;
      if (!point_in_polygon(x, y, poly)) continue;
      s.at(r, c) = std::hypot(x, y) < inner ? d2 : d1;
    }
  // Trim to the occupied bounding box.
  int r0 = 10, r1 = -1, c0 = 10, c1 = -1;
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c)
      if (s.at(r, c) > 0.0) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  if (r1 < 0) return LocalShape{};
  LocalShape t;
  t.rows = r1 - r0 + 1;
  t.cols = c1 - c0 + 1;
  t.depth.assign(static_cast<std::size_t>(t.rows) * t.cols, 0.0);
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) t.at(r, c) = s.at(r + r0, c + c0);
  return t;
}

}  // namespace detail

struct GoalGenOptions {
  double h0 = 0.06;
  /// Minimum distance in cells between the goal area and the grid border.
  int margin_cells = 2;
  int footprint_cells = 2;
  int max_attempts = 100;
  detail::DepthRange depth;
};

/// Deterministic in (family, seed, grid, options).
inline GoalSpec gen_goal(GoalFamily family, std::uint64_t seed, const GridGeometry& grid = {},
                         const GoalGenOptions& opt = {}) {
  if (opt.depth.min_mm < 1 || opt.depth.min_mm > opt.depth.max_mm || opt.depth.max_mm > 30)
    throw std::invalid_argument("gen_goal: depth range must satisfy 1 <= min <= max <= 30 mm");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(family)));
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    detail::LocalShape shape;
    switch (family) {
      case GoalFamily::rectangle: shape = detail::sample_rectangle(rng, opt.depth); break;
      case GoalFamily::l_shape: shape = detail::sample_l_shape(rng, opt.depth); break;
      case GoalFamily::polygon: shape = detail::sample_polygon(rng, opt.depth); break;
    }
    if (shape.rows == 0) continue;
    const int free_r = grid.rows - 2 * opt.margin_cells - shape.rows;
    const int free_c = grid.cols - 2 * opt.margin_cells - shape.cols;
    if (free_r < 0 || free_c < 0) continue;
    const int r0 = opt.margin_cells + static_cast<int>(rng.uniform_int(0, free_r));
    const int c0 = opt.margin_cells + static_cast<int>(rng.uniform_int(0, free_c));

    GoalSpec goal;
    goal.family = family;
    goal.seed = seed;
    goal.h0 = opt.h0;
    goal.id = std::string(to_string(family)) + "_s" + std::to_string(seed);
    goal.goal_map = HeightMap::flat(grid.rows, grid.cols, grid.cell_size, opt.h0);
    for (int r = 0; r < shape.rows; ++r)
      for (int c = 0; c < shape.cols; ++c)
        if (shape.at(r, c) > 0.0) goal.goal_map.at(r0 + r, c0 + c) = opt.h0 - shape.at(r, c);
    goal.goal_mask = derive_goal_mask(goal.goal_map, opt.h0);

    std::vector<int> labels;
    if (label_regions(goal.goal_mask, labels) != 1) continue;
    if (single_stroke_achievable(goal, opt.footprint_cells)) continue;
    try {
      validate_goal(goal);
    } catch (const GoalError&) {
      continue;
    }
    return goal;
  }
  throw GoalError("no valid " + std::string(to_string(family)) + " goal after " + std::to_string(opt.max_attempts) +
                  " attempts (seed " + std::to_string(seed) + ")");
}

// ---------------------------------------------------------------------------
// Goal files: GHM v1 + "# family=<f> seed=<s> id=<id>" + one "# mask <bits>"
// line per row.

inline void write_goal(std::ostream& out, const GoalSpec& goal) {
  write_ghm(out, goal.goal_map, goal.h0);
  out << "# family=" << to_string(goal.family) << " seed=" << goal.seed << " id=" << goal.id << '\n';
  for (int r = 0; r < goal.goal_mask.rows; ++r) {
    out << "# mask ";
    for (int c = 0; c < goal.goal_mask.cols; ++c) out << (goal.goal_mask.at(r, c) ? '1' : '0');
    out << '\n';
  }
}

inline void save_goal(const GoalSpec& goal, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  write_goal(out, goal);
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline GoalSpec read_goal(std::istream& in, const std::string& fallback_id = "goal") {
  GhmDocument doc = read_ghm(in);
  GoalSpec goal;
  goal.goal_map = std::move(doc.map);
  goal.h0 = doc.h0;
  goal.id = fallback_id;
  bool have_family = false;
  std::vector<std::string> mask_rows;
  std::vector<int> mask_lines;
  int metadata_line = 1;
  for (std::size_t i = 0; i < doc.comments.size(); ++i) {
    const std::string& text = doc.comments[i];
    if (text.rfind("mask ", 0) == 0) {
      mask_rows.push_back(text.substr(5));
      mask_lines.push_back(doc.comment_lines[i]);
      continue;
    }
    std::istringstream ts(text);
    std::string token;
    while (ts >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      metadata_line = doc.comment_lines[i];
      if (key == "family") {
        auto f = parse_family(value);
        if (!f) throw ParseError("unknown goal family '" + value + "'", doc.comment_lines[i]);
        goal.family = *f;
        have_family = true;
      } else if (key == "seed") {
        try {
          goal.seed = std::stoull(value);
        } catch (const std::exception&) {
          throw ParseError("invalid seed '" + value + "'", doc.comment_lines[i]);
        }
      } else if (key == "id") {
        goal.id = value;
      }
    }
  }
  if (!have_family) throw ParseError("missing '# family=<f> seed=<s>' metadata line", metadata_line);

  goal.goal_mask = derive_goal_mask(goal.goal_map, goal.h0);
  if (!mask_rows.empty()) {
    if (static_cast<int>(mask_rows.size()) != goal.goal_map.rows())
      throw ParseError("mask inconsistent: expected " + std::to_string(goal.goal_map.rows()) + " mask rows, found " +
                           std::to_string(mask_rows.size()),
                       mask_lines.back());
    for (int r = 0; r < goal.goal_map.rows(); ++r) {
      const std::string& bits = mask_rows[static_cast<std::size_t>(r)];
      if (static_cast<int>(bits.size()) != goal.goal_map.cols())
        throw ParseError("mask inconsistent: row " + std::to_string(r) + " has wrong length", mask_lines[r]);
      for (int c = 0; c < goal.goal_map.cols(); ++c)
        if ((bits[static_cast<std::size_t>(c)] == '1') != goal.goal_mask.at(r, c))
          throw ParseError("mask inconsistent with goal map at row " + std::to_string(r) + ", col " +
                               std::to_string(c),
                           mask_lines[r]);
    }
  }
  for (int r = 0; r < goal.goal_map.rows(); ++r)
    for (int c = 0; c < goal.goal_map.cols(); ++c)
      if (goal.goal_map.at(r, c) > goal.h0 + kGoalMaskEpsilon)
        throw ParseError("goal height above h0 at row " + std::to_string(r), r + 2);
  if (!goal.goal_mask.any()) throw ParseError("goal area is empty", 1);
  return goal;
}

inline GoalSpec load_goal(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return read_goal(in, path.stem().string());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

/// All `*.ghm` files below `dir`, sorted by relative path.
inline std::vector<GoalSpec> load_goal_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("goal directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ghm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<GoalSpec> goals;
  goals.reserve(files.size());
  for (const auto& f : files) goals.push_back(load_goal(f));
  if (goals.empty()) throw std::runtime_error("no .ghm goals found in '" + dir.string() + "'");
  return goals;
}

}  // namespace granular
