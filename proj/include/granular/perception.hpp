#pragma once

// Synthetic depth camera over the bed and height-map reconstruction from its
// depth images.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "granular/heightfield.hpp"
#include "granular/rng.hpp"
#include "granular/world.hpp"

namespace granular {

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Camera-to-world rigid transform. Columns of `rotation` are the camera
/// axes (x right, y down, z forward) expressed in world coordinates.
struct Pose {
  std::array<std::array<double, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 translation;

  Vec3 apply_rotation(Vec3 v) const {
    return {rotation[0][0] * v.x + rotation[0][1] * v.y + rotation[0][2] * v.z,
            rotation[1][0] * v.x + rotation[1][1] * v.y + rotation[1][2] * v.z,
            rotation[2][0] * v.x + rotation[2][1] * v.y + rotation[2][2] * v.z};
  }
};

struct Camera {
  int width = 128;
  int height = 128;
  Intrinsics intrinsics;
  Pose pose;

  Vec3 ray_direction(double u, double v) const {
    const Vec3 d_cam{(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0};
    const Vec3 d = pose.apply_rotation(d_cam);
    return (1.0 / d.norm()) * d;
  }
};

namespace detail {

inline Vec3 cross(Vec3 a, Vec3 b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }
inline Vec3 normalized(Vec3 v) { return (1.0 / v.norm()) * v; }

}  // namespace detail

/// Pinhole camera at `eye` looking at `target`, with image y pointing as
/// close to world -z as possible.
inline Camera look_at_camera(Vec3 eye, Vec3 target, int width, int height, double vertical_fov) {
  const Vec3 forward = detail::normalized(target - eye);
  Vec3 right = detail::cross(forward, Vec3{0, 0, 1});
  if (right.norm() < 1e-9) right = {1, 0, 0};
  right = detail::normalized(right);
  const Vec3 down = detail::cross(forward, right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  const double f = 0.5 * height / std::tan(0.5 * vertical_fov);
  cam.intrinsics = {f, f, 0.5 * width, 0.5 * height};
  cam.pose.translation = eye;
  const double axes[3][3] = {{right.x, down.x, forward.x}, {right.y, down.y, forward.y}, {right.z, down.z, forward.z}};
  for (std::size_t i = 0; i < 3; ++i) cam.pose.rotation[i] = {axes[i][0], axes[i][1], axes[i][2]};
  return cam;
}

/// 512 x 512 pinhole whose optical axis meets the bed center at 30 degrees
/// from vertical, 0.6 m above the bed. Far-side cells are seen at about 39
/// degrees, and at lower resolutions their steep relaxed faces get too few
/// points for a 2 mm per-cell mean.
inline Camera default_camera(const GridGeometry& grid = {}, double bed_height = 0.06) {
  const double cx = 0.5 * grid.cols * grid.cell_size;
  const double cy = 0.5 * grid.rows * grid.cell_size;
  const double pitch = 30.0 * std::numbers::pi / 180.0;
  const double rise = 0.6;
  const Vec3 target{cx, cy, bed_height};
  const Vec3 eye{cx - rise * std::tan(pitch), cy, bed_height + rise};
  return look_at_camera(eye, target, 512, 512, 36.0 * std::numbers::pi / 180.0);
}

struct DepthImage {
  int width = 0;
  int height = 0;
  /// Range along each pixel ray (m), row-major; non-finite means no return.
  std::vector<double> depth;
  Intrinsics intrinsics;
  Pose pose;

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
};

/// Bilinear interpolation between cell centers, edge-clamped.
inline double surface_height(const HeightMap& map, double x, double y) {
  const double cs = map.cell_size();
  const double fx = std::clamp(x / cs - 0.5, 0.0, static_cast<double>(map.cols() - 1));
  const double fy = std::clamp(y / cs - 0.5, 0.0, static_cast<double>(map.rows() - 1));
  const int c0 = std::min(static_cast<int>(fx), map.cols() - 1);
  const int r0 = std::min(static_cast<int>(fy), map.rows() - 1);
  const int c1 = std::min(c0 + 1, map.cols() - 1);
  const int r1 = std::min(r0 + 1, map.rows() - 1);
  const double tx = fx - c0;
  const double ty = fy - r0;
  const double top = map.at(r0, c0) * (1 - tx) + map.at(r0, c1) * tx;
  const double bottom = map.at(r1, c0) * (1 - tx) + map.at(r1, c1) * tx;
  return top * (1 - ty) + bottom * ty;
}

/// Control values for a bilinear surface whose area-mean over every cell
/// equals the stored cell height. Averaging the center-interpolated surface
/// over a cell applies the separable kernel [1/8, 3/4, 1/8] (edge-clamped),
/// so the controls solve that tridiagonal system along rows, then columns.
inline HeightMap surface_controls(const HeightMap& map) {
  HeightMap out = map;
  auto solve_line = [](std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n < 2) return;
    std::vector<double> a(n, 0.125), b(n, 0.75), c(n, 0.125);
    b[0] = 0.875;
    b[n - 1] = 0.875;
    a[0] = 0.0;
    c[n - 1] = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      v[i] -= w * v[i - 1];
    }
    v[n - 1] /= b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) v[i] = (v[i] - c[i] * v[i + 1]) / b[i];
  };
  std::vector<double> line;
  for (int r = 0; r < out.rows(); ++r) {
    line.assign(out.data().begin() + static_cast<std::ptrdiff_t>(out.index(r, 0)),
                out.data().begin() + static_cast<std::ptrdiff_t>(out.index(r, 0) + out.cols()));
    solve_line(line);
    for (int c = 0; c < out.cols(); ++c) out.at(r, c) = line[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < out.cols(); ++c) {
    line.resize(static_cast<std::size_t>(out.rows()));
    for (int r = 0; r < out.rows(); ++r) line[static_cast<std::size_t>(r)] = out.at(r, c);
    solve_line(line);
    for (int r = 0; r < out.rows(); ++r) out.at(r, c) = line[static_cast<std::size_t>(r)];
  }
  return out;
}

namespace detail {

/// Entry distance of the ray into the axis-aligned box, or +inf.
inline double ray_box(Vec3 o, Vec3 d, Vec3 lo, Vec3 hi) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  const double os[3] = {o.x, o.y, o.z};
  const double ds[3] = {d.x, d.y, d.z};
  const double los[3] = {lo.x, lo.y, lo.z};
  const double his[3] = {hi.x, hi.y, hi.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(ds[a]) < 1e-15) {
      if (os[a] < los[a] || os[a] > his[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double ta = (los[a] - os[a]) / ds[a];
    double tb = (his[a] - os[a]) / ds[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  return t0;
}

/// First crossing of the ray with the height surface: march in steps of at
/// most cell_size / 2, then bisect 10 times.
inline double ray_surface(const HeightMap& map, double top, Vec3 o, Vec3 d) {
  if (d.z >= 0.0) return std::numeric_limits<double>::infinity();
  const double step = 0.5 * map.cell_size();
  double t = std::max(0.0, (o.z - top) / -d.z);
  const double t_floor = (o.z - kMinHeight) / -d.z + step;
  auto gap = [&](double s) {
    const Vec3 p = o + s * d;
    return p.z - surface_height(map, p.x, p.y);
  };
  double prev = t;
  if (gap(t) <= 0.0) return t;
  while (t < t_floor) {
    prev = t;
    t += step;
    if (gap(t) <= 0.0) {
      double lo = prev, hi = t;
      for (int i = 0; i < 10; ++i) {
        const double mid = 0.5 * (lo + hi);
        (gap(mid) <= 0.0 ? hi : lo) = mid;
      }
      return 0.5 * (lo + hi);
    }
  }
  return std::numeric_limits<double>::infinity();
}

inline double gaussian(Rng& rng) {
  double u1 = rng.uniform();
  while (u1 <= 0.0) u1 = rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Ray-casts the bed (and the tool cuboid when `ee` is given). Adds
/// zero-mean Gaussian range noise when noise_std > 0 and `rng` is set.
inline DepthImage render_depth(const HeightMap& map, const EndEffectorState* ee, const Camera& camera,
                               double noise_std = 0.0, Rng* rng = nullptr) {
  const HeightMap surface = surface_controls(map);
  const double top = surface.max();
  if (camera.pose.translation.z <= top) throw std::invalid_argument("render_depth: camera is below the surface");
  DepthImage img;
  img.width = camera.width;
  img.height = camera.height;
  img.intrinsics = camera.intrinsics;
  img.pose = camera.pose;
  img.depth.assign(static_cast<std::size_t>(camera.width) * camera.height, std::numeric_limits<double>::infinity());

  Vec3 box_lo, box_hi;
  if (ee) {
    box_lo = {ee->position.x - ee->footprint_width / 2, ee->position.y - ee->footprint_depth / 2, ee->position.z};
    box_hi = {ee->position.x + ee->footprint_width / 2, ee->position.y + ee->footprint_depth / 2,
              ee->position.z + ee->length};
  }
  const Vec3 o = camera.pose.translation;
  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      const Vec3 d = camera.ray_direction(u + 0.5, v + 0.5);
      double t = detail::ray_surface(surface, top, o, d);
      if (ee) t = std::min(t, detail::ray_box(o, d, box_lo, box_hi));
      if (std::isfinite(t) && noise_std > 0.0 && rng) t = std::max(1e-6, t + noise_std * detail::gaussian(*rng));
      img.depth[static_cast<std::size_t>(v) * camera.width + u] = t;
    }
  }
  return img;
}

/// 16-bit PGM with depth in millimeters; no-return pixels are 0.
inline void write_depth_pgm(std::ostream& out, const DepthImage& img) {
  std::vector<double> mm(img.depth.size());
  for (std::size_t i = 0; i < mm.size(); ++i) mm[i] = std::isfinite(img.depth[i]) ? img.depth[i] * 1000.0 : 0.0;
  write_pgm16(out, img.width, img.height, mm, 65535.0);
}

struct ReconstructionState {
  HeightMap last_map;
  double noise_std = 0.0;
  /// Margin around the tool cuboid inside which points are attributed to
  /// the tool and dropped.
  double ee_dilation = 0.01;

  static ReconstructionState flat(const GridGeometry& grid, double h0) {
    return {HeightMap::flat(grid.rows, grid.cols, grid.cell_size, h0)};
  }
};

/// Unprojects every pixel, drops tool points and points over tool-covered
/// cells, and averages the remaining point heights per cell. Cells without
/// points keep the previous estimate.
inline HeightMap reconstruct(const DepthImage& image, ReconstructionState& state, const CellMask& ee_cells,
                             const EndEffectorState* ee = nullptr) {
  HeightMap& last = state.last_map;
  if (last.size() == 0) throw std::invalid_argument("reconstruct: state has no map");
  if (image.width < 1 || image.height < 1 ||
      image.depth.size() != static_cast<std::size_t>(image.width) * image.height)
    throw std::invalid_argument("reconstruct: depth buffer does not match image dimensions");
  if (ee_cells.rows != last.rows() || ee_cells.cols != last.cols())
    throw std::invalid_argument("reconstruct: EE mask does not match the grid");

  Camera cam{image.width, image.height, image.intrinsics, image.pose};
  std::vector<double> sum(last.size(), 0.0);
  std::vector<int> count(last.size(), 0);
  Vec3 lo, hi;
  if (ee) {
    const double g = state.ee_dilation;
    lo = {ee->position.x - ee->footprint_width / 2 - g, ee->position.y - ee->footprint_depth / 2 - g,
          ee->position.z - g};
    hi = {ee->position.x + ee->footprint_width / 2 + g, ee->position.y + ee->footprint_depth / 2 + g,
          ee->position.z + ee->length + g};
  }
  const double cs = last.cell_size();
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      const double t = image.at(u, v);
      if (!std::isfinite(t) || t <= 0.0) continue;
      const Vec3 p = cam.pose.translation + t * cam.ray_direction(u + 0.5, v + 0.5);
      if (ee && p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z) continue;
      const int c = static_cast<int>(std::floor(p.x / cs));
      const int r = static_cast<int>(std::floor(p.y / cs));
      if (!last.contains(r, c) || ee_cells.at(r, c)) continue;
      const std::size_t i = last.index(r, c);
      sum[i] += p.z;
      ++count[i];
    }
  }
  for (std::size_t i = 0; i < last.size(); ++i)
    if (count[i] > 0) last[i] = std::clamp(sum[i] / count[i], kMinHeight, kMaxHeight);
  return last;
}

}  // namespace granular
