#pragma once

// Height-map representation of the granular bed and the angle-of-repose
// relaxation that keeps it stable.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace granular {

/// Elevation clamp range of every height map, in meters.
inline constexpr double kMinHeight = 0.0;
inline constexpr double kMaxHeight = 0.20;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Row-major grid of surface elevations (meters). Cell (r, c) has its center
/// at x = (c + 0.5) * cell_size, y = (r + 0.5) * cell_size.
class HeightMap {
 public:
  HeightMap() = default;
  HeightMap(int rows, int cols, double cell_size = 0.01, double fill = 0.0)
      : rows_(rows), cols_(cols), cell_size_(cell_size) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("HeightMap: rows and cols must be >= 1");
    if (!(cell_size > 0.0)) throw std::invalid_argument("HeightMap: cell_size must be > 0");
    heights_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
  }

  static HeightMap flat(int rows, int cols, double cell_size, double height) {
    return HeightMap(rows, cols, cell_size, height);
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  double cell_size() const noexcept { return cell_size_; }
  std::size_t size() const noexcept { return heights_.size(); }

  double& at(int r, int c) noexcept { return heights_[index(r, c)]; }
  double at(int r, int c) const noexcept { return heights_[index(r, c)]; }
  double& operator[](std::size_t i) noexcept { return heights_[i]; }
  double operator[](std::size_t i) const noexcept { return heights_[i]; }

  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }
  bool contains(int r, int c) const noexcept { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }

  double center_x(int c) const noexcept { return (c + 0.5) * cell_size_; }
  double center_y(int r) const noexcept { return (r + 0.5) * cell_size_; }
  double width() const noexcept { return cols_ * cell_size_; }
  double depth() const noexcept { return rows_ * cell_size_; }

  std::vector<double>& data() noexcept { return heights_; }
  const std::vector<double>& data() const noexcept { return heights_; }

  double min() const { return *std::min_element(heights_.begin(), heights_.end()); }
  double max() const { return *std::max_element(heights_.begin(), heights_.end()); }

  bool same_geometry(const HeightMap& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_ && cell_size_ == o.cell_size_;
  }

  friend bool operator==(const HeightMap&, const HeightMap&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  double cell_size_ = 0.01;
  std::vector<double> heights_;
};

/// Boolean cell mask with the same row-major layout as HeightMap.
struct CellMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> cells;

  CellMask() = default;
  CellMask(int r, int c, bool fill = false)
      : rows(r), cols(c), cells(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill ? 1 : 0) {}

  bool at(int r, int c) const noexcept { return cells[static_cast<std::size_t>(r) * cols + c] != 0; }
  void set(int r, int c, bool v) noexcept { cells[static_cast<std::size_t>(r) * cols + c] = v ? 1 : 0; }
  bool contains(int r, int c) const noexcept { return r >= 0 && c >= 0 && r < rows && c < cols; }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
  }
  bool any() const noexcept { return count() > 0; }

  friend bool operator==(const CellMask&, const CellMask&) = default;
};

struct GridGeometry {
  int rows = 32;
  int cols = 32;
  double cell_size = 0.01;
};

/// Inclusive cell index range; empty when first > last on either axis.
struct CellRange {
  int r0 = 0, r1 = -1, c0 = 0, c1 = -1;
  bool empty() const noexcept { return r1 < r0 || c1 < c0; }
  int cell_count() const noexcept { return empty() ? 0 : (r1 - r0 + 1) * (c1 - c0 + 1); }
  bool contains(int r, int c) const noexcept { return r >= r0 && r <= r1 && c >= c0 && c <= c1; }
};

struct ReposeConfig {
  double angle_repose = 35.0 * std::numbers::pi / 180.0;
  // Simultaneous 8-neighbour updates oscillate for k above 1/3. With
  // k <= 1/4 a cell can never overshoot its lowest or highest neighbour.
  double transfer_gain = 0.25;
  double tolerance = 1e-5;
  int max_sweeps = 10000;

  void validate() const {
    if (!(angle_repose > 0.0 && angle_repose < std::numbers::pi / 2))
      throw std::invalid_argument("ReposeConfig: angle_repose must be in (0, pi/2)");
    if (!(transfer_gain > 0.0 && transfer_gain <= 1.0))
      throw std::invalid_argument("ReposeConfig: transfer_gain must be in (0, 1]");
    if (!(tolerance > 0.0)) throw std::invalid_argument("ReposeConfig: tolerance must be > 0");
    if (max_sweeps < 1) throw std::invalid_argument("ReposeConfig: max_sweeps must be >= 1");
  }
};

class RelaxationError : public std::runtime_error {
 public:
  RelaxationError(int sweeps, double residual)
      : std::runtime_error("relaxation did not converge after " + std::to_string(sweeps) +
                           " sweeps (residual max violation " + std::to_string(residual) + " m)"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

struct RelaxStats {
  int sweeps = 0;
  double residual = 0.0;
  /// Volume removed by the ceiling clamp (m^3).
  double spilled = 0.0;
};

inline double volume(const HeightMap& map) {
  double sum = 0.0;
  for (double h : map.data()) sum += h;
  return sum * map.cell_size() * map.cell_size();
}

namespace detail {

// Each unordered 8-adjacent pair is visited once through these offsets.
struct PairOffset {
  int dr;
  int dc;
  bool diagonal;
};
inline constexpr PairOffset kForwardPairs[4] = {{0, 1, false}, {1, 0, false}, {1, 1, true}, {1, -1, true}};

/// One Jacobi pass. Accumulates transfers into `delta` when `delta` is
/// non-null and returns the largest slope excess of the input state.
inline double jacobi_pass(const HeightMap& map, double straight_limit, double diagonal_limit,
                          double half_gain, std::vector<double>* delta) {
  const int rows = map.rows();
  const int cols = map.cols();
  const double* h = map.data().data();
  double worst = 0.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      for (const auto& p : kForwardPairs) {
        const int rn = r + p.dr;
        const int cn = c + p.dc;
        if (rn >= rows || cn < 0 || cn >= cols) continue;
        const std::size_t j = static_cast<std::size_t>(rn) * cols + cn;
        const double limit = p.diagonal ? diagonal_limit : straight_limit;
        const double diff = h[i] - h[j];
        const double excess = std::abs(diff) - limit;
        if (excess <= 0.0) continue;
        worst = std::max(worst, excess);
        if (delta) {
          const double q = half_gain * excess;
          if (diff > 0.0) {
            (*delta)[i] -= q;
            (*delta)[j] += q;
          } else {
            (*delta)[i] += q;
            (*delta)[j] -= q;
          }
        }
      }
    }
  }
  return worst;
}

inline double clamp_heights(HeightMap& map) {
  double spilled = 0.0;
  const double area = map.cell_size() * map.cell_size();
  for (double& h : map.data()) {
    if (h > kMaxHeight) {
      spilled += (h - kMaxHeight) * area;
      h = kMaxHeight;
    } else if (h < kMinHeight) {
      // Only reachable through rounding; stable gains never drive a cell
      // below its lowest neighbour.
      h = kMinHeight;
    }
  }
  return spilled;
}

}  // namespace detail

/// Largest amount by which any 8-adjacent height difference exceeds the
/// repose slope; 0 means the map is stable.
inline double max_slope_violation(const HeightMap& map, const ReposeConfig& cfg) {
  const double t = std::tan(cfg.angle_repose);
  return detail::jacobi_pass(map, map.cell_size() * t, map.cell_size() * std::numbers::sqrt2 * t, 0.0, nullptr);
}

/// Relaxes `map` in place until no adjacent pair exceeds the repose slope by
/// more than cfg.tolerance. Every violating pair moves
/// k * excess / 2 from the higher to the lower cell, all pairs at once.
inline RelaxStats relax_in_place(HeightMap& map, const ReposeConfig& cfg) {
  cfg.validate();
  RelaxStats stats;
  stats.spilled = detail::clamp_heights(map);

  const double t = std::tan(cfg.angle_repose);
  const double straight = map.cell_size() * t;
  const double diagonal = map.cell_size() * std::numbers::sqrt2 * t;
  const double half_gain = 0.5 * cfg.transfer_gain;

  std::vector<double> delta(map.size(), 0.0);
  for (;;) {
    std::fill(delta.begin(), delta.end(), 0.0);
    const double worst = detail::jacobi_pass(map, straight, diagonal, half_gain, &delta);
    stats.residual = worst;
    if (worst <= cfg.tolerance) break;
    if (stats.sweeps >= cfg.max_sweeps) throw RelaxationError(stats.sweeps, worst);
    auto& h = map.data();
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += delta[i];
    ++stats.sweeps;
  }
  stats.spilled += detail::clamp_heights(map);
  return stats;
}

inline HeightMap relax(HeightMap map, const ReposeConfig& cfg, RelaxStats* stats = nullptr) {
  RelaxStats s = relax_in_place(map, cfg);
  if (stats) *stats = s;
  return map;
}

// ---------------------------------------------------------------------------
// GHM v1 text format and PGM export

/// Writes `GHM 1 <rows> <cols> <cell_size_cm> <h0_cm>` followed by one row of
/// heights (cm, 6 decimals) per line.
inline void write_ghm(std::ostream& out, const HeightMap& map, double h0) {
  out << std::fixed << std::setprecision(6);
  out << "GHM 1 " << map.rows() << ' ' << map.cols() << ' ' << map.cell_size() * 100.0 << ' ' << h0 * 100.0
      << '\n';
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      if (c) out << ' ';
      out << map.at(r, c) * 100.0;
    }
    out << '\n';
  }
}

struct GhmDocument {
  HeightMap map;
  double h0 = 0.0;
  /// Lines starting with '#' after the header, without the leading "# ".
  std::vector<std::string> comments;
  /// Line numbers (1-based) of the entries in `comments`.
  std::vector<int> comment_lines;
};

inline GhmDocument read_ghm(std::istream& in) {
  GhmDocument doc;
  std::string line;
  int line_no = 0;

  auto next_data_line = [&](std::string& out_line) -> bool {
    while (std::getline(in, out_line)) {
      ++line_no;
      if (!out_line.empty() && out_line.back() == '\r') out_line.pop_back();
      if (out_line.empty()) continue;
      if (out_line[0] == '#') {
        std::string body = out_line.substr(1);
        if (!body.empty() && body[0] == ' ') body.erase(0, 1);
        doc.comments.push_back(body);
        doc.comment_lines.push_back(line_no);
        continue;
      }
      return true;
    }
    return false;
  };

  if (!next_data_line(line)) throw ParseError("missing GHM header", line_no + 1);
  std::istringstream hs(line);
  std::string magic;
  int version = 0, rows = 0, cols = 0;
  double cell_cm = 0.0, h0_cm = 0.0;
  if (!(hs >> magic >> version >> rows >> cols >> cell_cm >> h0_cm) || magic != "GHM")
    throw ParseError("malformed header, expected 'GHM 1 <rows> <cols> <cell_size_cm> <h0_cm>'", line_no);
  if (version != 1) throw ParseError("unsupported GHM version " + std::to_string(version), line_no);
  std::string extra;
  if (hs >> extra) throw ParseError("trailing tokens in header", line_no);
  if (rows < 1 || cols < 1) throw ParseError("rows and cols must be >= 1", line_no);
  if (!(cell_cm > 0.0)) throw ParseError("cell size must be > 0", line_no);
  if (!(h0_cm >= 0.0 && h0_cm <= kMaxHeight * 100.0)) throw ParseError("h0 outside [0, 20] cm", line_no);

  doc.map = HeightMap(rows, cols, cell_cm / 100.0);
  doc.h0 = h0_cm / 100.0;
  for (int r = 0; r < rows; ++r) {
    if (!next_data_line(line))
      throw ParseError("expected " + std::to_string(rows) + " rows, found " + std::to_string(r), line_no + 1);
    std::istringstream rs(line);
    for (int c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!(rs >> v))
        throw ParseError("row " + std::to_string(r) + " has fewer than " + std::to_string(cols) + " values",
                         line_no);
      if (!std::isfinite(v) || v < 0.0 || v > kMaxHeight * 100.0)
        throw ParseError("height " + std::to_string(v) + " cm outside [0, 20] cm", line_no);
      doc.map.at(r, c) = v / 100.0;
    }
    if (rs >> extra)
      throw ParseError("row " + std::to_string(r) + " has more than " + std::to_string(cols) + " values", line_no);
  }
  while (next_data_line(line)) throw ParseError("unexpected data after the last row", line_no);
  return doc;
}

inline GhmDocument load_ghm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  try {
    return read_ghm(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

/// 16-bit binary PGM; `max_value` maps to 65535.
inline void write_pgm16(std::ostream& out, int width, int height, const std::vector<double>& values,
                        double max_value) {
  out << "P5\n" << width << ' ' << height << "\n65535\n";
  for (double v : values) {
    double s = std::isfinite(v) ? std::clamp(v / max_value, 0.0, 1.0) : 0.0;
    const auto q = static_cast<std::uint16_t>(std::lround(s * 65535.0));
    out.put(static_cast<char>(q >> 8));
    out.put(static_cast<char>(q & 0xff));
  }
}

/// Height maps export 0..20 cm linearly onto 0..65535.
inline void write_pgm(std::ostream& out, const HeightMap& map) {
  write_pgm16(out, map.cols(), map.rows(), map.data(), kMaxHeight);
}

}  // namespace granular
