#pragma once

// Shared generators and reference implementations for the test suites.
// Oracles here are written independently of the library code they check.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "granular/heightfield.hpp"
#include "granular/rng.hpp"

namespace granular::testing {

/// Random bed: smooth bumps plus per-cell noise plus a few spikes and pits,
/// all well inside (0, 0.20) so relaxation never touches the clamps.
inline HeightMap random_map(Rng& rng, int rows, int cols, double cell = 0.01) {
  HeightMap m(rows, cols, cell, 0.06);
  const int bumps = static_cast<int>(rng.uniform_int(0, 4));
  for (int b = 0; b < bumps; ++b) {
    const double cr = rng.uniform(0, rows), cc = rng.uniform(0, cols);
    const double amp = rng.uniform(-0.03, 0.04), w = rng.uniform(1.0, 6.0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m.at(r, c) += amp * std::exp(-((r - cr) * (r - cr) + (c - cc) * (c - cc)) / (w * w));
  }
  const double noise = rng.uniform(0.0, 0.02);
  for (double& h : m.data()) h += rng.uniform(-noise, noise);
  const int spikes = static_cast<int>(rng.uniform_int(0, 3));
  for (int s = 0; s < spikes; ++s)
    m.at(static_cast<int>(rng.uniform_int(0, rows - 1)), static_cast<int>(rng.uniform_int(0, cols - 1))) +=
        rng.uniform(-0.02, 0.06);
  for (double& h : m.data()) h = std::clamp(h, 0.005, 0.19);
  return m;
}

inline HeightMap rotate90(const HeightMap& m) {
  // (r, c) -> (c, rows - 1 - r)
  HeightMap out(m.cols(), m.rows(), m.cell_size());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) out.at(c, m.rows() - 1 - r) = m.at(r, c);
  return out;
}

/// Plain-loop volume.
inline double volume_oracle(const HeightMap& m) {
  double v = 0.0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) v += m.at(r, c);
  return v * m.cell_size() * m.cell_size();
}

/// Largest slope excess over all ordered neighbour pairs, 8-neighbourhood.
inline double slope_excess_oracle(const HeightMap& m, double angle) {
  double worst = 0.0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c)
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if ((dr == 0 && dc == 0) || !m.contains(r + dr, c + dc)) continue;
          const double dist = m.cell_size() * std::sqrt(double(dr * dr + dc * dc));
          worst = std::max(worst, m.at(r, c) - m.at(r + dr, c + dc) - dist * std::tan(angle));
        }
  return worst;
}

/// Straightforward Jacobi relaxation: every cell looks at all 8 neighbours
/// and sheds k * excess / 2 to each lower one, all moves applied together.
inline HeightMap relax_oracle(HeightMap m, double angle, double k, int sweeps, double stop = 0.0) {
  for (int s = 0; s < sweeps; ++s) {
    std::vector<double> delta(m.size(), 0.0);
    double worst = 0.0;
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c)
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            if ((dr == 0 && dc == 0) || !m.contains(r + dr, c + dc)) continue;
            const double dist = m.cell_size() * std::sqrt(double(dr * dr + dc * dc));
            const double excess = m.at(r, c) - m.at(r + dr, c + dc) - dist * std::tan(angle);
            if (excess <= 0.0) continue;
            worst = std::max(worst, excess);
            delta[m.index(r, c)] -= 0.5 * k * excess;
            delta[m.index(r + dr, c + dc)] += 0.5 * k * excess;
          }
    if (worst <= stop) break;
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += delta[i];
  }
  return m;
}

inline double max_abs_diff(const HeightMap& a, const HeightMap& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Result of a multi-case property check; `detail` names the first failure.
struct CheckResult {
  bool ok = true;
  std::string detail;
  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

}  // namespace granular::testing
