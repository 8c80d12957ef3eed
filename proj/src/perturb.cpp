#include "masktrack/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace masktrack {

namespace {

std::vector<std::pair<int, int>> set_pixels(const DenseMask& m) {
  std::vector<std::pair<int, int>> px;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x)) px.emplace_back(y, x);
  return px;
}

// Set pixels with an unset 4-neighbor (canvas border counts as unset).
std::vector<std::pair<int, int>> contour_pixels(const DenseMask& m) {
  std::vector<std::pair<int, int>> px;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == m.height - 1 || x == m.width - 1;
      if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1))
        px.emplace_back(y, x);
    }
  return px;
}

void fill_disc(DenseMask& m, int cy, int cx, int r, std::uint8_t value) {
  for (int y = std::max(0, cy - r); y <= std::min(m.height - 1, cy + r); ++y)
    for (int x = std::max(0, cx - r); x <= std::min(m.width - 1, cx + r); ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.at(y, x) = value;
}

}  // namespace

DenseMask dilate(const DenseMask& m, int radius) {
  if (radius <= 0) return m;
  DenseMask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny >= 0 && ny < m.height && nx >= 0 && nx < m.width) out.at(ny, nx) = 1;
        }
    }
  return out;
}

DenseMask erode(const DenseMask& m, int radius) {
  if (radius <= 0) return m;
  DenseMask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      bool keep = true;
      for (int dy = -radius; keep && dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= m.height || nx < 0 || nx >= m.width || !m.at(ny, nx)) {
            keep = false;
            break;
          }
        }
      if (keep) out.at(y, x) = 1;
    }
  return out;
}

DenseMask translate(const DenseMask& m, int dx, int dy) {
  DenseMask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y) {
    const int ny = y + dy;
    if (ny < 0 || ny >= m.height) continue;
    for (int x = 0; x < m.width; ++x) {
      const int nx = x + dx;
      if (nx >= 0 && nx < m.width && m.at(y, x)) out.at(ny, nx) = 1;
    }
  }
  return out;
}

DenseMask punch_holes(const DenseMask& m, int holes, int max_radius, Rng& rng) {
  const auto px = set_pixels(m);
  if (px.empty()) return m;
  DenseMask out = m;
  for (int i = 0; i < holes; ++i) {
    const auto [cy, cx] = px[rng.uniform_int(0, static_cast<int>(px.size()) - 1)];
    fill_disc(out, cy, cx, rng.uniform_int(1, std::max(1, max_radius)), 0);
  }
  return out;
}

DenseMask boundary_jitter(const DenseMask& m, double level, int band_radius, Rng& rng) {
  const DenseMask outer = dilate(m, band_radius);
  const DenseMask inner = erode(m, band_radius);
  DenseMask out = m;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (outer.at(y, x) && !inner.at(y, x) && rng.bernoulli(level)) out.at(y, x) ^= 1;
  return out;
}

DenseMask contour_blob(const DenseMask& m, int max_radius, bool add, Rng& rng) {
  const auto px = contour_pixels(m);
  if (px.empty()) return m;
  const auto [cy, cx] = px[rng.uniform_int(0, static_cast<int>(px.size()) - 1)];
  DenseMask out = m;
  fill_disc(out, cy, cx, rng.uniform_int(1, std::max(1, max_radius)), add ? 1 : 0);
  return out;
}

DenseMask random_degradation(const DenseMask& m, double strength, Rng& rng) {
  const double side = std::sqrt(static_cast<double>(area(m)));
  const int scale = std::max(1, static_cast<int>(std::lround(side * strength * 0.5)));
  switch (rng.uniform_int(0, 5)) {
    case 0:
      return dilate(m, rng.uniform_int(1, scale));
    case 1:
      return erode(m, rng.uniform_int(1, scale));
    case 2:
      return punch_holes(m, rng.uniform_int(1, 3), std::max(2, scale), rng);
    case 3:
      return boundary_jitter(m, rng.uniform(0.15, 0.45) * (0.5 + strength), 1, rng);
    case 4: {
      const int s = std::max(1, scale);
      int dx = 0, dy = 0;
      while (dx == 0 && dy == 0) {
        dx = rng.uniform_int(-s, s);
        dy = rng.uniform_int(-s, s);
      }
      return translate(m, dx, dy);
    }
    default:
      return contour_blob(m, std::max(2, scale), rng.bernoulli(0.5), rng);
  }
}

}  // namespace masktrack
