#pragma once

// Independent reference implementations used only by tests. These deliberately
// avoid the library's code paths: plain scans, exhaustive enumeration, naive
// loops. Keep them dumb.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "masktrack/mask.hpp"
#include "masktrack/rng.hpp"

namespace oracles {

// Pixel-counting IoU over dense grids.
inline double dense_iou(const masktrack::DenseMask& a, const masktrack::DenseMask& b) {
  long long inter = 0, uni = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      const bool va = a.at(y, x), vb = b.at(y, x);
      inter += (va && vb) ? 1 : 0;
      uni += (va || vb) ? 1 : 0;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Exhaustive optimal assignment: tries every injective row->col mapping.
// Each candidate total is summed in ascending original-row order so that an
// equal selected set produces the bit-identical double. Feasible only for
// min(rows, cols) <= ~8.
inline double brute_force_assignment(const std::vector<std::vector<double>>& cost, bool maximize) {
  const int rows = static_cast<int>(cost.size());
  const int cols = rows ? static_cast<int>(cost[0].size()) : 0;
  const bool transpose = rows > cols;
  const int nr = transpose ? cols : rows;
  const int nc = transpose ? rows : cols;

  double best = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
  std::vector<int> chosen(nr, -1);
  std::vector<char> used(nc, 0);
  std::function<void(int)> rec = [&](int r) {
    if (r == nr) {
      std::vector<std::pair<int, int>> pairs;  // (orig_row, orig_col)
      for (int i = 0; i < nr; ++i)
        pairs.emplace_back(transpose ? chosen[i] : i, transpose ? i : chosen[i]);
      std::sort(pairs.begin(), pairs.end());
      double acc = 0.0;
      for (const auto& [rr, cc] : pairs) acc += cost[rr][cc];
      if (maximize ? acc > best : acc < best) best = acc;
      return;
    }
    for (int c = 0; c < nc; ++c) {
      if (used[c]) continue;
      used[c] = 1;
      chosen[r] = c;
      rec(r + 1);
      used[c] = 0;
    }
  };
  rec(0);
  return nr == 0 ? 0.0 : best;
}

// Random blobby mask for property tests: sprinkles filled rectangles/points.
inline masktrack::DenseMask random_mask(masktrack::Rng& rng, int h, int w) {
  masktrack::DenseMask m(h, w);
  const int blobs = rng.uniform_int(0, 4);
  for (int b = 0; b < blobs; ++b) {
    const int y0 = rng.uniform_int(0, h - 1);
    const int x0 = rng.uniform_int(0, w - 1);
    const int bh = rng.uniform_int(1, std::max(1, h / 2));
    const int bw = rng.uniform_int(1, std::max(1, w / 2));
    for (int y = y0; y < std::min(h, y0 + bh); ++y)
      for (int x = x0; x < std::min(w, x0 + bw); ++x) m.at(y, x) = 1;
  }
  // salt
  const int salt = rng.uniform_int(0, h * w / 8 + 1);
  for (int s = 0; s < salt; ++s)
    m.at(rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)) = rng.uniform_int(0, 1);
  return m;
}

inline masktrack::Image random_image(masktrack::Rng& rng, int h, int w) {
  masktrack::Image img(h, w);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace oracles
