#include "masktrack/mask.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace masktrack {

void validate(const RleMask& rle) {
  if (rle.height < 1 || rle.width < 1)
    throw std::invalid_argument("RleMask: canvas must be at least 1x1");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    if (rle.counts[i] == 0 && i != 0)
      throw std::invalid_argument("RleMask: zero count only allowed in leading position");
    total += rle.counts[i];
  }
  const std::uint64_t expect =
      static_cast<std::uint64_t>(rle.height) * static_cast<std::uint64_t>(rle.width);
  if (total != expect) throw std::invalid_argument("RleMask: counts do not sum to height*width");
}

RleMask rle_encode(const DenseMask& mask) {
  RleMask out;
  out.height = mask.height;
  out.width = mask.width;
  // Column-major scan over a row-major grid; the codec owns the transposition.
  std::uint32_t run = 0;
  std::uint8_t cur = 0;
  for (int x = 0; x < mask.width; ++x) {
    for (int y = 0; y < mask.height; ++y) {
      const std::uint8_t v = mask.at(y, x) ? 1 : 0;
      if (v != cur) {
        out.counts.push_back(run);
        run = 0;
        cur = v;
      }
      ++run;
    }
  }
  out.counts.push_back(run);
  return out;
}

DenseMask rle_decode(const RleMask& rle) {
  validate(rle);
  DenseMask out(rle.height, rle.width);
  std::uint64_t pos = 0;
  std::uint8_t cur = 0;
  for (std::uint32_t c : rle.counts) {
    if (cur) {
      for (std::uint32_t k = 0; k < c; ++k) {
        const std::uint64_t p = pos + k;
        const int x = static_cast<int>(p / rle.height);
        const int y = static_cast<int>(p % rle.height);
        out.at(y, x) = 1;
      }
    }
    pos += c;
    cur = !cur;
  }
  return out;
}

std::uint64_t area(const DenseMask& m) {
  std::uint64_t a = 0;
  for (std::uint8_t b : m.bits) a += b ? 1 : 0;
  return a;
}

std::uint64_t area(const RleMask& m) {
  // Odd-indexed counts are the one-runs.
  std::uint64_t a = 0;
  for (std::size_t i = 1; i < m.counts.size(); i += 2) a += m.counts[i];
  return a;
}

OverlapCounts overlap_counts(const DenseMask& a, const DenseMask& b) {
  if (!a.same_canvas(b)) throw std::invalid_argument("overlap_counts: canvas mismatch");
  OverlapCounts c;
  const std::size_t n = a.bits.size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool va = a.bits[i] != 0, vb = b.bits[i] != 0;
    c.inter += (va && vb) ? 1 : 0;
    c.uni += (va || vb) ? 1 : 0;
  }
  return c;
}

OverlapCounts overlap_counts(const RleMask& a, const RleMask& b) {
  if (!a.same_canvas(b)) throw std::invalid_argument("overlap_counts: canvas mismatch");
  OverlapCounts c;
  // Two-pointer sweep over the run boundaries of both masks.
  std::size_t ia = 0, ib = 0;
  std::uint64_t ra = ia < a.counts.size() ? a.counts[ia] : 0;
  std::uint64_t rb = ib < b.counts.size() ? b.counts[ib] : 0;
  bool va = false, vb = false;
  std::uint64_t left =
      static_cast<std::uint64_t>(a.height) * static_cast<std::uint64_t>(a.width);
  while (left > 0) {
    while (ra == 0 && ia + 1 < a.counts.size()) {
      ra = a.counts[++ia];
      va = !va;
    }
    while (rb == 0 && ib + 1 < b.counts.size()) {
      rb = b.counts[++ib];
      vb = !vb;
    }
    const std::uint64_t step = std::min({ra, rb, left});
    if (step == 0) throw std::invalid_argument("overlap_counts: malformed RLE counts");
    if (va && vb) c.inter += step;
    if (va || vb) c.uni += step;
    ra -= step;
    rb -= step;
    left -= step;
  }
  return c;
}

namespace {

template <typename M>
double iou_from_counts(const M& a, const M& b) {
  const OverlapCounts c = overlap_counts(a, b);
  if (c.uni == 0) return 0.0;  // both empty: defined as 0, never associate
  return static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

}  // namespace

double mask_iou(const DenseMask& a, const DenseMask& b) { return iou_from_counts(a, b); }
double mask_iou(const RleMask& a, const RleMask& b) { return iou_from_counts(a, b); }

bool intersects(const DenseMask& a, const DenseMask& b) {
  if (!a.same_canvas(b)) throw std::invalid_argument("intersects: canvas mismatch");
  const std::size_t n = a.bits.size();
  for (std::size_t i = 0; i < n; ++i)
    if (a.bits[i] && b.bits[i]) return true;
  return false;
}

bool intersects(const RleMask& a, const RleMask& b) {
  return overlap_counts(a, b).inter > 0;
}

BBox tight_bbox(const DenseMask& m) {
  int minx = m.width, miny = m.height, maxx = -1, maxy = -1;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      minx = std::min(minx, x);
      maxx = std::max(maxx, x);
      miny = std::min(miny, y);
      maxy = std::max(maxy, y);
    }
  }
  if (maxx < 0) throw std::invalid_argument("tight_bbox: empty mask");
  return BBox{minx, miny, maxx + 1, maxy + 1};
}

BBox tight_bbox(const RleMask& m) { return tight_bbox(rle_decode(m)); }

Tensor crop_resize(const Image& img, const DenseMask& m1, const DenseMask& m2, const BBox& box,
                   int out_size) {
  if (img.height != m1.height || img.width != m1.width || !m1.same_canvas(m2))
    throw std::invalid_argument("crop_resize: canvas mismatch");
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > img.width || box.y1 > img.height)
    throw std::invalid_argument("crop_resize: box outside canvas");
  if (box.width() <= 0 || box.height() <= 0)
    throw std::invalid_argument("crop_resize: degenerate box");
  if (out_size < 1) throw std::invalid_argument("crop_resize: out_size must be positive");

  Tensor out(8, out_size, out_size);
  const double sx = static_cast<double>(box.width()) / out_size;
  const double sy = static_cast<double>(box.height()) / out_size;

  for (int oy = 0; oy < out_size; ++oy) {
    // Pixel-center mapping: output center (oy+0.5) lands at box.y0 + (oy+0.5)*sy.
    const double fy = box.y0 + (oy + 0.5) * sy - 0.5;
    const int ny = box.y0 + static_cast<int>((oy + 0.5) * sy);  // nearest source row
    const int nyc = std::clamp(ny, box.y0, box.y1 - 1);
    const double fy0 = std::floor(fy);
    const int y0 = std::clamp(static_cast<int>(fy0), box.y0, box.y1 - 1);
    const int y1 = std::clamp(y0 + 1, box.y0, box.y1 - 1);
    const double wy = std::clamp(fy - fy0, 0.0, 1.0);

    for (int ox = 0; ox < out_size; ++ox) {
      const double fx = box.x0 + (ox + 0.5) * sx - 0.5;
      const int nx = box.x0 + static_cast<int>((ox + 0.5) * sx);
      const int nxc = std::clamp(nx, box.x0, box.x1 - 1);
      const double fx0 = std::floor(fx);
      const int x0 = std::clamp(static_cast<int>(fx0), box.x0, box.x1 - 1);
      const int x1 = std::clamp(x0 + 1, box.x0, box.x1 - 1);
      const double wx = std::clamp(fx - fx0, 0.0, 1.0);

      for (int c = 0; c < 3; ++c) {
        const double v00 = img.at(c, y0, x0), v01 = img.at(c, y0, x1);
        const double v10 = img.at(c, y1, x0), v11 = img.at(c, y1, x1);
        const double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        out.at(c, oy, ox) = v;
        out.at(c + 4, oy, ox) = v;
      }
      out.at(3, oy, ox) = m1.at(nyc, nxc) ? 1.0 : 0.0;
      out.at(7, oy, ox) = m2.at(nyc, nxc) ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace masktrack
