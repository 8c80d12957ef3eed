#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace masktrack {

// Row-major binary occupancy grid.
struct DenseMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;  // height*width entries, each 0 or 1

  DenseMask() = default;
  DenseMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {
    if (h < 1 || w < 1) throw std::invalid_argument("DenseMask: canvas must be at least 1x1");
  }

  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }

  bool same_canvas(const DenseMask& o) const { return height == o.height && width == o.width; }
  bool operator==(const DenseMask& o) const = default;
};

// Uncompressed run-length encoding, COCO convention: column-major scan order
// (column 0 top to bottom, then column 1, ...), first count is the run of
// zeros and may itself be zero, runs alternate 0,1,0,1,...
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  bool same_canvas(const RleMask& o) const { return height == o.height && width == o.width; }
  bool operator==(const RleMask& o) const = default;
};

// Half-open pixel box: x in [x0, x1), y in [y0, y1).
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const BBox& o) const = default;
};

// Planar RGB image, values in [0, 1]. Plane c occupies data[c*h*w .. (c+1)*h*w).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, 0.f) {
    if (h < 1 || w < 1) throw std::invalid_argument("Image: canvas must be at least 1x1");
  }

  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const Image& o) const = default;
};

// Channel-major (c, h, w) real tensor.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Throws std::invalid_argument when the RLE invariants do not hold
// (sum of counts != h*w, interior zero count, bad canvas).
void validate(const RleMask& rle);

RleMask rle_encode(const DenseMask& mask);
DenseMask rle_decode(const RleMask& rle);

std::uint64_t area(const DenseMask& m);
std::uint64_t area(const RleMask& m);

struct OverlapCounts {
  std::uint64_t inter = 0;
  std::uint64_t uni = 0;
};

// Exact integer intersection/union pixel counts.
OverlapCounts overlap_counts(const DenseMask& a, const DenseMask& b);
OverlapCounts overlap_counts(const RleMask& a, const RleMask& b);

// |a∩b| / |a∪b|; two empty masks give 0 so that empty proposals never associate.
double mask_iou(const DenseMask& a, const DenseMask& b);
double mask_iou(const RleMask& a, const RleMask& b);

bool intersects(const DenseMask& a, const DenseMask& b);
bool intersects(const RleMask& a, const RleMask& b);

// Minimal box containing all set pixels. Throws on an empty mask.
BBox tight_bbox(const DenseMask& m);
BBox tight_bbox(const RleMask& m);

// Stacks [RGB, m1, RGB, m2] cropped to `box` and resampled to out_size x out_size.
// Image channels are bilinear with edge clamping at the box border; mask channels
// are nearest-neighbor with pixel-center sampling so values stay binary.
Tensor crop_resize(const Image& img, const DenseMask& m1, const DenseMask& m2, const BBox& box,
                   int out_size);

}  // namespace masktrack
