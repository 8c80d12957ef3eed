#pragma once

#include <utility>
#include <vector>

#include "masktrack/mask.hpp"

namespace masktrack::assign {

struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major rows*cols

  CostMatrix() = default;
  CostMatrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
};

enum class Sense { Minimize, Maximize };

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
  double total_cost = 0.0;
};

// Optimal rectangular assignment of cardinality min(rows, cols) via shortest
// augmenting paths. Equal-cost optima are normalized toward the
// lexicographically smallest pair list. Throws on non-finite entries.
Assignment hungarian(const CostMatrix& cost, Sense sense);

struct MatchResult {
  struct Match {
    int seg = -1;
    int prop = -1;
    double iou = 0.0;
  };
  std::vector<Match> matches;  // sorted by seg index
  std::vector<int> unmatched_seg;
  std::vector<int> unmatched_prop;
};

// Builds the IoU matrix between the two mask sets, assigns by maximum total
// IoU, then demotes matched pairs with iou <= iou_floor to the unmatched
// lists (the paper associates only pairs with IoU strictly higher than the floor).
MatchResult associate(const std::vector<RleMask>& seg, const std::vector<RleMask>& prop,
                      double iou_floor);

}  // namespace masktrack::assign
