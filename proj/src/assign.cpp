#include "masktrack/assign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace masktrack::assign {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One Dijkstra-style augmenting path from cur_row (Crouse's variant of
// Jonker-Volgenant). cost is row-major nr x nc with nr <= nc.
int augmenting_path(int nc, const std::vector<double>& cost, int nr_stride,
                    std::vector<double>& u, std::vector<double>& v, std::vector<int>& path,
                    std::vector<int>& row4col, std::vector<double>& shortest,
                    std::vector<char>& sr, std::vector<char>& sc, std::vector<int>& remaining,
                    int cur_row, double* out_min) {
  (void)nr_stride;
  double min_val = 0.0;
  int num_remaining = nc;
  for (int j = 0; j < nc; ++j) remaining[j] = j;
  std::fill(shortest.begin(), shortest.end(), kInf);
  std::fill(sc.begin(), sc.end(), 0);

  int i = cur_row;
  int sink = -1;
  while (sink == -1) {
    sr[i] = 1;
    int index = -1;
    double lowest = kInf;
    for (int it = 0; it < num_remaining; ++it) {
      const int j = remaining[it];
      const double r = min_val + cost[static_cast<std::size_t>(i) * nc + j] - u[i] - v[j];
      if (r < shortest[j]) {
        path[j] = i;
        shortest[j] = r;
      }
      // Prefer the smallest reduced cost; among equals prefer an unassigned
      // column so the path terminates sooner (scan order fixes the rest).
      if (shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == -1 && index != -1 &&
                                   row4col[remaining[index]] != -1)) {
        lowest = shortest[j];
        index = it;
      }
    }
    min_val = lowest;
    if (index == -1 || min_val == kInf) return -1;
    const int j = remaining[index];
    if (row4col[j] == -1)
      sink = j;
    else
      i = row4col[j];
    sc[j] = 1;
    remaining[index] = remaining[--num_remaining];
  }
  *out_min = min_val;
  return sink;
}

// Solves min-cost assignment for nr <= nc; fills col4row (size nr).
void solve_rect(int nr, int nc, const std::vector<double>& cost, std::vector<int>& col4row) {
  std::vector<double> u(nr, 0.0), v(nc, 0.0), shortest(nc, 0.0);
  std::vector<int> path(nc, -1), row4col(nc, -1), remaining(nc, 0);
  std::vector<char> sr(nr, 0), sc(nc, 0);
  col4row.assign(nr, -1);

  for (int cur_row = 0; cur_row < nr; ++cur_row) {
    std::fill(sr.begin(), sr.end(), 0);
    double min_val = 0.0;
    int sink = augmenting_path(nc, cost, nr, u, v, path, row4col, shortest, sr, sc, remaining,
                               cur_row, &min_val);
    if (sink < 0) throw std::runtime_error("hungarian: no augmenting path (internal)");

    u[cur_row] += min_val;
    for (int i = 0; i < nr; ++i)
      if (sr[i] && i != cur_row) u[i] += min_val - shortest[col4row[i]];
    for (int j = 0; j < nc; ++j)
      if (sc[j]) v[j] -= min_val - shortest[j];

    int j = sink;
    for (;;) {
      const int i = path[j];
      row4col[j] = i;
      std::swap(col4row[i], j);
      if (i == cur_row) break;
    }
  }
}

// Pairwise canonicalization toward the lexicographically smallest pair list
// among equal-cost optima: swap columns between two matched rows, or move a
// match to an earlier unmatched row, whenever total cost is unchanged. Every
// accepted change strictly decreases the lexicographic rank of the pair list,
// so the sweep terminates; the guard bounds degenerate inputs.
void lex_normalize(const CostMatrix& cost, std::vector<int>& col4row) {
  const int nr = cost.rows;
  const auto sweep_once = [&]() -> bool {
    for (int r1 = 0; r1 < nr; ++r1) {
      if (col4row[r1] < 0) {
        // Prefer matching an earlier row when a later matched row costs the same.
        for (int r2 = r1 + 1; r2 < nr; ++r2) {
          if (col4row[r2] >= 0 && cost.at(r1, col4row[r2]) == cost.at(r2, col4row[r2])) {
            std::swap(col4row[r1], col4row[r2]);
            return true;
          }
        }
        continue;
      }
      for (int r2 = r1 + 1; r2 < nr; ++r2) {
        if (col4row[r2] < 0) continue;
        const int c1 = col4row[r1], c2 = col4row[r2];
        if (c2 < c1 && cost.at(r1, c1) + cost.at(r2, c2) == cost.at(r1, c2) + cost.at(r2, c1)) {
          std::swap(col4row[r1], col4row[r2]);
          return true;
        }
      }
    }
    return false;
  };
  long guard = static_cast<long>(nr) * cost.cols * 4 + 64;
  while (guard-- > 0 && sweep_once()) {
  }
}

}  // namespace

Assignment hungarian(const CostMatrix& cost, Sense sense) {
  for (double x : cost.values)
    if (!std::isfinite(x)) throw std::invalid_argument("hungarian: non-finite cost entry");

  Assignment out;
  if (cost.rows == 0 || cost.cols == 0) {
    for (int r = 0; r < cost.rows; ++r) out.unmatched_rows.push_back(r);
    for (int c = 0; c < cost.cols; ++c) out.unmatched_cols.push_back(c);
    return out;
  }

  const bool transpose = cost.rows > cost.cols;
  const int nr = transpose ? cost.cols : cost.rows;
  const int nc = transpose ? cost.rows : cost.cols;
  std::vector<double> work(static_cast<std::size_t>(nr) * nc);
  for (int r = 0; r < nr; ++r)
    for (int c = 0; c < nc; ++c) {
      const double v = transpose ? cost.at(c, r) : cost.at(r, c);
      work[static_cast<std::size_t>(r) * nc + c] = sense == Sense::Maximize ? -v : v;
    }

  std::vector<int> col4row;
  solve_rect(nr, nc, work, col4row);

  std::vector<int> assigned(cost.rows, -1);
  if (transpose) {
    for (int r = 0; r < nr; ++r) assigned[col4row[r]] = r;
  } else {
    for (int r = 0; r < nr; ++r) assigned[r] = col4row[r];
  }
  lex_normalize(cost, assigned);

  std::vector<char> col_used(cost.cols, 0);
  for (int r = 0; r < cost.rows; ++r) {
    if (assigned[r] >= 0) {
      out.pairs.emplace_back(r, assigned[r]);
      out.total_cost += cost.at(r, assigned[r]);
      col_used[assigned[r]] = 1;
    } else {
      out.unmatched_rows.push_back(r);
    }
  }
  for (int c = 0; c < cost.cols; ++c)
    if (!col_used[c]) out.unmatched_cols.push_back(c);
  return out;
}

MatchResult associate(const std::vector<RleMask>& seg, const std::vector<RleMask>& prop,
                      double iou_floor) {
  if (iou_floor < 0.0 || iou_floor >= 1.0)
    throw std::invalid_argument("associate: iou_floor must be in [0, 1)");

  CostMatrix iou(static_cast<int>(seg.size()), static_cast<int>(prop.size()));
  for (int i = 0; i < iou.rows; ++i)
    for (int j = 0; j < iou.cols; ++j) iou.at(i, j) = mask_iou(seg[i], prop[j]);

  const Assignment a = hungarian(iou, Sense::Maximize);

  MatchResult res;
  std::vector<char> seg_matched(seg.size(), 0), prop_matched(prop.size(), 0);
  for (const auto& [s, p] : a.pairs) {
    const double v = iou.at(s, p);
    if (v > iou_floor) {  // strictly higher than the floor
      res.matches.push_back({s, p, v});
      seg_matched[s] = 1;
      prop_matched[p] = 1;
    }
  }
  for (int s = 0; s < iou.rows; ++s)
    if (!seg_matched[s]) res.unmatched_seg.push_back(s);
  for (int p = 0; p < iou.cols; ++p)
    if (!prop_matched[p]) res.unmatched_prop.push_back(p);
  return res;
}

}  // namespace masktrack::assign
