#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "masktrack/assign.hpp"
#include "masktrack/rng.hpp"
#include "support/oracles.hpp"

using namespace masktrack;
using assign::CostMatrix;
using assign::Sense;

namespace {

CostMatrix make_cost(const std::vector<std::vector<double>>& rows) {
  CostMatrix m(static_cast<int>(rows.size()), rows.empty() ? 0 : static_cast<int>(rows[0].size()));
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) m.at(r, c) = rows[r][c];
  return m;
}

}  // namespace

TEST_CASE("identity cost picks the diagonal") {
  CostMatrix m(3, 3, 1.0);
  for (int i = 0; i < 3; ++i) m.at(i, i) = 0.0;
  const auto a = assign::hungarian(m, Sense::Minimize);
  CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});
  CHECK(a.total_cost == 0.0);
}

TEST_CASE("2x2 example where greedy would fail") {
  const auto a = assign::hungarian(make_cost({{1, 2}, {2, 4}}), Sense::Minimize);
  CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}});
  CHECK(a.total_cost == 4.0);  // brute force: 1+4=5 vs 2+2=4
}

TEST_CASE("rectangular 1x2 reports the unmatched column") {
  const auto a = assign::hungarian(make_cost({{5, 3}}), Sense::Minimize);
  CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 1}});
  CHECK(a.unmatched_cols == std::vector<int>{0});
  CHECK(a.unmatched_rows.empty());
}

TEST_CASE("non-finite costs are rejected") {
  CostMatrix m(2, 2, 0.0);
  m.at(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(assign::hungarian(m, Sense::Minimize), std::invalid_argument);
  m.at(0, 1) = std::nan("");
  CHECK_THROWS_AS(assign::hungarian(m, Sense::Minimize), std::invalid_argument);
}

TEST_CASE("matches the exhaustive optimum on random matrices up to 7x7") {
  Rng rng(123456);
  for (int trial = 0; trial < 1000; ++trial) {
    const int rows = rng.uniform_int(1, 7);
    const int cols = rng.uniform_int(1, 7);
    std::vector<std::vector<double>> grid(rows, std::vector<double>(cols));
    CostMatrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m.at(r, c) = grid[r][c] = rng.uniform(-10.0, 10.0);

    const bool maximize = rng.bernoulli(0.5);
    const auto a = assign::hungarian(m, maximize ? Sense::Maximize : Sense::Minimize);
    CHECK(static_cast<int>(a.pairs.size()) == std::min(rows, cols));
    CHECK(a.total_cost == oracles::brute_force_assignment(grid, maximize));
  }
}

TEST_CASE("integer matrices with ties still hit the exhaustive optimum") {
  Rng rng(777);
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = rng.uniform_int(1, 5);
    const int cols = rng.uniform_int(1, 5);
    std::vector<std::vector<double>> grid(rows, std::vector<double>(cols));
    CostMatrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m.at(r, c) = grid[r][c] = rng.uniform_int(0, 3);
    const auto a = assign::hungarian(m, Sense::Minimize);
    CHECK(a.total_cost == oracles::brute_force_assignment(grid, false));
  }
}

TEST_CASE("all-equal costs normalize to the lexicographically smallest pairing") {
  const auto a = assign::hungarian(CostMatrix(4, 4, 2.5), Sense::Minimize);
  CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}, {3, 3}});

  // rows > cols: the earliest rows take the matches
  const auto b = assign::hungarian(CostMatrix(3, 2, 1.0), Sense::Maximize);
  CHECK(b.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  CHECK(b.unmatched_rows == std::vector<int>{2});
}

TEST_CASE("permuting rows permutes the assignment identically") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(2, 6);
    CostMatrix m(n, n);
    for (auto& v : m.values) v = rng.uniform(0.0, 1.0);

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);

    CostMatrix pm(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) pm.at(r, c) = m.at(perm[r], c);

    const auto a = assign::hungarian(m, Sense::Minimize);
    const auto b = assign::hungarian(pm, Sense::Minimize);
    std::vector<int> col_of(n), col_of_p(n);
    for (const auto& [r, c] : a.pairs) col_of[r] = c;
    for (const auto& [r, c] : b.pairs) col_of_p[r] = c;
    for (int r = 0; r < n; ++r) CHECK(col_of_p[r] == col_of[perm[r]]);
  }
}

TEST_CASE("a 200x200 random instance solves well under a second") {
  Rng rng(99);
  CostMatrix m(200, 200);
  for (auto& v : m.values) v = rng.uniform(0.0, 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = assign::hungarian(m, Sense::Minimize);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(a.pairs.size() == 200);
  CHECK(sec < 1.0);
}

namespace {

RleMask rect_rle(int h, int w, int y0, int x0, int y1, int x1) {
  DenseMask m(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return rle_encode(m);
}

}  // namespace

TEST_CASE("associate pairs by maximum IoU and applies the strict floor") {
  // seg0 overlaps prop1 only (IoU 0.8), seg1 overlaps prop0 only (IoU 0.6)
  const int h = 10, w = 20;
  std::vector<RleMask> seg = {rect_rle(h, w, 0, 0, 4, 5), rect_rle(h, w, 5, 10, 10, 14)};
  std::vector<RleMask> prop = {rect_rle(h, w, 5, 10, 10, 16), rect_rle(h, w, 0, 0, 5, 5)};
  // iou(seg0,prop1) = 20/25 = 0.8 ; iou(seg1,prop0) = 20/30 ≈ 0.667
  const auto r = assign::associate(seg, prop, 0.1);
  REQUIRE(r.matches.size() == 2);
  CHECK(r.matches[0].seg == 0);
  CHECK(r.matches[0].prop == 1);
  CHECK(r.matches[0].iou == doctest::Approx(0.8));
  CHECK(r.matches[1].seg == 1);
  CHECK(r.matches[1].prop == 0);
  CHECK(r.unmatched_seg.empty());
  CHECK(r.unmatched_prop.empty());
}

TEST_CASE("associate drops matches at or below the floor") {
  const int h = 10, w = 10;
  // overlap of exactly 0.05: 1 shared pixel, union 20... build iou 1/19 < 0.1
  std::vector<RleMask> seg = {rect_rle(h, w, 0, 0, 2, 5)};
  std::vector<RleMask> prop = {rect_rle(h, w, 1, 4, 3, 9)};
  const auto r = assign::associate(seg, prop, 0.1);
  CHECK(r.matches.empty());
  CHECK(r.unmatched_seg == std::vector<int>{0});
  CHECK(r.unmatched_prop == std::vector<int>{0});

  // IoU exactly equal to the floor is NOT associated ("higher than")
  std::vector<RleMask> a = {rect_rle(h, w, 0, 0, 1, 2)};   // 2 px
  std::vector<RleMask> b = {rect_rle(h, w, 0, 1, 1, 10)};  // 9 px, inter 1, union 10
  const auto r2 = assign::associate(a, b, 0.1);
  CHECK(mask_iou(a[0], b[0]) == 0.1);
  CHECK(r2.matches.empty());
}

TEST_CASE("associate with an empty propagation set leaves all seg unmatched") {
  std::vector<RleMask> seg = {rect_rle(4, 4, 0, 0, 2, 2)};
  const auto r = assign::associate(seg, {}, 0.1);
  CHECK(r.matches.empty());
  CHECK(r.unmatched_seg == std::vector<int>{0});
  CHECK(r.unmatched_prop.empty());
}

TEST_CASE("no returned match ever sits at or below the floor") {
  Rng rng(1312);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 16, w = 16;
    std::vector<RleMask> seg, prop;
    const int ns = rng.uniform_int(0, 5), np = rng.uniform_int(0, 5);
    for (int i = 0; i < ns; ++i) seg.push_back(rle_encode(oracles::random_mask(rng, h, w)));
    for (int i = 0; i < np; ++i) prop.push_back(rle_encode(oracles::random_mask(rng, h, w)));
    const double floor = rng.uniform(0.0, 0.5);
    const auto r = assign::associate(seg, prop, floor);
    for (const auto& m : r.matches) CHECK(m.iou > floor);
    CHECK(r.matches.size() * 2 + r.unmatched_seg.size() + r.unmatched_prop.size() ==
          seg.size() + prop.size());
  }
}
