#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "masktrack/eval.hpp"
#include "masktrack/rng.hpp"
#include "support/eval_oracle.hpp"
#include "support/oracles.hpp"

using namespace masktrack;
using namespace masktrack::eval;

namespace {

RleMask rect_rle(int h, int w, int y0, int x0, int y1, int x1) {
  DenseMask m(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return rle_encode(m);
}

GtAnnotations simple_gt(int n_frames, const RleMask& m) {
  GtAnnotations gt;
  gt.videos = {{1, m.height, m.width, n_frames}};
  gt.categories = {{1, "person"}, {8, "box"}};
  GtTrack t;
  t.id = 1;
  t.video_id = 1;
  t.category_id = 8;
  t.segmentations.assign(n_frames, m);
  gt.tracks.push_back(std::move(t));
  return gt;
}

ResultTrack make_result(int video, int cat, double score,
                        std::vector<std::optional<RleMask>> segs) {
  ResultTrack r;
  r.video_id = video;
  r.category_id = cat;
  r.score = score;
  r.segmentations = std::move(segs);
  return r;
}

}  // namespace

TEST_CASE("track_iou basics") {
  const RleMask m = rect_rle(16, 16, 2, 2, 10, 10);
  std::vector<std::optional<RleMask>> full(8, m);

  CHECK(track_iou(full, full) == 1.0);

  // present on exactly half the frames of a constant ground truth
  std::vector<std::optional<RleMask>> half(8, std::nullopt);
  for (int t = 0; t < 4; ++t) half[t] = m;
  CHECK(track_iou(half, full) == 0.5);

  // spatially disjoint
  std::vector<std::optional<RleMask>> other(8, rect_rle(16, 16, 11, 11, 15, 15));
  CHECK(track_iou(other, full) == 0.0);

  CHECK_THROWS_AS(track_iou(half, std::vector<std::optional<RleMask>>(3)),
                  std::invalid_argument);
}

TEST_CASE("predictions identical to ground truth score a perfect report") {
  const RleMask m = rect_rle(16, 16, 2, 2, 10, 10);
  const GtAnnotations gt = simple_gt(6, m);
  const std::vector<ResultTrack> pred = {
      make_result(1, 8, 1.0, std::vector<std::optional<RleMask>>(6, m))};
  const ApReport r = evaluate(pred, gt);
  CHECK(r.map == 1.0);
  CHECK(r.ap50 == 1.0);
  CHECK(r.ap75 == 1.0);
  CHECK(r.ar1 == 1.0);
  CHECK(r.ar10 == 1.0);
  REQUIRE(r.per_class_ap.size() == 1);  // only classes with ground truth
  CHECK(r.per_class_ap[0] == std::pair<int, double>{8, 1.0});
}

TEST_CASE("one prediction at IoU 0.6 gives class AP exactly 0.3") {
  // ground truth 10 pixels per frame; prediction covers 6 of them and nothing else
  const RleMask gt_mask = rect_rle(8, 16, 2, 2, 3, 12);    // 1x10 row
  const RleMask pred_mask = rect_rle(8, 16, 2, 2, 3, 8);   // 1x6 subset
  const GtAnnotations gt = simple_gt(5, gt_mask);
  const std::vector<ResultTrack> pred = {
      make_result(1, 8, 0.9, std::vector<std::optional<RleMask>>(5, pred_mask))};
  CHECK(track_iou(pred[0].segmentations, gt.tracks[0].segmentations) == 0.6);

  const ApReport r = evaluate(pred, gt);
  // perfect at thresholds {0.50, 0.55, 0.60}, zero above: mean = 3/10
  CHECK(r.map == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(r.ap50 == 1.0);
  CHECK(r.ap75 == 0.0);
}

TEST_CASE("empty predictions give a zero report") {
  const GtAnnotations gt = simple_gt(4, rect_rle(16, 16, 2, 2, 10, 10));
  const ApReport r = evaluate({}, gt);
  CHECK(r.map == 0.0);
  CHECK(r.ar10 == 0.0);
}

TEST_CASE("a duplicate lower-scored prediction never raises AP") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int frames = 4;
    GtAnnotations gt;
    gt.videos = {{1, 24, 24, frames}};
    gt.categories = {{8, "box"}};
    const int n_gt = rng.uniform_int(1, 2);
    for (int g = 0; g < n_gt; ++g) {
      GtTrack t;
      t.id = g + 1;
      t.video_id = 1;
      t.category_id = 8;
      const DenseMask m = oracles::random_mask(rng, 24, 24);
      if (area(m) == 0) continue;
      t.segmentations.assign(frames, rle_encode(m));
      gt.tracks.push_back(std::move(t));
    }
    if (gt.tracks.empty()) continue;

    std::vector<ResultTrack> preds;
    const int n_pred = rng.uniform_int(1, 3);
    for (int p = 0; p < n_pred; ++p) {
      const DenseMask m = oracles::random_mask(rng, 24, 24);
      preds.push_back(make_result(1, 8, rng.uniform(0.3, 1.0),
                                  std::vector<std::optional<RleMask>>(frames, rle_encode(m))));
    }
    const double base = evaluate(preds, gt).map;

    std::vector<ResultTrack> duped = preds;
    ResultTrack copy = preds[0];
    copy.score = std::max(0.0, preds[0].score - 0.2);
    duped.push_back(copy);
    CHECK(evaluate(duped, gt).map <= base + 1e-12);
  }
}

TEST_CASE("evaluation is invariant to prediction file order") {
  Rng rng(6);
  const int frames = 3;
  GtAnnotations gt;
  gt.videos = {{1, 20, 20, frames}, {2, 20, 20, frames}};
  gt.categories = {{1, "person"}, {8, "box"}};
  for (int g = 0; g < 3; ++g) {
    GtTrack t;
    t.id = g + 1;
    t.video_id = 1 + g % 2;
    t.category_id = g < 2 ? 8 : 1;
    t.segmentations.assign(frames, rect_rle(20, 20, g, g, g + 8, g + 8));
    gt.tracks.push_back(std::move(t));
  }
  std::vector<ResultTrack> preds;
  for (int p = 0; p < 5; ++p) {
    const DenseMask m = oracles::random_mask(rng, 20, 20);
    preds.push_back(make_result(1 + p % 2, p < 3 ? 8 : 1, rng.uniform(0.2, 1.0),
                                std::vector<std::optional<RleMask>>(frames, rle_encode(m))));
  }
  const ApReport a = evaluate(preds, gt);
  std::vector<ResultTrack> shuffled = {preds[3], preds[0], preds[4], preds[2], preds[1]};
  const ApReport b = evaluate(shuffled, gt);
  CHECK(a.map == b.map);
  CHECK(a.ap50 == b.ap50);
  CHECK(a.ar10 == b.ar10);
}

TEST_CASE("threshold monotonicity: AP50 bounds the mean") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int frames = 3;
    GtAnnotations gt;
    gt.videos = {{1, 20, 20, frames}};
    gt.categories = {{8, "box"}};
    GtTrack t;
    t.id = 1;
    t.video_id = 1;
    t.category_id = 8;
    const DenseMask gm = oracles::random_mask(rng, 20, 20);
    if (area(gm) == 0) continue;
    t.segmentations.assign(frames, rle_encode(gm));
    gt.tracks.push_back(std::move(t));

    std::vector<ResultTrack> preds;
    for (int p = 0; p < 2; ++p) {
      const DenseMask m = oracles::random_mask(rng, 20, 20);
      preds.push_back(make_result(1, 8, rng.uniform(0.2, 1.0),
                                  std::vector<std::optional<RleMask>>(frames, rle_encode(m))));
    }
    const ApReport r = evaluate(preds, gt);
    CHECK(r.ap50 >= r.map);
    CHECK(r.map >= r.ap75 - 1e-12);  // mean includes thresholds above 0.75
    CHECK(r.ap50 + 1e-12 >= r.ap75);
  }
}

TEST_CASE("bad inputs are rejected") {
  const RleMask m = rect_rle(16, 16, 2, 2, 10, 10);
  GtAnnotations gt = simple_gt(4, m);

  // unknown prediction category
  CHECK_THROWS_AS(
      evaluate({make_result(1, 99, 0.5, std::vector<std::optional<RleMask>>(4, m))}, gt),
      std::invalid_argument);

  // wrong frame count
  CHECK_THROWS_AS(
      evaluate({make_result(1, 8, 0.5, std::vector<std::optional<RleMask>>(3, m))}, gt),
      std::invalid_argument);

  // duplicate ground-truth ids
  GtAnnotations dup = gt;
  dup.tracks.push_back(dup.tracks[0]);
  CHECK_THROWS_AS(evaluate({}, dup), std::invalid_argument);
}

TEST_CASE("evaluate agrees exactly with the exhaustive reference on small instances") {
  Rng rng(20240809);
  int nontrivial = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int frames = rng.uniform_int(2, 4);
    const int n_videos = rng.uniform_int(1, 2);
    GtAnnotations gt;
    for (int v = 0; v < n_videos; ++v) gt.videos.push_back({v + 1, 16, 16, frames});
    gt.categories = {{1, "person"}, {8, "box"}};

    const int n_gt = rng.uniform_int(1, 3);
    for (int g = 0; g < n_gt; ++g) {
      GtTrack t;
      t.id = g + 1;
      t.video_id = rng.uniform_int(1, n_videos);
      t.category_id = rng.bernoulli(0.5) ? 8 : 1;
      bool any = false;
      for (int f = 0; f < frames; ++f) {
        const DenseMask m = oracles::random_mask(rng, 16, 16);
        if (area(m) > 0 && rng.bernoulli(0.8)) {
          t.segmentations.push_back(rle_encode(m));
          any = true;
        } else {
          t.segmentations.push_back(std::nullopt);
        }
      }
      if (any) gt.tracks.push_back(std::move(t));
    }
    if (gt.tracks.empty()) continue;

    std::vector<ResultTrack> preds;
    const int n_pred = rng.uniform_int(0, 3);
    for (int p = 0; p < n_pred; ++p) {
      std::vector<std::optional<RleMask>> segs;
      bool any = false;
      for (int f = 0; f < frames; ++f) {
        // bias predictions toward ground truth so IoUs span the thresholds
        if (!gt.tracks.empty() && rng.bernoulli(0.6)) {
          const auto& src = gt.tracks[rng.uniform_int(0, static_cast<int>(gt.tracks.size()) - 1)];
          if (src.segmentations[f].has_value()) {
            DenseMask m = rle_decode(*src.segmentations[f]);
            for (int salt = rng.uniform_int(0, 10); salt > 0; --salt)
              m.at(rng.uniform_int(0, 15), rng.uniform_int(0, 15)) ^= 1;
            if (area(m) > 0) {
              segs.push_back(rle_encode(m));
              any = true;
              continue;
            }
          }
        }
        segs.push_back(std::nullopt);
      }
      if (!any) segs[0] = rect_rle(16, 16, 0, 0, 4, 4);
      preds.push_back(make_result(rng.uniform_int(1, n_videos), rng.bernoulli(0.5) ? 8 : 1,
                                  rng.uniform(0.1, 1.0), std::move(segs)));
    }

    const ApReport got = evaluate(preds, gt);
    const oracles::RefReport want = oracles::reference_evaluate(preds, gt);
    CHECK(got.map == want.map);
    CHECK(got.ap50 == want.ap50);
    CHECK(got.ap75 == want.ap75);
    CHECK(got.ar1 == want.ar1);
    CHECK(got.ar10 == want.ar10);
    if (got.map > 0 && got.map < 1) ++nontrivial;
  }
  CHECK(nontrivial > 10);  // the comparison exercised interesting cases
}

TEST_CASE("format_report prints the metric columns") {
  const RleMask m = rect_rle(16, 16, 2, 2, 10, 10);
  const GtAnnotations gt = simple_gt(4, m);
  const ApReport r =
      evaluate({make_result(1, 8, 1.0, std::vector<std::optional<RleMask>>(4, m))}, gt);
  const std::string text = format_report(r, gt);
  CHECK(text.find("mAP") != std::string::npos);
  CHECK(text.find("AR@10") != std::string::npos);
  CHECK(text.find("box") != std::string::npos);
  CHECK(text.find("1.000") != std::string::npos);
}
