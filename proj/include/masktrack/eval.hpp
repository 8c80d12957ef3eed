#pragma once

#include <optional>
#include <string>
#include <vector>

#include "masktrack/mask.hpp"

namespace masktrack::eval {

struct VideoInfo {
  int id = 0;
  int height = 0;
  int width = 0;
  int length = 0;  // frame count
};

struct CategoryInfo {
  int id = 0;
  std::string name;
};

struct GtTrack {
  int id = 0;
  int video_id = 0;
  int category_id = 0;
  std::vector<std::optional<RleMask>> segmentations;  // one slot per frame
};

struct GtAnnotations {
  std::vector<VideoInfo> videos;
  std::vector<CategoryInfo> categories;
  std::vector<GtTrack> tracks;
};

// One predicted track in the result-file shape: absent entries are frames the
// track does not cover.
struct ResultTrack {
  int video_id = 0;
  int category_id = 0;
  double score = 0;
  std::vector<std::optional<RleMask>> segmentations;
};

struct ApReport {
  double map = 0;
  double ap50 = 0;
  double ap75 = 0;
  double ar1 = 0;
  double ar10 = 0;
  std::vector<std::pair<int, double>> per_class_ap;  // (category_id, AP), gt classes only
};

// Spatiotemporal IoU: sum of per-frame intersections over sum of per-frame
// unions; an absent mask counts as empty.
double track_iou(const std::vector<std::optional<RleMask>>& pred,
                 const std::vector<std::optional<RleMask>>& gt);

// COCO-style VIS evaluation: per class, predictions sorted by score (ties by
// ascending track index), greedy one-to-one matching per IoU threshold
// 0.50:0.05:0.95, 101-point interpolated AP, mAP over classes with ground
// truth; AR@k caps predictions per video at k.
ApReport evaluate(const std::vector<ResultTrack>& predictions, const GtAnnotations& gt);

// Aligned plain-text table with the usual mAP / AP / AR columns.
std::string format_report(const ApReport& report, const GtAnnotations& gt);

}  // namespace masktrack::eval
