#include "masktrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace masktrack::eval {

namespace {

const std::vector<double>& iou_thresholds() {
  static const std::vector<double> t = {0.50, 0.55, 0.60, 0.65, 0.70,
                                        0.75, 0.80, 0.85, 0.90, 0.95};
  return t;
}

struct ClassEval {
  double ap = 0;
  double ap50 = 0;
  double ap75 = 0;
  double ar1 = 0;
  double ar10 = 0;
};

// 101-point interpolated AP from TP/FP flags in score order.
double interpolated_ap(const std::vector<char>& tp_flags, int n_gt) {
  if (n_gt == 0) return 0;
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (char f : tp_flags) {
    f ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }
  double sum = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = 0;
    for (std::size_t i = 0; i < precision.size(); ++i)
      if (recall[i] >= r) best = std::max(best, precision[i]);
    sum += best;
  }
  return sum / 101.0;
}

}  // namespace

double track_iou(const std::vector<std::optional<RleMask>>& pred,
                 const std::vector<std::optional<RleMask>>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("track_iou: frame counts differ");
  std::uint64_t inter = 0, uni = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const bool has_p = pred[t].has_value() && area(*pred[t]) > 0;
    const bool has_g = gt[t].has_value() && area(*gt[t]) > 0;
    if (has_p && has_g) {
      const OverlapCounts c = overlap_counts(*pred[t], *gt[t]);
      inter += c.inter;
      uni += c.uni;
    } else if (has_p) {
      uni += area(*pred[t]);
    } else if (has_g) {
      uni += area(*gt[t]);
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ApReport evaluate(const std::vector<ResultTrack>& predictions, const GtAnnotations& gt) {
  std::map<int, VideoInfo> videos;
  for (const auto& v : gt.videos) videos[v.id] = v;
  std::set<int> known_categories;
  for (const auto& c : gt.categories) known_categories.insert(c.id);

  std::set<int> gt_ids;
  for (const auto& t : gt.tracks) {
    if (!gt_ids.insert(t.id).second)
      throw std::invalid_argument("evaluate: duplicate ground-truth track id " +
                                  std::to_string(t.id));
    if (!known_categories.count(t.category_id))
      throw std::invalid_argument("evaluate: unknown category id " +
                                  std::to_string(t.category_id));
    const auto it = videos.find(t.video_id);
    if (it == videos.end() ||
        static_cast<int>(t.segmentations.size()) != it->second.length)
      throw std::invalid_argument("evaluate: ground-truth track does not fit its video");
  }
  for (const auto& p : predictions) {
    if (!known_categories.count(p.category_id))
      throw std::invalid_argument("evaluate: unknown category id " +
                                  std::to_string(p.category_id));
    const auto it = videos.find(p.video_id);
    if (it == videos.end() ||
        static_cast<int>(p.segmentations.size()) != it->second.length)
      throw std::invalid_argument("evaluate: prediction does not fit its video");
  }

  // Classes enter the mean only when they own at least one ground-truth track.
  std::set<int> classes;
  for (const auto& t : gt.tracks) classes.insert(t.category_id);

  ApReport report;
  std::vector<ClassEval> per_class;
  for (int cls : classes) {
    std::vector<int> gt_idx;
    for (int i = 0; i < static_cast<int>(gt.tracks.size()); ++i)
      if (gt.tracks[i].category_id == cls) gt_idx.push_back(i);

    std::vector<int> pr_idx;
    for (int i = 0; i < static_cast<int>(predictions.size()); ++i)
      if (predictions[i].category_id == cls) pr_idx.push_back(i);
    // score descending, ties by ascending track index (file order)
    std::stable_sort(pr_idx.begin(), pr_idx.end(), [&](int a, int b) {
      return predictions[a].score > predictions[b].score;
    });

    // IoU cache: prediction x same-video ground truth
    std::map<std::pair<int, int>, double> iou;
    for (int pi : pr_idx)
      for (int gi : gt_idx)
        if (predictions[pi].video_id == gt.tracks[gi].video_id)
          iou[{pi, gi}] =
              track_iou(predictions[pi].segmentations, gt.tracks[gi].segmentations);

    ClassEval ce;
    std::vector<double> ap_per_thr;
    for (double thr : iou_thresholds()) {
      std::vector<char> tp_flags;
      std::set<int> taken;
      for (int pi : pr_idx) {
        int best_gi = -1;
        double best = thr;  // must be >= thr to count
        for (int gi : gt_idx) {
          if (taken.count(gi) || gt.tracks[gi].video_id != predictions[pi].video_id) continue;
          const double v = iou.at({pi, gi});
          if (v > best || (v == best && best_gi == -1 && v >= thr)) {
            best = v;
            best_gi = gi;
          }
        }
        if (best_gi >= 0) {
          taken.insert(best_gi);
          tp_flags.push_back(1);
        } else {
          tp_flags.push_back(0);
        }
      }
      ap_per_thr.push_back(interpolated_ap(tp_flags, static_cast<int>(gt_idx.size())));
    }
    ce.ap = 0;
    for (double v : ap_per_thr) ce.ap += v;
    ce.ap /= ap_per_thr.size();
    ce.ap50 = ap_per_thr[0];
    ce.ap75 = ap_per_thr[5];

    // AR@k: cap predictions per video at k (in score order), recall over thresholds.
    for (int k_cap : {1, 10}) {
      std::map<int, int> used_per_video;
      std::vector<int> capped;
      for (int pi : pr_idx)
        if (used_per_video[predictions[pi].video_id]++ < k_cap) capped.push_back(pi);
      double recall_sum = 0;
      for (double thr : iou_thresholds()) {
        std::set<int> taken;
        int tp = 0;
        for (int pi : capped) {
          int best_gi = -1;
          double best = thr;
          for (int gi : gt_idx) {
            if (taken.count(gi) || gt.tracks[gi].video_id != predictions[pi].video_id) continue;
            const double v = iou.at({pi, gi});
            if (v > best || (v == best && best_gi == -1 && v >= thr)) {
              best = v;
              best_gi = gi;
            }
          }
          if (best_gi >= 0) {
            taken.insert(best_gi);
            ++tp;
          }
        }
        recall_sum += gt_idx.empty() ? 0.0 : static_cast<double>(tp) / gt_idx.size();
      }
      const double ar = recall_sum / iou_thresholds().size();
      (k_cap == 1 ? ce.ar1 : ce.ar10) = ar;
    }

    per_class.push_back(ce);
    report.per_class_ap.emplace_back(cls, ce.ap);
  }

  if (!per_class.empty()) {
    for (const auto& ce : per_class) {
      report.map += ce.ap;
      report.ap50 += ce.ap50;
      report.ap75 += ce.ap75;
      report.ar1 += ce.ar1;
      report.ar10 += ce.ar10;
    }
    const double n = static_cast<double>(per_class.size());
    report.map /= n;
    report.ap50 /= n;
    report.ap75 /= n;
    report.ar1 /= n;
    report.ar10 /= n;
  }
  return report;
}

std::string format_report(const ApReport& report, const GtAnnotations& gt) {
  std::map<int, std::string> names;
  for (const auto& c : gt.categories) names[c.id] = c.name;

  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-18s %6s %6s %6s %6s %6s\n", "class", "mAP", "AP50",
                "AP75", "AR@1", "AR@10");
  out << line;
  std::snprintf(line, sizeof(line), "%-18s %6.3f %6.3f %6.3f %6.3f %6.3f\n", "all", report.map,
                report.ap50, report.ap75, report.ar1, report.ar10);
  out << line;
  for (const auto& [cls, ap] : report.per_class_ap) {
    const std::string name = names.count(cls) ? names[cls] : ("class " + std::to_string(cls));
    std::snprintf(line, sizeof(line), "%-18s %6.3f\n", name.c_str(), ap);
    out << line;
  }
  return out.str();
}

}  // namespace masktrack::eval
