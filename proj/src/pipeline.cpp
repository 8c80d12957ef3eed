#include "masktrack/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "masktrack/assign.hpp"

namespace masktrack::pipeline {

namespace {

double gray_at(const Image& img, int y, int x) {
  return (img.at(0, y, x) + img.at(1, y, x) + img.at(2, y, x)) / 3.0;
}

// Admission rule: a new same-class object may overlap existing frame-t masks
// by at most tolerance * its own area (strict non-intersection at 0).
bool admissible(const DenseMask& candidate, int category, double tolerance,
                const std::vector<std::pair<int, const DenseMask*>>& existing) {
  const double limit = tolerance * static_cast<double>(area(candidate));
  for (const auto& [cat, mask] : existing) {
    if (cat != category) continue;
    const std::uint64_t inter = overlap_counts(candidate, *mask).inter;
    if (static_cast<double>(inter) > limit) return false;
  }
  return true;
}

std::vector<int> order_by_score(const std::vector<InstanceProposal>& proposals,
                                const std::vector<int>& candidates) {
  std::vector<int> order = candidates;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return proposals[a].score > proposals[b].score;
  });
  return order;
}

}  // namespace

bool OracleSelector::choose_segmentation(const Image&, int frame, const DenseMask& seg,
                                         const DenseMask& prop) {
  if (frame < 0 || frame >= static_cast<int>(gt_.size())) return true;
  const DenseMask* best = nullptr;
  double best_iou = 0;
  for (const DenseMask& gt : gt_[frame]) {
    const double v = std::max(mask_iou(seg, gt), mask_iou(prop, gt));
    if (v > best_iou) {
      best_iou = v;
      best = &gt;
    }
  }
  if (!best) return true;
  return mask_iou(seg, *best) >= mask_iou(prop, *best);
}

std::vector<DenseMask> ShiftPropagator::propagate(const FrameContext& ctx,
                                                  const std::vector<DenseMask>& prev_masks) {
  const Image& prev = *ctx.prev_image;
  const Image& cur = *ctx.cur_image;
  if (prev.height != cur.height || prev.width != cur.width)
    throw std::invalid_argument("ShiftPropagator: image canvas mismatch");

  std::vector<DenseMask> out;
  out.reserve(prev_masks.size());
  for (const DenseMask& m : prev_masks) {
    if (m.height != prev.height || m.width != prev.width)
      throw std::invalid_argument("ShiftPropagator: mask canvas mismatch");
    if (area(m) == 0) {
      out.emplace_back(m.height, m.width);
      continue;
    }
    const BBox box = tight_bbox(m);
    // Normalized correlation over the mask support for every candidate shift.
    double best_score = -2.0;
    int best_dx = 0, best_dy = 0;
    const std::uint64_t min_support = std::max<std::uint64_t>(1, area(m) / 4);
    for (int dy = -radius_; dy <= radius_; ++dy) {
      for (int dx = -radius_; dx <= radius_; ++dx) {
        double pc = 0, pp = 0, cc = 0;
        std::uint64_t support = 0;
        for (int y = box.y0; y < box.y1; ++y) {
          const int ny = y + dy;
          if (ny < 0 || ny >= cur.height) continue;
          for (int x = box.x0; x < box.x1; ++x) {
            if (!m.at(y, x)) continue;
            const int nx = x + dx;
            if (nx < 0 || nx >= cur.width) continue;
            const double p = gray_at(prev, y, x);
            const double c = gray_at(cur, ny, nx);
            pc += p * c;
            pp += p * p;
            cc += c * c;
            ++support;
          }
        }
        if (support < min_support || pp <= 0 || cc <= 0) continue;
        const double score = pc / std::sqrt(pp * cc);
        if (score > best_score) {
          best_score = score;
          best_dx = dx;
          best_dy = dy;
        }
      }
    }
    if (best_score <= -2.0) {
      out.emplace_back(m.height, m.width);  // support fully exited the canvas
      continue;
    }
    DenseMask moved(m.height, m.width);
    for (int y = box.y0; y < box.y1; ++y) {
      const int ny = y + best_dy;
      if (ny < 0 || ny >= m.height) continue;
      for (int x = box.x0; x < box.x1; ++x) {
        const int nx = x + best_dx;
        if (nx >= 0 && nx < m.width && m.at(y, x)) moved.at(ny, nx) = 1;
      }
    }
    out.push_back(std::move(moved));
  }
  return out;
}

TrackerState init_tracks(const std::vector<InstanceProposal>& proposals,
                         const PipelineConfig& config) {
  TrackerState state;
  state.config = config;
  if (proposals.empty()) return state;

  const int frame = proposals.front().frame;
  std::vector<int> candidates;
  for (int i = 0; i < static_cast<int>(proposals.size()); ++i) {
    if (proposals[i].frame != frame)
      throw std::invalid_argument("init_tracks: proposals span multiple frames");
    if (proposals[i].score >= config.score_threshold) candidates.push_back(i);
  }

  std::vector<std::pair<int, DenseMask>> admitted;  // (category, mask)
  for (int idx : order_by_score(proposals, candidates)) {
    if (static_cast<int>(state.tracks.size()) >= config.max_objects) break;
    const InstanceProposal& p = proposals[idx];
    DenseMask dense = rle_decode(p.mask);
    if (area(dense) == 0) continue;
    std::vector<std::pair<int, const DenseMask*>> existing;
    existing.reserve(admitted.size());
    for (const auto& [cat, mask] : admitted) existing.emplace_back(cat, &mask);
    if (!admissible(dense, p.category_id, config.intersection_tolerance, existing)) continue;

    Track t;
    t.id = state.next_id++;
    t.category_id = p.category_id;
    t.birth_frame = frame;
    t.masks[frame] = p.mask;
    t.sources[frame] = MaskSource::Detected;
    t.score_sum = p.score;
    t.score_count = 1;
    state.tracks.push_back(std::move(t));
    admitted.emplace_back(p.category_id, std::move(dense));
  }
  state.cursor = frame;
  return state;
}

void step(TrackerState& state, const FrameContext& ctx,
          const std::vector<InstanceProposal>& seg_proposals, Propagator& propagator,
          MaskSelector* selector) {
  const int t = ctx.cur_frame;
  if (ctx.prev_frame != state.cursor)
    throw std::invalid_argument("pipeline::step: frame discontinuity");

  // Propagate every live track from its previous mask.
  std::vector<int> live;
  std::vector<DenseMask> prev_masks;
  for (int i = 0; i < static_cast<int>(state.tracks.size()); ++i) {
    Track& tr = state.tracks[i];
    if (tr.retired) continue;
    live.push_back(i);
    prev_masks.push_back(rle_decode(tr.masks.at(ctx.prev_frame)));
  }
  std::vector<DenseMask> propagated = propagator.propagate(ctx, prev_masks);
  if (propagated.size() != prev_masks.size())
    throw std::runtime_error("pipeline::step: propagator returned wrong mask count");

  // Stage-1 seam: only detections above the score threshold reach stage 2.
  std::vector<int> seg_idx;
  std::vector<RleMask> seg_masks;
  for (int i = 0; i < static_cast<int>(seg_proposals.size()); ++i) {
    if (seg_proposals[i].frame != t)
      throw std::invalid_argument("pipeline::step: proposal frame mismatch");
    if (seg_proposals[i].score >= state.config.score_threshold) {
      seg_idx.push_back(i);
      seg_masks.push_back(seg_proposals[i].mask);
    }
  }
  std::vector<RleMask> prop_masks(propagated.size());
  for (std::size_t i = 0; i < propagated.size(); ++i) prop_masks[i] = rle_encode(propagated[i]);

  const assign::MatchResult match =
      assign::associate(seg_masks, prop_masks, state.config.iou_floor);

  // Matched pairs: the selector picks which mask the track carries at frame t.
  for (const auto& m : match.matches) {
    Track& tr = state.tracks[live[m.prop]];
    const InstanceProposal& p = seg_proposals[seg_idx[m.seg]];
    const DenseMask seg_dense = rle_decode(p.mask);
    const bool take_seg =
        selector ? selector->choose_segmentation(*ctx.cur_image, t, seg_dense, propagated[m.prop])
                 : true;
    tr.masks[t] = take_seg ? p.mask : prop_masks[m.prop];
    tr.sources[t] = take_seg ? MaskSource::Detected : MaskSource::Propagated;
    tr.score_sum += p.score;
    tr.score_count += 1;
    tr.empty_streak = 0;
  }

  // Unmatched tracks survive on their propagated mask.
  for (int pi : match.unmatched_prop) {
    Track& tr = state.tracks[live[pi]];
    tr.masks[t] = prop_masks[pi];
    tr.sources[t] = MaskSource::Propagated;
    if (area(prop_masks[pi]) == 0) {
      tr.empty_streak += 1;
      if (state.config.patience >= 0 && tr.empty_streak >= std::max(1, state.config.patience))
        tr.retired = true;
    } else {
      tr.empty_streak = 0;
    }
  }

  // New objects: highest score first, same-class non-intersection, capacity cap.
  std::vector<std::pair<int, DenseMask>> current;  // (category, frame-t mask) of live tracks
  for (int i : live) {
    const Track& tr = state.tracks[i];
    current.emplace_back(tr.category_id, rle_decode(tr.masks.at(t)));
  }
  std::vector<int> candidates;
  for (int si : match.unmatched_seg) candidates.push_back(seg_idx[si]);
  int active = 0;
  for (const Track& tr : state.tracks)
    if (!tr.retired) ++active;

  for (int idx : order_by_score(seg_proposals, candidates)) {
    if (active >= state.config.max_objects) break;
    const InstanceProposal& p = seg_proposals[idx];
    DenseMask dense = rle_decode(p.mask);
    if (area(dense) == 0) continue;
    std::vector<std::pair<int, const DenseMask*>> existing;
    existing.reserve(current.size());
    for (const auto& [cat, mask] : current) existing.emplace_back(cat, &mask);
    if (!admissible(dense, p.category_id, state.config.intersection_tolerance, existing)) continue;

    Track tr;
    tr.id = state.next_id++;
    tr.category_id = p.category_id;
    tr.birth_frame = t;
    tr.masks[t] = p.mask;
    tr.sources[t] = MaskSource::Detected;
    tr.score_sum = p.score;
    tr.score_count = 1;
    state.tracks.push_back(std::move(tr));
    current.emplace_back(p.category_id, std::move(dense));
    ++active;
  }

  state.cursor = t;
}

std::vector<Track> run(const std::vector<Image>& frames,
                       const std::vector<std::vector<InstanceProposal>>& proposals_by_frame,
                       Direction direction, const PipelineConfig& config, Propagator& propagator,
                       MaskSelector* selector) {
  if (frames.empty()) throw std::invalid_argument("pipeline::run: no frames");
  if (proposals_by_frame.size() != frames.size())
    throw std::invalid_argument("pipeline::run: proposals do not cover every frame");

  const int n = static_cast<int>(frames.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (direction == Direction::Backward) std::reverse(order.begin(), order.end());

  if (!proposals_by_frame[order[0]].empty() &&
      proposals_by_frame[order[0]].front().frame != order[0])
    throw std::invalid_argument("pipeline::run: proposal stream frames are misaligned");

  TrackerState state = init_tracks(proposals_by_frame[order[0]], config);
  // An empty first frame leaves the state empty; objects appear later through
  // the admission rule.
  state.cursor = order[0];
  for (int k = 1; k < n; ++k) {
    FrameContext ctx;
    ctx.prev_frame = order[k - 1];
    ctx.cur_frame = order[k];
    ctx.prev_image = &frames[order[k - 1]];
    ctx.cur_image = &frames[order[k]];
    step(state, ctx, proposals_by_frame[order[k]], propagator, selector);
  }
  return std::move(state.tracks);
}

}  // namespace masktrack::pipeline
