#pragma once

#include <map>
#include <memory>
#include <vector>

#include "masktrack/mask.hpp"
#include "masktrack/msn.hpp"

namespace masktrack::pipeline {

struct InstanceProposal {
  int category_id = 0;
  double score = 0;
  RleMask mask;
  int frame = 0;
};

enum class MaskSource { Detected, Propagated };

struct Track {
  int id = 0;
  int category_id = 0;
  int birth_frame = 0;
  std::map<int, RleMask> masks;  // contiguous coverage over the track's run
  std::map<int, MaskSource> sources;
  double score_sum = 0;  // running mean over matched detection scores
  int score_count = 0;
  bool retired = false;
  int empty_streak = 0;  // consecutive propagated-empty frames

  double score() const { return score_count ? score_sum / score_count : 0.0; }
  int first_frame() const { return masks.empty() ? birth_frame : masks.begin()->first; }
  int last_frame() const { return masks.empty() ? birth_frame : masks.rbegin()->first; }
};

struct FrameContext {
  int prev_frame = 0;
  int cur_frame = 0;
  const Image* prev_image = nullptr;
  const Image* cur_image = nullptr;
};

// The propagation seam (the paper plugs CFBI in here). One output mask per
// input mask, possibly empty, on the same canvas.
class Propagator {
 public:
  virtual ~Propagator() = default;
  virtual std::vector<DenseMask> propagate(const FrameContext& ctx,
                                           const std::vector<DenseMask>& prev_masks) = 0;
};

// Desk-scale stand-in for CFBI: per mask, exhaustive integer-translation search
// within `radius` maximizing normalized image correlation over the mask support.
class ShiftPropagator : public Propagator {
 public:
  explicit ShiftPropagator(int radius = 16) : radius_(radius) {}
  std::vector<DenseMask> propagate(const FrameContext& ctx,
                                   const std::vector<DenseMask>& prev_masks) override;

 private:
  int radius_;
};

// Chooses between the segmentation and the propagated mask of a matched pair.
// Returns true to keep the segmentation mask.
class MaskSelector {
 public:
  virtual ~MaskSelector() = default;
  virtual bool choose_segmentation(const Image& frame_image, int frame, const DenseMask& seg,
                                   const DenseMask& prop) = 0;
};

class AlwaysSegmentationSelector : public MaskSelector {
 public:
  bool choose_segmentation(const Image&, int, const DenseMask&, const DenseMask&) override {
    return true;
  }
};

class AlwaysPropagationSelector : public MaskSelector {
 public:
  bool choose_segmentation(const Image&, int, const DenseMask&, const DenseMask&) override {
    return false;
  }
};

class MsnSelector : public MaskSelector {
 public:
  explicit MsnSelector(const msn::MsnModel* model) : model_(model) {}
  bool choose_segmentation(const Image& img, int, const DenseMask& seg,
                           const DenseMask& prop) override {
    return msn::select(*model_, img, seg, prop).a_wins;
  }

 private:
  const msn::MsnModel* model_;
};

class HeuristicSelector : public MaskSelector {
 public:
  bool choose_segmentation(const Image& img, int, const DenseMask& seg,
                           const DenseMask& prop) override {
    return msn::heuristic_select(img, seg, prop).a_wins;
  }
};

// Test/benchmark fixture: picks the candidate with higher IoU against the
// best-matching ground-truth mask of that frame; ties keep the segmentation.
class OracleSelector : public MaskSelector {
 public:
  explicit OracleSelector(std::vector<std::vector<DenseMask>> gt_masks_per_frame)
      : gt_(std::move(gt_masks_per_frame)) {}
  bool choose_segmentation(const Image&, int frame, const DenseMask& seg,
                           const DenseMask& prop) override;

 private:
  std::vector<std::vector<DenseMask>> gt_;
};

struct PipelineConfig {
  double score_threshold = 0.5;       // detections below this never enter stage 2
  double iou_floor = 0.1;             // association floor (strictly higher associates)
  int max_objects = 15;               // active-track cap
  double intersection_tolerance = 0;  // admission: same-class overlap allowed, as a
                                      // fraction of the candidate's area (0 = strict)
  int patience = -1;                  // consecutive empty propagated frames before
                                      // retirement; negative = keep forever
};

struct TrackerState {
  std::vector<Track> tracks;  // live and retired
  int next_id = 1;
  int cursor = 0;  // last processed frame
  PipelineConfig config;
};

TrackerState init_tracks(const std::vector<InstanceProposal>& proposals,
                         const PipelineConfig& config);

// One stage-2 step: propagate, associate, select per matched pair, carry
// unmatched propagations, admit new objects under the same-class
// non-intersection rule. `selector` may be null only when no pair can match
// (callers normally pass one).
void step(TrackerState& state, const FrameContext& ctx,
          const std::vector<InstanceProposal>& seg_proposals, Propagator& propagator,
          MaskSelector* selector);

enum class Direction { Forward, Backward };

// Runs stage 2 over the whole video. Backward reverses the processing order;
// reported tracks are indexed by original frame numbers either way.
std::vector<Track> run(const std::vector<Image>& frames,
                       const std::vector<std::vector<InstanceProposal>>& proposals_by_frame,
                       Direction direction, const PipelineConfig& config, Propagator& propagator,
                       MaskSelector* selector);

}  // namespace masktrack::pipeline
