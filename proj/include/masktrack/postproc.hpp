#pragma once

#include <vector>

#include "masktrack/eval.hpp"
#include "masktrack/pipeline.hpp"

namespace masktrack::postproc {

// Edge between a forward-pass and a backward-pass track; votes count the
// frames on which the two were Hungarian-associated above the merge IoU.
struct MergeEdge {
  int fwd_index = -1;
  int bwd_index = -1;
  int votes = 0;
};

struct MergeGraph {
  std::vector<MergeEdge> edges;
};

MergeGraph associate_passes(const std::vector<pipeline::Track>& fwd,
                            const std::vector<pipeline::Track>& bwd, double merge_iou,
                            int n_frames);

struct MergeReport {
  std::vector<MergeEdge> accepted;     // resolved one-to-one merges
  std::vector<int> fwd_passthrough;    // indices that stayed unmerged
  std::vector<int> bwd_passthrough;
};

// Merges tracks associated in at least one frame. Conflicts resolve by
// descending votes (ties by earlier first frame). On frames both passes cover,
// the selector arbitrates; without one the forward mask wins.
std::vector<pipeline::Track> merge_tracks(const MergeGraph& graph,
                                          const std::vector<pipeline::Track>& fwd,
                                          const std::vector<pipeline::Track>& bwd,
                                          const std::vector<Image>* frames,
                                          pipeline::MaskSelector* selector,
                                          MergeReport* report = nullptr);

// Links each rider-class track (boat, motorbike, skateboard, snowboard,
// surfboard, tennis racket) to the person track with maximal bbox
// co-occurrence, then merges same-class fragments that share a person and
// cover disjoint frame ranges. Never deletes or reclassifies tracks.
std::vector<pipeline::Track> human_object_link(const std::vector<pipeline::Track>& tracks,
                                               const std::vector<eval::CategoryInfo>& categories);

}  // namespace masktrack::postproc
