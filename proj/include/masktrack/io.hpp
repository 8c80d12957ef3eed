#pragma once

#include <string>
#include <vector>

#include "masktrack/eval.hpp"
#include "masktrack/mask.hpp"
#include "masktrack/pipeline.hpp"

namespace masktrack::io {

// Proposal stream: the stage-1 seam. Any segmenter can emit this file.
struct ProposalVideo {
  eval::VideoInfo info;
  std::vector<std::vector<pipeline::InstanceProposal>> by_frame;  // info.length entries
};

struct ProposalFile {
  std::vector<ProposalVideo> videos;
};

void save_proposals(const std::string& path, const ProposalFile& file);
ProposalFile load_proposals(const std::string& path);

// Result file: bare JSON array of {video_id, category_id, score,
// segmentations: [RLE or null per frame]} matching the VIS submission shape.
void save_results(const std::string& path, const std::vector<eval::ResultTrack>& results);
std::vector<eval::ResultTrack> load_results(const std::string& path);

void save_gt(const std::string& path, const eval::GtAnnotations& gt);
eval::GtAnnotations load_gt(const std::string& path);

// 8-bit RGB PNG.
Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& image);

// Tracks -> result entries (empty masks become nulls; fully empty tracks are
// dropped).
std::vector<eval::ResultTrack> tracks_to_results(const std::vector<pipeline::Track>& tracks,
                                                 int video_id, int n_frames);

// Result entries -> track shells for merging (ids by file order).
std::vector<pipeline::Track> results_to_tracks(const std::vector<eval::ResultTrack>& results,
                                               int video_id);

}  // namespace masktrack::io
