#include "masktrack/postproc.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "masktrack/assign.hpp"

namespace masktrack::postproc {

namespace {

const RleMask* mask_at(const pipeline::Track& t, int frame) {
  const auto it = t.masks.find(frame);
  if (it == t.masks.end() || area(it->second) == 0) return nullptr;
  return &it->second;
}

}  // namespace

MergeGraph associate_passes(const std::vector<pipeline::Track>& fwd,
                            const std::vector<pipeline::Track>& bwd, double merge_iou,
                            int n_frames) {
  std::map<std::pair<int, int>, int> votes;
  for (int t = 0; t < n_frames; ++t) {
    std::vector<int> fi, bi;
    std::vector<RleMask> fm, bm;
    for (int i = 0; i < static_cast<int>(fwd.size()); ++i)
      if (const RleMask* m = mask_at(fwd[i], t)) {
        fi.push_back(i);
        fm.push_back(*m);
      }
    for (int i = 0; i < static_cast<int>(bwd.size()); ++i)
      if (const RleMask* m = mask_at(bwd[i], t)) {
        bi.push_back(i);
        bm.push_back(*m);
      }
    if (fi.empty() || bi.empty()) continue;

    const assign::MatchResult match = assign::associate(fm, bm, merge_iou);
    for (const auto& m : match.matches) votes[{fi[m.seg], bi[m.prop]}] += 1;
  }

  MergeGraph graph;
  for (const auto& [key, v] : votes) graph.edges.push_back({key.first, key.second, v});
  return graph;
}

std::vector<pipeline::Track> merge_tracks(const MergeGraph& graph,
                                          const std::vector<pipeline::Track>& fwd,
                                          const std::vector<pipeline::Track>& bwd,
                                          const std::vector<Image>* frames,
                                          pipeline::MaskSelector* selector,
                                          MergeReport* report) {
  std::vector<MergeEdge> edges = graph.edges;
  std::sort(edges.begin(), edges.end(), [&](const MergeEdge& a, const MergeEdge& b) {
    if (a.votes != b.votes) return a.votes > b.votes;
    const int fa = fwd[a.fwd_index].first_frame(), fb = fwd[b.fwd_index].first_frame();
    if (fa != fb) return fa < fb;
    if (a.fwd_index != b.fwd_index) return a.fwd_index < b.fwd_index;
    return a.bwd_index < b.bwd_index;
  });

  std::set<int> fwd_used, bwd_used;
  MergeReport rep;
  std::vector<pipeline::Track> out;
  int next_id = 1;

  for (const MergeEdge& e : edges) {
    if (fwd_used.count(e.fwd_index) || bwd_used.count(e.bwd_index)) continue;
    fwd_used.insert(e.fwd_index);
    bwd_used.insert(e.bwd_index);
    rep.accepted.push_back(e);

    const pipeline::Track& f = fwd[e.fwd_index];
    const pipeline::Track& b = bwd[e.bwd_index];
    const pipeline::Track& leader = f.score() >= b.score() ? f : b;

    pipeline::Track merged;
    merged.id = next_id++;
    merged.category_id = leader.category_id;
    merged.score_sum = std::max(f.score(), b.score());
    merged.score_count = 1;
    merged.birth_frame = std::min(f.first_frame(), b.first_frame());

    std::set<int> frames_union;
    for (const auto& [t, m] : f.masks) frames_union.insert(t);
    for (const auto& [t, m] : b.masks) frames_union.insert(t);
    for (int t : frames_union) {
      const RleMask* mf = mask_at(f, t);
      const RleMask* mb = mask_at(b, t);
      if (mf && mb) {
        bool take_fwd = true;
        if (selector && frames && t < static_cast<int>(frames->size()))
          take_fwd = selector->choose_segmentation((*frames)[t], t, rle_decode(*mf),
                                                   rle_decode(*mb));
        merged.masks[t] = take_fwd ? *mf : *mb;
        merged.sources[t] =
            (take_fwd ? f : b).sources.count(t) ? (take_fwd ? f : b).sources.at(t)
                                                : pipeline::MaskSource::Propagated;
      } else if (mf || mb) {
        const pipeline::Track& src = mf ? f : b;
        merged.masks[t] = *(mf ? mf : mb);
        merged.sources[t] = src.sources.count(t) ? src.sources.at(t)
                                                 : pipeline::MaskSource::Propagated;
      } else {
        // both sides empty on a covered frame: keep an explicit empty mask
        merged.masks[t] = f.masks.count(t) ? f.masks.at(t) : b.masks.at(t);
        merged.sources[t] = pipeline::MaskSource::Propagated;
      }
    }
    out.push_back(std::move(merged));
  }

  for (int i = 0; i < static_cast<int>(fwd.size()); ++i) {
    if (fwd_used.count(i)) continue;
    rep.fwd_passthrough.push_back(i);
    pipeline::Track t = fwd[i];
    t.id = next_id++;
    out.push_back(std::move(t));
  }
  for (int i = 0; i < static_cast<int>(bwd.size()); ++i) {
    if (bwd_used.count(i)) continue;
    rep.bwd_passthrough.push_back(i);
    pipeline::Track t = bwd[i];
    t.id = next_id++;
    out.push_back(std::move(t));
  }

  if (report) *report = std::move(rep);
  return out;
}

std::vector<pipeline::Track> human_object_link(const std::vector<pipeline::Track>& tracks,
                                               const std::vector<eval::CategoryInfo>& categories) {
  static const std::set<std::string> rider_names = {"boat",      "motorbike", "skateboard",
                                                    "snowboard", "surfboard", "tennis racket"};
  int person_id = -1;
  std::set<int> rider_ids;
  for (const auto& c : categories) {
    if (c.name == "person") person_id = c.id;
    if (rider_names.count(c.name)) rider_ids.insert(c.id);
  }

  std::vector<int> persons;
  for (int i = 0; i < static_cast<int>(tracks.size()); ++i)
    if (tracks[i].category_id == person_id) persons.push_back(i);
  if (persons.empty() || rider_ids.empty()) return tracks;

  // Link each rider track to the person with maximal bbox co-occurrence.
  std::map<int, int> linked_person;  // rider index -> person index
  for (int i = 0; i < static_cast<int>(tracks.size()); ++i) {
    if (!rider_ids.count(tracks[i].category_id)) continue;
    int best_person = -1, best_co = 0;
    for (int p : persons) {
      int co = 0;
      for (const auto& [t, m] : tracks[i].masks) {
        const RleMask* rm = mask_at(tracks[i], t);
        const RleMask* pm = mask_at(tracks[p], t);
        if (!rm || !pm) continue;
        const BBox rb = tight_bbox(rle_decode(*rm));
        const BBox pb = tight_bbox(rle_decode(*pm));
        const bool overlap = rb.x0 < pb.x1 && pb.x0 < rb.x1 && rb.y0 < pb.y1 && pb.y0 < rb.y1;
        if (overlap) ++co;
      }
      if (co > best_co) {
        best_co = co;
        best_person = p;
      }
    }
    if (best_person >= 0) linked_person[i] = best_person;
  }

  // Merge same-class fragments that share a person and never overlap in time.
  std::vector<char> absorbed(tracks.size(), 0);
  std::vector<pipeline::Track> out;
  for (int i = 0; i < static_cast<int>(tracks.size()); ++i) {
    if (absorbed[i]) continue;
    pipeline::Track merged = tracks[i];
    if (linked_person.count(i)) {
      for (int j = i + 1; j < static_cast<int>(tracks.size()); ++j) {
        if (absorbed[j] || !linked_person.count(j)) continue;
        if (tracks[j].category_id != merged.category_id) continue;
        if (linked_person.at(j) != linked_person.at(i)) continue;
        const bool disjoint = tracks[j].first_frame() > merged.last_frame() ||
                              tracks[j].last_frame() < merged.first_frame();
        if (!disjoint) continue;
        for (const auto& [t, m] : tracks[j].masks) merged.masks[t] = m;
        for (const auto& [t, s] : tracks[j].sources) merged.sources[t] = s;
        merged.birth_frame = std::min(merged.birth_frame, tracks[j].birth_frame);
        if (tracks[j].score() > merged.score()) {
          merged.score_sum = tracks[j].score();
          merged.score_count = 1;
        }
        absorbed[j] = 1;
      }
    }
    out.push_back(std::move(merged));
  }
  return out;
}

}  // namespace masktrack::postproc
