#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "masktrack/eval.hpp"
#include "masktrack/mask.hpp"
#include "masktrack/pipeline.hpp"

namespace masktrack::synth {

enum class ShapeKind { Rectangle, Ellipse, Polygon };

struct ObjectSpec {
  ShapeKind shape = ShapeKind::Rectangle;
  int category_id = 1;
  int depth = 0;  // unique per scene; smaller is nearer and occludes
  double cx = 0, cy = 0;              // center at entry frame
  double vx = 0, vy = 0;              // translation per frame
  double half_w = 8, half_h = 6;      // rect/ellipse half extents
  std::vector<std::pair<double, double>> polygon;  // local vertex offsets (Polygon only)
  double scale0 = 1.0;
  double scale_rate = 1.0;  // scale(t) = scale0 * scale_rate^(t - entry)
  int entry = 0;
  int exit = std::numeric_limits<int>::max();  // exclusive
  std::uint64_t texture_seed = 1;
};

struct SceneConfig {
  int video_id = 1;
  int height = 64;
  int width = 64;
  int frames = 16;
  std::uint64_t background_seed = 0;
  std::uint64_t seed = 1;  // global seed; per-object/per-frame streams fork from it
  std::vector<ObjectSpec> objects;
};

struct MotionStep {
  double dx = 0, dy = 0;
  double scale_ratio = 1.0;
};

struct SceneObject {
  int index = 0;  // position in SceneConfig::objects
  int category_id = 0;
  int depth = 0;
  std::vector<DenseMask> visible;  // exact ground truth, occlusion carved out
  std::vector<MotionStep> motion;  // motion[t] maps frame t to t+1
};

struct GeneratedScene {
  SceneConfig config;
  std::vector<Image> frames;
  std::vector<SceneObject> objects;
};

// Deterministic render: seeded value-noise textures anchored to each object so
// integer motion translates appearance exactly; occlusion resolved by depth;
// channels quantized to the 8-bit grid so PNG round-trips are lossless.
GeneratedScene generate(const SceneConfig& config);

struct NoiseConfig {
  double p_miss = 0;
  double p_spurious = 0;  // Poisson rate of spurious blobs per frame
  double p_classflip = 0;
  double boundary_level = 0;  // in [0, 1]
  double score_base = 0.9;    // score = clip(base * IoU-with-GT + N(0, sigma))
  double score_sigma = 0;

  struct ForcedMiss {
    int object_index = -1;  // -1 = every object
    int frame_begin = 0;
    int frame_end = 0;  // exclusive
  };
  std::vector<ForcedMiss> forced_miss;
};

// Turns exact ground truth into a noisy proposal stream (one list per frame).
std::vector<std::vector<pipeline::InstanceProposal>> degrade(const GeneratedScene& scene,
                                                             const NoiseConfig& noise,
                                                             std::uint64_t seed);

// The category table synthetic scenes draw from: person, the six rider
// classes, and two generic object classes.
std::vector<eval::CategoryInfo> default_categories();

// Ground-truth annotations for a batch of scenes, in the evaluator's schema.
eval::GtAnnotations scenes_gt(const std::vector<GeneratedScene>& scenes);

// Per-frame ground-truth masks of one scene (the oracle selector's view).
std::vector<std::vector<DenseMask>> gt_masks_per_frame(const GeneratedScene& scene);

// Propagator that applies the true per-object motion to each input mask,
// carves out strictly-nearer ground-truth occluders, then degrades the result
// (models an imperfect propagation backend so selection has real work to do).
class OraclePropagator : public pipeline::Propagator {
 public:
  struct Noise {
    double erode_level = 0;   // radius ~ level scaled by mask size
    double jitter_level = 0;  // boundary flip probability
  };

  OraclePropagator(const GeneratedScene* scene, Noise noise, std::uint64_t seed)
      : scene_(scene), noise_(noise), seed_(seed) {}

  std::vector<DenseMask> propagate(const pipeline::FrameContext& ctx,
                                   const std::vector<DenseMask>& prev_masks) override;

 private:
  const GeneratedScene* scene_;
  Noise noise_;
  std::uint64_t seed_;
};

// Canned configurations.
// `late10`: an object present from frame 0 whose detections are suppressed for
// frames 0..9, plus an always-detected companion; 30 frames.
SceneConfig late10_scene(std::uint64_t seed);
NoiseConfig late10_noise();

// Seeded noisy benchmark for selector comparisons: boundary level 0.3,
// p_miss 0.1.
std::vector<SceneConfig> bench_scenes(std::uint64_t seed, int n_videos);
NoiseConfig bench_noise();
OraclePropagator::Noise bench_propagation_noise();

// Scenes whose (image, mask) pairs feed msn::generate_pairs.
std::vector<SceneConfig> pair_scenes(std::uint64_t seed, int n_videos);

// Every (frame image, visible mask) with at least `min_area` pixels.
std::vector<std::pair<Image, DenseMask>> collect_gt_crops(
    const std::vector<GeneratedScene>& scenes, int min_area);

}  // namespace masktrack::synth
