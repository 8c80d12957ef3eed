#include "masktrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "masktrack/perturb.hpp"
#include "masktrack/rng.hpp"

namespace masktrack::synth {

namespace {

std::uint64_t hash_mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double lattice_value(std::int64_t xi, std::int64_t yi, std::uint64_t seed) {
  const std::uint64_t h = hash_mix(static_cast<std::uint64_t>(xi) * 0x8DA6B343ULL ^
                                   static_cast<std::uint64_t>(yi) * 0xD8163841ULL ^ seed);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Two-octave bilinear value noise in [0, 1]; pure integer hashing underneath
// keeps it bit-stable across runs.
double value_noise(double x, double y, std::uint64_t seed) {
  double acc = 0;
  double amp = 0.65;
  double period = 8.0;
  for (int octave = 0; octave < 2; ++octave) {
    const double fx = x / period, fy = y / period;
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
    const double tx = fx - static_cast<double>(x0);
    const double ty = fy - static_cast<double>(y0);
    const double v00 = lattice_value(x0, y0, seed + octave);
    const double v01 = lattice_value(x0 + 1, y0, seed + octave);
    const double v10 = lattice_value(x0, y0 + 1, seed + octave);
    const double v11 = lattice_value(x0 + 1, y0 + 1, seed + octave);
    acc += amp * ((1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11));
    amp = 0.35;
    period = 4.0;
  }
  return acc;
}

struct Rgb {
  double r, g, b;
};

Rgb category_color(int category_id) {
  const std::uint64_t h = hash_mix(static_cast<std::uint64_t>(category_id) * 7919ULL + 13);
  auto chan = [&](int i) {
    return 0.35 + 0.55 * static_cast<double>((h >> (i * 16)) & 0xFFFF) / 65535.0;
  };
  return {chan(0), chan(1), chan(2)};
}

float quantize8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::lround(c * 255.0) / 255.0);
}

struct FramePose {
  double cx, cy, scale;
  bool alive;
};

FramePose pose_at(const ObjectSpec& o, int t) {
  FramePose p{0, 0, 1.0, false};
  if (t < o.entry || t >= o.exit) return p;
  const int k = t - o.entry;
  p.cx = o.cx + o.vx * k;
  p.cy = o.cy + o.vy * k;
  p.scale = o.scale0 * std::pow(o.scale_rate, k);
  p.alive = true;
  return p;
}

// Full (pre-occlusion) mask of an object at frame t; pixel centers.
DenseMask rasterize(const ObjectSpec& o, const FramePose& p, int height, int width) {
  DenseMask m(height, width);
  if (!p.alive) return m;
  if (o.shape == ShapeKind::Polygon && o.polygon.size() < 3)
    throw std::invalid_argument("synth: polygon needs at least 3 vertices");

  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5 - p.cy;
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5 - p.cx;
      bool inside = false;
      switch (o.shape) {
        case ShapeKind::Rectangle:
          inside = std::abs(px) <= o.half_w * p.scale && std::abs(py) <= o.half_h * p.scale;
          break;
        case ShapeKind::Ellipse: {
          const double nx = px / (o.half_w * p.scale);
          const double ny = py / (o.half_h * p.scale);
          inside = nx * nx + ny * ny <= 1.0;
          break;
        }
        case ShapeKind::Polygon: {
          // even-odd crossing test against the scaled local polygon
          const std::size_t n = o.polygon.size();
          for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const double xi = o.polygon[i].first * p.scale, yi = o.polygon[i].second * p.scale;
            const double xj = o.polygon[j].first * p.scale, yj = o.polygon[j].second * p.scale;
            if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi)
              inside = !inside;
          }
          break;
        }
      }
      if (inside) m.at(y, x) = 1;
    }
  }
  return m;
}

void validate(const SceneConfig& cfg) {
  if (cfg.height < 8 || cfg.width < 8 || cfg.frames < 1)
    throw std::invalid_argument("synth: canvas too small or no frames");
  std::vector<int> depths;
  for (const auto& o : cfg.objects) {
    if (o.entry >= o.exit) throw std::invalid_argument("synth: entry must precede exit");
    double ext_w = o.half_w, ext_h = o.half_h;
    if (o.shape == ShapeKind::Polygon) {
      ext_w = ext_h = 0;
      for (const auto& [x, y] : o.polygon) {
        ext_w = std::max(ext_w, std::abs(x));
        ext_h = std::max(ext_h, std::abs(y));
      }
    }
    const double s = std::max(o.scale0, o.scale0 * std::pow(o.scale_rate,
                                                            std::max(0, std::min(o.exit, cfg.frames) -
                                                                            o.entry - 1)));
    if (2 * ext_w * s > cfg.width || 2 * ext_h * s > cfg.height)
      throw std::invalid_argument("synth: object larger than the canvas");
    depths.push_back(o.depth);
  }
  std::sort(depths.begin(), depths.end());
  if (std::adjacent_find(depths.begin(), depths.end()) != depths.end())
    throw std::invalid_argument("synth: object depths must be unique");
}

}  // namespace

GeneratedScene generate(const SceneConfig& config) {
  validate(config);
  GeneratedScene scene;
  scene.config = config;

  const int n_obj = static_cast<int>(config.objects.size());
  scene.objects.resize(n_obj);
  for (int i = 0; i < n_obj; ++i) {
    scene.objects[i].index = i;
    scene.objects[i].category_id = config.objects[i].category_id;
    scene.objects[i].depth = config.objects[i].depth;
    scene.objects[i].visible.assign(config.frames, DenseMask(config.height, config.width));
    scene.objects[i].motion.assign(config.frames, MotionStep{});
  }

  const Rgb bg = {0.45, 0.5, 0.55};
  for (int t = 0; t < config.frames; ++t) {
    // Depth-ordered rasterization: nearest object owns each pixel.
    std::vector<DenseMask> full(n_obj, DenseMask(config.height, config.width));
    std::vector<FramePose> poses(n_obj);
    for (int i = 0; i < n_obj; ++i) {
      poses[i] = pose_at(config.objects[i], t);
      full[i] = rasterize(config.objects[i], poses[i], config.height, config.width);
    }

    Image frame(config.height, config.width);
    for (int y = 0; y < config.height; ++y) {
      for (int x = 0; x < config.width; ++x) {
        int owner = -1;
        for (int i = 0; i < n_obj; ++i) {
          if (!full[i].at(y, x)) continue;
          if (owner < 0 || config.objects[i].depth < config.objects[owner].depth) owner = i;
        }
        double r, g, b;
        if (owner < 0) {
          const double n = value_noise(x, y, config.background_seed * 0x1F3ULL + 0xB5C1E5ULL);
          r = bg.r * (0.5 + 0.7 * n);
          g = bg.g * (0.5 + 0.7 * n);
          b = bg.b * (0.5 + 0.7 * n);
        } else {
          scene.objects[owner].visible[t].at(y, x) = 1;
          const auto& spec = config.objects[owner];
          // texture rides with the object: anchor at the rounded center
          const double lx = x - std::round(poses[owner].cx);
          const double ly = y - std::round(poses[owner].cy);
          const double n = value_noise(lx, ly, spec.texture_seed * 0x9E1ULL + 0x51ULL);
          const Rgb base = category_color(spec.category_id);
          r = base.r * (0.45 + 0.9 * n);
          g = base.g * (0.45 + 0.9 * n);
          b = base.b * (0.45 + 0.9 * n);
        }
        frame.at(0, y, x) = quantize8(r);
        frame.at(1, y, x) = quantize8(g);
        frame.at(2, y, x) = quantize8(b);
      }
    }
    scene.frames.push_back(std::move(frame));

    for (int i = 0; i < n_obj; ++i) {
      if (t + 1 >= config.frames) break;
      const FramePose next = pose_at(config.objects[i], t + 1);
      MotionStep& step = scene.objects[i].motion[t];
      if (poses[i].alive && next.alive) {
        step.dx = next.cx - poses[i].cx;
        step.dy = next.cy - poses[i].cy;
        step.scale_ratio = next.scale / poses[i].scale;
      }
    }
  }
  return scene;
}

std::vector<eval::CategoryInfo> default_categories() {
  return {{1, "person"},    {2, "boat"},      {3, "motorbike"},
          {4, "skateboard"}, {5, "snowboard"}, {6, "surfboard"},
          {7, "tennis racket"}, {8, "box"},    {9, "ball"}};
}

eval::GtAnnotations scenes_gt(const std::vector<GeneratedScene>& scenes) {
  eval::GtAnnotations gt;
  gt.categories = default_categories();
  int next_id = 1;
  for (const auto& scene : scenes) {
    gt.videos.push_back({scene.config.video_id, scene.config.height, scene.config.width,
                         scene.config.frames});
    for (const auto& obj : scene.objects) {
      eval::GtTrack track;
      track.id = next_id;
      track.video_id = scene.config.video_id;
      track.category_id = obj.category_id;
      bool any = false;
      for (const DenseMask& m : obj.visible) {
        if (area(m) > 0) {
          track.segmentations.push_back(rle_encode(m));
          any = true;
        } else {
          track.segmentations.push_back(std::nullopt);
        }
      }
      if (any) {
        gt.tracks.push_back(std::move(track));
        ++next_id;
      }
    }
  }
  return gt;
}

std::vector<std::vector<DenseMask>> gt_masks_per_frame(const GeneratedScene& scene) {
  std::vector<std::vector<DenseMask>> out(scene.config.frames);
  for (int t = 0; t < scene.config.frames; ++t)
    for (const auto& obj : scene.objects)
      if (area(obj.visible[t]) > 0) out[t].push_back(obj.visible[t]);
  return out;
}

std::vector<std::vector<pipeline::InstanceProposal>> degrade(const GeneratedScene& scene,
                                                             const NoiseConfig& noise,
                                                             std::uint64_t seed) {
  const SceneConfig& cfg = scene.config;
  const auto categories = default_categories();
  Rng root = Rng(seed).fork("synth-degrade");

  std::vector<std::vector<pipeline::InstanceProposal>> out(cfg.frames);
  for (int t = 0; t < cfg.frames; ++t) {
    Rng rng = root.fork(static_cast<std::uint64_t>(cfg.video_id) * 100003ULL + t);
    for (const auto& obj : scene.objects) {
      const DenseMask& gt = obj.visible[t];
      if (area(gt) == 0) continue;

      bool forced = false;
      for (const auto& fm : noise.forced_miss)
        if ((fm.object_index < 0 || fm.object_index == obj.index) && t >= fm.frame_begin &&
            t < fm.frame_end)
          forced = true;
      if (forced) continue;
      if (noise.p_miss > 0 && rng.bernoulli(noise.p_miss)) continue;

      DenseMask mask = gt;
      if (noise.boundary_level > 0) {
        const int band = std::max(1, static_cast<int>(std::lround(noise.boundary_level * 2)));
        mask = boundary_jitter(mask, noise.boundary_level, band, rng);
        if (area(mask) == 0) continue;  // degraded to nothing counts as a miss
      }

      int category = obj.category_id;
      if (noise.p_classflip > 0 && rng.bernoulli(noise.p_classflip)) {
        int pick = category;
        while (pick == category)
          pick = categories[rng.uniform_int(0, static_cast<int>(categories.size()) - 1)].id;
        category = pick;
      }

      const double iou = mask_iou(mask, gt);
      const double score =
          std::clamp(noise.score_base * iou + rng.normal(0.0, noise.score_sigma), 0.01, 1.0);

      pipeline::InstanceProposal p;
      p.category_id = category;
      p.score = score;
      p.mask = rle_encode(mask);
      p.frame = t;
      out[t].push_back(std::move(p));
    }

    if (noise.p_spurious > 0) {
      const int blobs = rng.poisson(noise.p_spurious);
      for (int b = 0; b < blobs; ++b) {
        const int category = categories[rng.uniform_int(0, static_cast<int>(categories.size()) - 1)].id;
        DenseMask blob(cfg.height, cfg.width);
        bool placed = false;
        for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
          const int hw = rng.uniform_int(3, 7), hh = rng.uniform_int(3, 7);
          const int cx = rng.uniform_int(hw, cfg.width - 1 - hw);
          const int cy = rng.uniform_int(hh, cfg.height - 1 - hh);
          DenseMask candidate(cfg.height, cfg.width);
          for (int y = cy - hh; y <= cy + hh; ++y)
            for (int x = cx - hw; x <= cx + hw; ++x) candidate.at(y, x) = 1;
          // spurious blobs never cover more than half of a same-class object
          bool ok = true;
          for (const auto& obj : scene.objects) {
            if (obj.category_id != category || area(obj.visible[t]) == 0) continue;
            if (2 * overlap_counts(candidate, obj.visible[t]).inter > area(candidate)) ok = false;
          }
          if (ok) {
            blob = std::move(candidate);
            placed = true;
          }
        }
        if (!placed) continue;
        pipeline::InstanceProposal p;
        p.category_id = category;
        p.score = std::clamp(rng.normal(0.3, 0.1), 0.01, 0.45);
        p.mask = rle_encode(blob);
        p.frame = t;
        out[t].push_back(std::move(p));
      }
    }
  }
  return out;
}

std::vector<DenseMask> OraclePropagator::propagate(const pipeline::FrameContext& ctx,
                                                   const std::vector<DenseMask>& prev_masks) {
  const GeneratedScene& scene = *scene_;
  const int prev_t = ctx.prev_frame;
  const int cur_t = ctx.cur_frame;
  if (prev_t < 0 || prev_t >= scene.config.frames || cur_t < 0 || cur_t >= scene.config.frames)
    throw std::invalid_argument("OraclePropagator: frame outside the scene");

  std::vector<DenseMask> out;
  out.reserve(prev_masks.size());
  for (std::size_t k = 0; k < prev_masks.size(); ++k) {
    const DenseMask& m = prev_masks[k];
    if (area(m) == 0) {
      out.emplace_back(scene.config.height, scene.config.width);
      continue;
    }

    // Which true object does this mask follow? Highest IoU at the source frame.
    int best = -1;
    double best_iou = 0;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      const double v = mask_iou(m, scene.objects[i].visible[prev_t]);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(i);
      }
    }

    DenseMask moved = m;
    int obj_depth = std::numeric_limits<int>::max();
    if (best >= 0) {
      const auto& obj = scene.objects[best];
      obj_depth = obj.depth;
      // true motion prev->cur (inverted when stepping backward in time)
      double dx = 0, dy = 0;
      if (cur_t == prev_t + 1) {
        dx = obj.motion[prev_t].dx;
        dy = obj.motion[prev_t].dy;
      } else if (cur_t == prev_t - 1) {
        dx = -obj.motion[cur_t].dx;
        dy = -obj.motion[cur_t].dy;
      }
      moved = translate(m, static_cast<int>(std::lround(dx)), static_cast<int>(std::lround(dy)));
    }

    // Carve out whatever a strictly nearer object covers at the target frame.
    for (const auto& other : scene.objects) {
      if (other.depth >= obj_depth) continue;
      const DenseMask& occluder = other.visible[cur_t];
      if (area(occluder) == 0) continue;
      for (std::size_t i = 0; i < moved.bits.size(); ++i)
        if (occluder.bits[i]) moved.bits[i] = 0;
    }

    if ((noise_.erode_level > 0 || noise_.jitter_level > 0) && area(moved) > 0) {
      Rng rng = Rng(seed_).fork("oracle-prop").fork(
          (static_cast<std::uint64_t>(cur_t) << 20) ^ static_cast<std::uint64_t>(k));
      if (noise_.erode_level > 0 && rng.bernoulli(noise_.erode_level))
        moved = erode(moved, 1);
      if (noise_.jitter_level > 0)
        moved = boundary_jitter(moved, noise_.jitter_level, 1, rng);
    }
    out.push_back(std::move(moved));
  }
  return out;
}

SceneConfig late10_scene(std::uint64_t seed) {
  SceneConfig cfg;
  cfg.video_id = 1;
  cfg.height = 64;
  cfg.width = 64;
  cfg.frames = 30;
  cfg.background_seed = seed;
  cfg.seed = seed;

  ObjectSpec late;  // detected only from frame 10 onward (noise suppresses earlier)
  late.shape = ShapeKind::Ellipse;
  late.category_id = 8;
  late.depth = 0;
  late.cx = 16;
  late.cy = 40;
  late.vx = 1.0;
  late.vy = -0.5;
  late.half_w = 9;
  late.half_h = 7;
  late.texture_seed = seed + 1;
  cfg.objects.push_back(late);

  ObjectSpec anchor;  // always detected so both passes have a stable companion
  anchor.shape = ShapeKind::Rectangle;
  anchor.category_id = 9;
  anchor.depth = 1;
  anchor.cx = 46;
  anchor.cy = 16;
  anchor.vx = -0.5;
  anchor.vy = 0.5;
  anchor.half_w = 8;
  anchor.half_h = 6;
  anchor.texture_seed = seed + 2;
  cfg.objects.push_back(anchor);
  return cfg;
}

NoiseConfig late10_noise() {
  NoiseConfig noise;
  noise.score_base = 0.95;
  noise.forced_miss.push_back({0, 0, 10});  // the late object misses frames 0..9
  return noise;
}

std::vector<SceneConfig> bench_scenes(std::uint64_t seed, int n_videos) {
  std::vector<SceneConfig> scenes;
  Rng rng = Rng(seed).fork("bench-scenes");
  for (int v = 0; v < n_videos; ++v) {
    SceneConfig cfg;
    cfg.video_id = v + 1;
    cfg.height = 64;
    cfg.width = 64;
    cfg.frames = 24;
    cfg.background_seed = rng.next_u64();
    cfg.seed = rng.next_u64();
    const int n_obj = rng.uniform_int(2, 3);
    for (int i = 0; i < n_obj; ++i) {
      ObjectSpec o;
      const int kind = rng.uniform_int(0, 2);
      o.shape = kind == 0 ? ShapeKind::Rectangle : (kind == 1 ? ShapeKind::Ellipse
                                                              : ShapeKind::Polygon);
      if (o.shape == ShapeKind::Polygon) {
        const double r = rng.uniform(6.0, 9.0);
        const int verts = rng.uniform_int(5, 7);
        for (int k = 0; k < verts; ++k) {
          const double ang = 2.0 * 3.14159265358979323846 * k / verts;
          const double rr = r * rng.uniform(0.7, 1.0);
          o.polygon.emplace_back(rr * std::cos(ang), rr * std::sin(ang));
        }
      } else {
        o.half_w = rng.uniform(6.0, 10.0);
        o.half_h = rng.uniform(5.0, 8.0);
      }
      o.category_id = rng.uniform_int(1, 9);
      o.depth = i;
      o.cx = rng.uniform(16.0, 48.0);
      o.cy = rng.uniform(16.0, 48.0);
      o.vx = rng.uniform(-0.9, 0.9);
      o.vy = rng.uniform(-0.9, 0.9);
      o.texture_seed = rng.next_u64();
      cfg.objects.push_back(std::move(o));
    }
    scenes.push_back(std::move(cfg));
  }
  return scenes;
}

NoiseConfig bench_noise() {
  NoiseConfig noise;
  noise.boundary_level = 0.3;
  noise.p_miss = 0.1;
  noise.score_base = 0.95;
  noise.score_sigma = 0.03;
  return noise;
}

OraclePropagator::Noise bench_propagation_noise() {
  OraclePropagator::Noise n;
  n.erode_level = 0.35;
  n.jitter_level = 0.25;
  return n;
}

std::vector<SceneConfig> pair_scenes(std::uint64_t seed, int n_videos) {
  std::vector<SceneConfig> scenes;
  Rng rng = Rng(seed).fork("pair-scenes");
  for (int v = 0; v < n_videos; ++v) {
    SceneConfig cfg;
    cfg.video_id = v + 1;
    cfg.height = 64;
    cfg.width = 64;
    cfg.frames = 8;
    cfg.background_seed = rng.next_u64();
    cfg.seed = rng.next_u64();
    const int n_obj = rng.uniform_int(1, 2);
    for (int i = 0; i < n_obj; ++i) {
      ObjectSpec o;
      o.shape = rng.bernoulli(0.5) ? ShapeKind::Rectangle : ShapeKind::Ellipse;
      o.category_id = rng.uniform_int(1, 9);
      o.depth = i;
      o.half_w = rng.uniform(6.0, 11.0);
      o.half_h = rng.uniform(5.0, 9.0);
      o.cx = rng.uniform(14.0, 50.0);
      o.cy = rng.uniform(14.0, 50.0);
      o.vx = rng.uniform(-1.2, 1.2);
      o.vy = rng.uniform(-1.2, 1.2);
      o.texture_seed = rng.next_u64();
      cfg.objects.push_back(std::move(o));
    }
    scenes.push_back(std::move(cfg));
  }
  return scenes;
}

std::vector<std::pair<Image, DenseMask>> collect_gt_crops(
    const std::vector<GeneratedScene>& scenes, int min_area) {
  std::vector<std::pair<Image, DenseMask>> out;
  for (const auto& scene : scenes)
    for (int t = 0; t < scene.config.frames; ++t)
      for (const auto& obj : scene.objects)
        if (area(obj.visible[t]) >= static_cast<std::uint64_t>(min_area))
          out.emplace_back(scene.frames[t], obj.visible[t]);
  return out;
}

}  // namespace masktrack::synth
