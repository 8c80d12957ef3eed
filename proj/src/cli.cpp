#include "masktrack/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "masktrack/assign.hpp"
#include "masktrack/eval.hpp"
#include "masktrack/io.hpp"
#include "masktrack/msn.hpp"
#include "masktrack/pipeline.hpp"
#include "masktrack/postproc.hpp"
#include "masktrack/rng.hpp"
#include "masktrack/synth.hpp"

namespace masktrack::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int log_level() {
  const char* env = std::getenv("MASKTRACK_LOG");
  if (!env) return 1;
  const std::string v = env;
  if (v == "quiet" || v == "0") return 0;
  if (v == "debug" || v == "2") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[masktrack] " << msg << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Every run leaves its resolved configuration next to its outputs.
void write_snapshot(CLI::App* cmd, const fs::path& target) {
  fs::path path = target;
  if (fs::is_directory(target) || target.extension().empty())
    path = target / "config_resolved.ini";
  else
    path = target.string() + ".config.ini";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text(path, cmd->config_to_str(true, true));
}

// ---------------------------------------------------------------------------
// scene directory: scenes.json + gt.json + frames/v###/f####.png

json scene_to_json(const synth::SceneConfig& cfg) {
  json j;
  j["video_id"] = cfg.video_id;
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["frames"] = cfg.frames;
  j["background_seed"] = cfg.background_seed;
  j["seed"] = cfg.seed;
  j["objects"] = json::array();
  for (const auto& o : cfg.objects) {
    json jo;
    jo["shape"] = o.shape == synth::ShapeKind::Rectangle
                      ? "rectangle"
                      : (o.shape == synth::ShapeKind::Ellipse ? "ellipse" : "polygon");
    jo["category_id"] = o.category_id;
    jo["depth"] = o.depth;
    jo["cx"] = o.cx;
    jo["cy"] = o.cy;
    jo["vx"] = o.vx;
    jo["vy"] = o.vy;
    jo["half_w"] = o.half_w;
    jo["half_h"] = o.half_h;
    if (!o.polygon.empty()) {
      json poly = json::array();
      for (const auto& [x, y] : o.polygon) poly.push_back({x, y});
      jo["polygon"] = std::move(poly);
    }
    jo["scale0"] = o.scale0;
    jo["scale_rate"] = o.scale_rate;
    jo["entry"] = o.entry;
    if (o.exit != std::numeric_limits<int>::max()) jo["exit"] = o.exit;
    jo["texture_seed"] = o.texture_seed;
    j["objects"].push_back(std::move(jo));
  }
  return j;
}

synth::SceneConfig scene_from_json(const json& j) {
  synth::SceneConfig cfg;
  cfg.video_id = j.at("video_id").get<int>();
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.frames = j.at("frames").get<int>();
  cfg.background_seed = j.at("background_seed").get<std::uint64_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jo : j.at("objects")) {
    synth::ObjectSpec o;
    const std::string shape = jo.at("shape").get<std::string>();
    o.shape = shape == "rectangle" ? synth::ShapeKind::Rectangle
                                   : (shape == "ellipse" ? synth::ShapeKind::Ellipse
                                                         : synth::ShapeKind::Polygon);
    o.category_id = jo.at("category_id").get<int>();
    o.depth = jo.at("depth").get<int>();
    o.cx = jo.at("cx").get<double>();
    o.cy = jo.at("cy").get<double>();
    o.vx = jo.at("vx").get<double>();
    o.vy = jo.at("vy").get<double>();
    o.half_w = jo.at("half_w").get<double>();
    o.half_h = jo.at("half_h").get<double>();
    if (jo.contains("polygon"))
      for (const auto& p : jo.at("polygon"))
        o.polygon.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    o.scale0 = jo.at("scale0").get<double>();
    o.scale_rate = jo.at("scale_rate").get<double>();
    o.entry = jo.at("entry").get<int>();
    if (jo.contains("exit")) o.exit = jo.at("exit").get<int>();
    o.texture_seed = jo.at("texture_seed").get<std::uint64_t>();
    cfg.objects.push_back(std::move(o));
  }
  return cfg;
}

std::string video_dir_name(int video_id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "v%03d", video_id);
  return buf;
}

std::string frame_file_name(int frame) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "f%04d.png", frame);
  return buf;
}

std::vector<synth::SceneConfig> load_scene_configs(const fs::path& dir) {
  std::ifstream in(dir / "scenes.json");
  if (!in) throw std::invalid_argument("scene dir has no scenes.json: " + dir.string());
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed scenes.json: ") + e.what());
  }
  std::vector<synth::SceneConfig> configs;
  for (const auto& js : root.at("scenes")) configs.push_back(scene_from_json(js));
  if (configs.empty()) throw std::invalid_argument("scenes.json lists no scenes");
  return configs;
}

std::vector<synth::GeneratedScene> regenerate_scenes(const fs::path& dir) {
  std::vector<synth::GeneratedScene> scenes;
  for (const auto& cfg : load_scene_configs(dir)) scenes.push_back(synth::generate(cfg));
  return scenes;
}

// Frames as files are the canonical pipeline input; generation quantizes to
// the 8-bit grid, so the PNG round trip is lossless.
std::vector<Image> load_video_frames(const fs::path& dir, int video_id, int n_frames) {
  std::vector<Image> frames;
  for (int t = 0; t < n_frames; ++t) {
    const fs::path p = dir / "frames" / video_dir_name(video_id) / frame_file_name(t);
    if (!fs::exists(p)) throw std::invalid_argument("missing frame image: " + p.string());
    frames.push_back(io::load_png(p.string()));
  }
  return frames;
}

// ---------------------------------------------------------------------------
// pair-sample container

constexpr char kPairsMagic[9] = "MTPAIRS1";

void save_pairs(const std::string& path, const std::vector<msn::PairSample>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kPairsMagic, 8);
  const std::uint64_t n = pairs.size();
  out.write(reinterpret_cast<const char*>(&n), 8);
  for (const auto& s : pairs) {
    const std::int32_t h = s.image.height, w = s.image.width;
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(3) * h * w);
    for (std::size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<std::uint8_t>(std::lround(s.image.data[i] * 255.f));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    for (const DenseMask* m : {&s.mask_a, &s.mask_b, &s.gt_mask})
      out.write(reinterpret_cast<const char*>(m->bits.data()),
                static_cast<std::streamsize>(m->bits.size()));
    const std::uint8_t label = s.a_better ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&label), 1);
    out.write(reinterpret_cast<const char*>(&s.iou_a), 8);
    out.write(reinterpret_cast<const char*>(&s.iou_b), 8);
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<msn::PairSample> load_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open pair data: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kPairsMagic, 8) != 0)
    throw std::invalid_argument("not a pair-sample file: " + path);
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  std::vector<msn::PairSample> pairs;
  pairs.reserve(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    std::int32_t h = 0, w = 0;
    in.read(reinterpret_cast<char*>(&h), 4);
    in.read(reinterpret_cast<char*>(&w), 4);
    if (!in || h < 1 || w < 1 || h > 4096 || w > 4096)
      throw std::invalid_argument("corrupt pair-sample file: " + path);
    msn::PairSample s;
    s.image = Image(h, w);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(3) * h * w);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    for (std::size_t i = 0; i < buf.size(); ++i)
      s.image.data[i] = static_cast<float>(buf[i] / 255.0);
    for (DenseMask* m : {&s.mask_a, &s.mask_b, &s.gt_mask}) {
      *m = DenseMask(h, w);
      in.read(reinterpret_cast<char*>(m->bits.data()),
              static_cast<std::streamsize>(m->bits.size()));
    }
    std::uint8_t label = 0;
    in.read(reinterpret_cast<char*>(&label), 1);
    s.a_better = label != 0;
    in.read(reinterpret_cast<char*>(&s.iou_a), 8);
    in.read(reinterpret_cast<char*>(&s.iou_b), 8);
    if (!in) throw std::invalid_argument("truncated pair-sample file: " + path);
    pairs.push_back(std::move(s));
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// selectors / propagators from flags

struct SelectorBundle {
  std::unique_ptr<pipeline::MaskSelector> selector;
  msn::MsnModel model;  // keeps the MSN weights alive for the selector
};

SelectorBundle make_selector(const std::string& kind, const std::string& model_path,
                             const synth::GeneratedScene* scene) {
  SelectorBundle b;
  if (kind == "seg") {
    b.selector = std::make_unique<pipeline::AlwaysSegmentationSelector>();
  } else if (kind == "prop") {
    b.selector = std::make_unique<pipeline::AlwaysPropagationSelector>();
  } else if (kind == "heuristic") {
    b.selector = std::make_unique<pipeline::HeuristicSelector>();
  } else if (kind == "msn") {
    if (model_path.empty())
      throw std::invalid_argument("selector 'msn' needs --model");
    b.model = msn::load_model(model_path);
    b.selector = std::make_unique<pipeline::MsnSelector>(&b.model);
  } else if (kind == "oracle") {
    if (!scene) throw std::invalid_argument("selector 'oracle' needs --scene ground truth");
    b.selector = std::make_unique<pipeline::OracleSelector>(synth::gt_masks_per_frame(*scene));
  } else {
    throw std::invalid_argument("unknown selector: " + kind);
  }
  return b;
}

// ---------------------------------------------------------------------------
// rendering

struct Glyph {
  char c;
  std::uint8_t rows[7];
};

const Glyph* find_glyph(char c) {
  static const Glyph glyphs[] = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
  };
  for (const auto& g : glyphs)
    if (g.c == c) return &g;
  return nullptr;
}

void draw_text(Image& img, int x0, int y0, const std::string& text, float r, float g, float b) {
  int x = x0;
  for (char c : text) {
    if (c == ' ') {
      x += 6;
      continue;
    }
    const Glyph* glyph = find_glyph(std::toupper(static_cast<unsigned char>(c)));
    if (!glyph) {
      x += 6;
      continue;
    }
    for (int row = 0; row < 7; ++row)
      for (int col = 0; col < 5; ++col) {
        if (!(glyph->rows[row] & (1 << (4 - col)))) continue;
        const int y = y0 + row, xx = x + col;
        if (y < 0 || y >= img.height || xx < 0 || xx >= img.width) continue;
        img.at(0, y, xx) = r;
        img.at(1, y, xx) = g;
        img.at(2, y, xx) = b;
      }
    x += 6;
  }
}

void hsv_to_rgb(double h, double s, double v, float& r, float& g, float& b) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double rr = 0, gg = 0, bb = 0;
  if (hp < 1) {
    rr = c; gg = x;
  } else if (hp < 2) {
    rr = x; gg = c;
  } else if (hp < 3) {
    gg = c; bb = x;
  } else if (hp < 4) {
    gg = x; bb = c;
  } else if (hp < 5) {
    rr = x; bb = c;
  } else {
    rr = c; bb = x;
  }
  const double m = v - c;
  r = static_cast<float>(rr + m);
  g = static_cast<float>(gg + m);
  b = static_cast<float>(bb + m);
}

void track_color(int index, float& r, float& g, float& b) {
  const double hue = std::fmod(0.61803398875 * index, 1.0);
  hsv_to_rgb(hue, 0.8, 1.0, r, g, b);
}

std::string format_score(double score) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", score);
  return buf;
}

// ---------------------------------------------------------------------------
// subcommand bodies

struct SynthGenOpts {
  std::string preset = "bench";
  std::string scenes_file;
  int videos = 0;
  std::uint64_t seed = 1;
  std::string out;
};

int run_synth_gen(const SynthGenOpts& o, CLI::App* cmd) {
  std::vector<synth::SceneConfig> configs;
  if (!o.scenes_file.empty()) {
    std::ifstream in(o.scenes_file);
    if (!in) throw std::invalid_argument("cannot open " + o.scenes_file);
    json root;
    try {
      in >> root;
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(std::string("malformed scene config: ") + e.what());
    }
    for (const auto& js : root.at("scenes")) configs.push_back(scene_from_json(js));
  } else if (o.preset == "late10") {
    configs.push_back(synth::late10_scene(o.seed));
  } else if (o.preset == "bench") {
    configs = synth::bench_scenes(o.seed, o.videos > 0 ? o.videos : 8);
  } else if (o.preset == "pairs") {
    configs = synth::pair_scenes(o.seed, o.videos > 0 ? o.videos : 36);
  } else {
    throw std::invalid_argument("unknown preset: " + o.preset);
  }

  const fs::path out_dir(o.out);
  fs::create_directories(out_dir);

  json scenes_json;
  scenes_json["scenes"] = json::array();
  std::vector<synth::GeneratedScene> scenes;
  for (const auto& cfg : configs) {
    scenes_json["scenes"].push_back(scene_to_json(cfg));
    scenes.push_back(synth::generate(cfg));
  }
  write_text(out_dir / "scenes.json", scenes_json.dump(1) + "\n");
  io::save_gt((out_dir / "gt.json").string(), synth::scenes_gt(scenes));

  for (const auto& scene : scenes) {
    const fs::path vdir = out_dir / "frames" / video_dir_name(scene.config.video_id);
    fs::create_directories(vdir);
    for (int t = 0; t < scene.config.frames; ++t)
      io::save_png((vdir / frame_file_name(t)).string(), scene.frames[t]);
  }
  write_snapshot(cmd, out_dir);
  log_info("generated " + std::to_string(scenes.size()) + " video(s) into " + o.out);
  return 0;
}

struct SynthDegradeOpts {
  std::string scene_dir;
  std::string out;
  std::string preset = "none";
  std::uint64_t seed = 1;
  double p_miss = 0, p_spurious = 0, p_classflip = 0, boundary = 0;
  double score_base = 0.9, score_sigma = 0;
};

int run_synth_degrade(const SynthDegradeOpts& o, CLI::App* cmd) {
  synth::NoiseConfig noise;
  if (o.preset == "late10")
    noise = synth::late10_noise();
  else if (o.preset == "bench")
    noise = synth::bench_noise();
  else if (o.preset != "none")
    throw std::invalid_argument("unknown noise preset: " + o.preset);

  auto maybe = [&](const char* flag, double& dst, double v) {
    if (cmd->count(flag) > 0) dst = v;
  };
  maybe("--p-miss", noise.p_miss, o.p_miss);
  maybe("--p-spurious", noise.p_spurious, o.p_spurious);
  maybe("--p-classflip", noise.p_classflip, o.p_classflip);
  maybe("--boundary", noise.boundary_level, o.boundary);
  maybe("--score-base", noise.score_base, o.score_base);
  maybe("--score-sigma", noise.score_sigma, o.score_sigma);
  if (noise.boundary_level < 0 || noise.boundary_level > 1 || noise.p_miss < 0 ||
      noise.p_miss > 1 || noise.p_classflip < 0 || noise.p_classflip > 1)
    throw std::invalid_argument("noise probabilities must sit in [0, 1]");

  io::ProposalFile file;
  for (const auto& scene : regenerate_scenes(o.scene_dir)) {
    io::ProposalVideo v;
    v.info = {scene.config.video_id, scene.config.height, scene.config.width,
              scene.config.frames};
    v.by_frame = synth::degrade(scene, noise, o.seed);
    file.videos.push_back(std::move(v));
  }
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  io::save_proposals(o.out, file);
  write_snapshot(cmd, o.out);
  log_info("wrote proposal stream " + o.out);
  return 0;
}

struct PrepareDataOpts {
  std::string scene_dir;
  std::string out;
  int videos = 36;
  int pairs_per_mask = 14;
  double margin = 0.02;
  double strength = 0.6;
  int min_area = 48;
  std::uint64_t seed = 1;
};

int run_prepare_data(const PrepareDataOpts& o, CLI::App* cmd) {
  std::vector<synth::GeneratedScene> scenes;
  if (!o.scene_dir.empty()) {
    scenes = regenerate_scenes(o.scene_dir);
  } else {
    for (const auto& cfg : synth::pair_scenes(o.seed, o.videos))
      scenes.push_back(synth::generate(cfg));
  }
  const auto crops = synth::collect_gt_crops(scenes, o.min_area);
  msn::PerturbConfig pcfg;
  pcfg.ambiguity_margin = o.margin;
  pcfg.strength = o.strength;
  pcfg.pairs_per_mask = o.pairs_per_mask;
  pcfg.min_mask_area = o.min_area;
  msn::PairStats stats;
  const auto pairs = msn::generate_pairs(crops, pcfg, o.seed, &stats);
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  save_pairs(o.out, pairs);
  write_snapshot(cmd, o.out);
  log_info("kept " + std::to_string(stats.kept) + " pairs, discarded " +
           std::to_string(stats.discarded) + " ambiguous/empty");
  std::cout << json{{"pairs", stats.kept}, {"discarded", stats.discarded}}.dump() << "\n";
  return 0;
}

struct TrainOpts {
  std::string data;
  std::string out;
  std::string history;
  std::string arch = "reduced";
  int epochs = 40;
  int batch = 512;
  double lr = 0.01;
  double val_fraction = 0.1;
  double stop_at = -1;
  bool no_shuffle_order = false;
  std::uint64_t seed = 1;
};

int run_train(const TrainOpts& o, CLI::App* cmd) {
  const auto pairs = load_pairs(o.data);
  msn::MsnArch arch;
  if (o.arch == "reduced")
    arch = msn::MsnArch::reduced64();
  else if (o.arch == "toy")
    arch = msn::MsnArch::toy(32);
  else if (o.arch == "full")
    arch = msn::MsnArch::full256();
  else
    throw std::invalid_argument("unknown arch: " + o.arch);

  msn::TrainConfig cfg;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.epochs = o.epochs;
  cfg.validation_fraction = o.val_fraction;
  cfg.stop_at_accuracy = o.stop_at;
  cfg.shuffle_input_order = !o.no_shuffle_order;
  cfg.seed = o.seed;

  const auto t0 = std::chrono::steady_clock::now();
  const msn::TrainResult result = msn::train(pairs, arch, cfg);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  msn::save_model(result.model, o.out);
  json history = json::array();
  for (const auto& e : result.history)
    history.push_back({{"epoch", e.epoch},
                       {"lr", e.lr},
                       {"train_loss", e.train_loss},
                       {"val_accuracy", e.val_accuracy},
                       {"val_accuracy_raw", e.val_accuracy_raw}});
  if (!o.history.empty()) write_text(o.history, history.dump(1) + "\n");
  write_snapshot(cmd, o.out);

  const auto& last = result.history.back();
  log_info("trained " + std::to_string(result.history.size()) + " epoch(s) in " +
           std::to_string(sec) + "s");
  std::cout << json{{"epochs", result.history.size()},
                    {"val_accuracy", last.val_accuracy},
                    {"val_accuracy_raw", last.val_accuracy_raw},
                    {"seconds", sec}}
                   .dump()
            << "\n";
  return 0;
}

struct MsnEvalOpts {
  std::string data;
  std::string model;
  std::string out;
};

int run_msn_eval(const MsnEvalOpts& o, CLI::App* cmd) {
  const auto pairs = load_pairs(o.data);
  if (pairs.empty()) throw std::invalid_argument("pair file is empty");
  const msn::MsnModel model = msn::load_model(o.model);
  const msn::PairAccuracy acc = msn::evaluate_pairs(model, pairs);

  std::size_t heuristic_ok = 0;
  for (const auto& p : pairs)
    if (msn::heuristic_select(p.image, p.mask_a, p.mask_b).a_wins == p.a_better) ++heuristic_ok;

  const json out = {{"pairs", pairs.size()},
                    {"msn_accuracy", acc.symmetrized},
                    {"msn_accuracy_raw", acc.raw},
                    {"heuristic_accuracy", static_cast<double>(heuristic_ok) / pairs.size()}};
  std::cout << out.dump() << "\n";
  if (!o.out.empty()) {
    write_text(o.out, out.dump(1) + "\n");
    write_snapshot(cmd, o.out);
  }
  return 0;
}

struct TrackOpts {
  std::string scene_dir;
  std::string proposals;
  std::string direction = "both";
  std::string selector = "heuristic";
  std::string model;
  std::string propagator = "shift";
  double prop_erode = 0, prop_jitter = 0;
  int radius = 16;
  double score_threshold = 0.5;
  double iou_floor = 0.1;
  int max_objects = 15;
  double tau = 0;
  int patience = -1;
  int jobs = 1;
  std::uint64_t seed = 1;
  std::string out;
};

int run_track(const TrackOpts& o, CLI::App* cmd) {
  const io::ProposalFile proposals = io::load_proposals(o.proposals);
  if (proposals.videos.empty()) throw std::invalid_argument("proposal file lists no videos");

  const bool needs_scene_truth = o.selector == "oracle" || o.propagator == "oracle";
  std::vector<synth::GeneratedScene> scenes;
  std::map<int, const synth::GeneratedScene*> scene_by_video;
  scenes = regenerate_scenes(o.scene_dir);
  for (const auto& s : scenes) scene_by_video[s.config.video_id] = &s;

  pipeline::PipelineConfig cfg;
  cfg.score_threshold = o.score_threshold;
  cfg.iou_floor = o.iou_floor;
  cfg.max_objects = o.max_objects;
  cfg.intersection_tolerance = o.tau;
  cfg.patience = o.patience;

  const bool run_fwd = o.direction == "fwd" || o.direction == "both";
  const bool run_bwd = o.direction == "bwd" || o.direction == "both";
  if (!run_fwd && !run_bwd) throw std::invalid_argument("direction must be fwd, bwd or both");

  std::vector<std::vector<eval::ResultTrack>> fwd_results(proposals.videos.size());
  std::vector<std::vector<eval::ResultTrack>> bwd_results(proposals.videos.size());

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t vi = next.fetch_add(1);
      if (vi >= proposals.videos.size() || failed.load()) return;
      try {
        const io::ProposalVideo& pv = proposals.videos[vi];
        const auto it = scene_by_video.find(pv.info.id);
        if (it == scene_by_video.end())
          throw std::invalid_argument("proposal video " + std::to_string(pv.info.id) +
                                      " is not in the scene dir");
        const synth::GeneratedScene* scene = it->second;
        if (scene->config.frames != pv.info.length)
          throw std::invalid_argument("frame count mismatch for video " +
                                      std::to_string(pv.info.id));
        const std::vector<Image> frames =
            load_video_frames(o.scene_dir, pv.info.id, pv.info.length);

        std::unique_ptr<pipeline::Propagator> propagator;
        if (o.propagator == "shift") {
          propagator = std::make_unique<pipeline::ShiftPropagator>(o.radius);
        } else if (o.propagator == "oracle") {
          synth::OraclePropagator::Noise noise;
          noise.erode_level = o.prop_erode;
          noise.jitter_level = o.prop_jitter;
          propagator = std::make_unique<synth::OraclePropagator>(scene, noise, o.seed);
        } else {
          throw std::invalid_argument("unknown propagator: " + o.propagator);
        }

        SelectorBundle bundle =
            make_selector(o.selector, o.model, needs_scene_truth ? scene : nullptr);

        if (run_fwd) {
          const auto tracks = pipeline::run(frames, pv.by_frame, pipeline::Direction::Forward,
                                            cfg, *propagator, bundle.selector.get());
          fwd_results[vi] = io::tracks_to_results(tracks, pv.info.id, pv.info.length);
        }
        if (run_bwd) {
          const auto tracks = pipeline::run(frames, pv.by_frame, pipeline::Direction::Backward,
                                            cfg, *propagator, bundle.selector.get());
          bwd_results[vi] = io::tracks_to_results(tracks, pv.info.id, pv.info.length);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        failed = true;
        try {
          throw;
        } catch (const std::exception& e) {
          error_message = e.what();
        }
        return;
      }
    }
  };

  const int jobs = std::max(1, o.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed) throw std::runtime_error("track run failed: " + error_message);

  const fs::path out_dir(o.out);
  fs::create_directories(out_dir);
  auto flatten = [](const std::vector<std::vector<eval::ResultTrack>>& per_video) {
    std::vector<eval::ResultTrack> all;
    for (const auto& v : per_video) all.insert(all.end(), v.begin(), v.end());
    return all;
  };
  if (run_fwd) io::save_results((out_dir / "results_fwd.json").string(), flatten(fwd_results));
  if (run_bwd) io::save_results((out_dir / "results_bwd.json").string(), flatten(bwd_results));
  write_snapshot(cmd, out_dir);
  log_info("tracking complete for " + std::to_string(proposals.videos.size()) + " video(s)");
  return 0;
}

struct MergeOpts {
  std::string fwd;
  std::string bwd;
  std::string out;
  std::string report;
  std::string scene_dir;
  std::string selector = "none";
  std::string model;
  std::string gt;
  double merge_iou = 0.5;
  bool no_link_humans = false;
};

int run_merge(const MergeOpts& o, CLI::App* cmd) {
  const auto fwd = io::load_results(o.fwd);
  const auto bwd = io::load_results(o.bwd);

  std::vector<synth::GeneratedScene> scenes;
  std::map<int, const synth::GeneratedScene*> scene_by_video;
  if (!o.scene_dir.empty()) {
    scenes = regenerate_scenes(o.scene_dir);
    for (const auto& s : scenes) scene_by_video[s.config.video_id] = &s;
  }
  const std::vector<eval::CategoryInfo> categories =
      o.gt.empty() ? synth::default_categories() : io::load_gt(o.gt).categories;

  // collect (video, length) from both files
  std::map<int, int> video_len;
  for (const auto& r : fwd) video_len[r.video_id] = static_cast<int>(r.segmentations.size());
  for (const auto& r : bwd) {
    const int len = static_cast<int>(r.segmentations.size());
    if (video_len.count(r.video_id) && video_len[r.video_id] != len)
      throw std::invalid_argument("forward/backward files disagree on video length");
    video_len[r.video_id] = len;
  }

  std::vector<eval::ResultTrack> merged_all;
  json report_json = json::array();
  for (const auto& [video_id, n_frames] : video_len) {
    const auto fwd_tracks = io::results_to_tracks(fwd, video_id);
    const auto bwd_tracks = io::results_to_tracks(bwd, video_id);

    const synth::GeneratedScene* scene =
        scene_by_video.count(video_id) ? scene_by_video.at(video_id) : nullptr;
    SelectorBundle bundle;
    std::vector<Image> frames;
    if (o.selector != "none") {
      bundle = make_selector(o.selector, o.model, scene);
      if (!o.scene_dir.empty())
        frames = load_video_frames(o.scene_dir, video_id, n_frames);
    }

    const postproc::MergeGraph graph =
        postproc::associate_passes(fwd_tracks, bwd_tracks, o.merge_iou, n_frames);
    postproc::MergeReport rep;
    auto merged = postproc::merge_tracks(graph, fwd_tracks, bwd_tracks,
                                         frames.empty() ? nullptr : &frames,
                                         bundle.selector.get(), &rep);
    if (!o.no_link_humans) merged = postproc::human_object_link(merged, categories);

    const auto results = io::tracks_to_results(merged, video_id, n_frames);
    merged_all.insert(merged_all.end(), results.begin(), results.end());

    json jv;
    jv["video_id"] = video_id;
    jv["edges"] = json::array();
    for (const auto& e : graph.edges)
      jv["edges"].push_back({{"fwd", e.fwd_index}, {"bwd", e.bwd_index}, {"votes", e.votes}});
    jv["merged"] = rep.accepted.size();
    jv["fwd_passthrough"] = rep.fwd_passthrough.size();
    jv["bwd_passthrough"] = rep.bwd_passthrough.size();
    report_json.push_back(std::move(jv));
  }

  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  io::save_results(o.out, merged_all);
  if (!o.report.empty()) write_text(o.report, report_json.dump(1) + "\n");
  write_snapshot(cmd, o.out);
  log_info("merged into " + std::to_string(merged_all.size()) + " track(s)");
  return 0;
}

struct EvalOpts {
  std::string pred;
  std::string gt;
  std::string out;
};

int run_eval(const EvalOpts& o, CLI::App* cmd) {
  const auto predictions = io::load_results(o.pred);
  const auto gt = io::load_gt(o.gt);
  const eval::ApReport report = eval::evaluate(predictions, gt);
  std::cout << eval::format_report(report, gt);

  json j;
  j["mAP"] = report.map;
  j["AP50"] = report.ap50;
  j["AP75"] = report.ap75;
  j["AR1"] = report.ar1;
  j["AR10"] = report.ar10;
  j["per_class"] = json::object();
  for (const auto& [cls, ap] : report.per_class_ap) j["per_class"][std::to_string(cls)] = ap;
  std::cout << j.dump() << "\n";
  if (!o.out.empty()) {
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    write_text(o.out, j.dump(1) + "\n");
    write_snapshot(cmd, o.out);
  }
  return 0;
}

struct RenderOpts {
  std::string scene_dir;
  std::string results;
  std::string out;
};

int run_render(const RenderOpts& o, CLI::App* cmd) {
  const auto results = io::load_results(o.results);
  const auto configs = load_scene_configs(o.scene_dir);

  const fs::path out_dir(o.out);
  for (const auto& cfg : configs) {
    std::vector<const eval::ResultTrack*> tracks;
    for (const auto& r : results)
      if (r.video_id == cfg.video_id) tracks.push_back(&r);
    if (!tracks.empty() &&
        static_cast<int>(tracks.front()->segmentations.size()) != cfg.frames)
      throw std::invalid_argument("result file does not match the video frame count");

    const std::vector<Image> frames = load_video_frames(o.scene_dir, cfg.video_id, cfg.frames);
    const fs::path vdir = out_dir / video_dir_name(cfg.video_id);
    fs::create_directories(vdir);

    for (int t = 0; t < cfg.frames; ++t) {
      Image canvas = frames[t];
      if (tracks.empty()) draw_text(canvas, 2, 2, "0 TRACKS", 1.f, 0.2f, 0.2f);
      for (std::size_t k = 0; k < tracks.size(); ++k) {
        const auto& seg = tracks[k]->segmentations[t];
        if (!seg.has_value()) continue;
        const DenseMask m = rle_decode(*seg);
        if (area(m) == 0) continue;
        float r, g, b;
        track_color(static_cast<int>(k), r, g, b);
        for (int y = 0; y < m.height; ++y)
          for (int x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            canvas.at(0, y, x) = 0.55f * canvas.at(0, y, x) + 0.45f * r;
            canvas.at(1, y, x) = 0.55f * canvas.at(1, y, x) + 0.45f * g;
            canvas.at(2, y, x) = 0.55f * canvas.at(2, y, x) + 0.45f * b;
          }
        const BBox box = tight_bbox(m);
        const std::string label = "C" + std::to_string(tracks[k]->category_id) + " " +
                                  format_score(tracks[k]->score);
        draw_text(canvas, std::max(0, box.x0), std::max(0, box.y0 - 8), label, r, g, b);
      }
      io::save_png((vdir / frame_file_name(t)).string(), canvas);
    }
  }
  write_snapshot(cmd, out_dir);
  log_info("rendered overlays into " + o.out);
  return 0;
}

struct BenchOpts {
  int n = 200;
  std::uint64_t seed = 1;
};

int run_bench(const std::string& which, const BenchOpts& o) {
  Rng rng(o.seed);
  if (which == "hungarian") {
    assign::CostMatrix m(o.n, o.n);
    for (auto& v : m.values) v = rng.uniform(0.0, 1.0);
    const auto t0 = std::chrono::steady_clock::now();
    const auto a = assign::hungarian(m, assign::Sense::Minimize);
    const double sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << json{{"bench", "hungarian"}, {"n", o.n}, {"seconds", sec},
                      {"total_cost", a.total_cost}}
                     .dump()
              << "\n";
  } else if (which == "rle") {
    const auto t0 = std::chrono::steady_clock::now();
    std::uint64_t pixels = 0;
    double iou_sum = 0;
    for (int i = 0; i < o.n; ++i) {
      DenseMask a(64, 64), b(64, 64);
      for (auto& v : a.bits) v = rng.bernoulli(0.4);
      for (auto& v : b.bits) v = rng.bernoulli(0.4);
      const RleMask ra = rle_encode(a), rb = rle_encode(b);
      if (!(rle_decode(ra) == a)) throw std::runtime_error("rle round trip failed");
      iou_sum += mask_iou(ra, rb);
      pixels += a.bits.size();
    }
    const double sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << json{{"bench", "rle"}, {"masks", o.n}, {"pixels", pixels}, {"seconds", sec},
                      {"mean_iou", iou_sum / o.n}}
                     .dump()
              << "\n";
  } else if (which == "msn") {
    const msn::MsnModel model = msn::MsnModel::init(msn::MsnArch::reduced64(), o.seed);
    Tensor input(8, 64, 64);
    for (auto& v : input.data) v = rng.uniform(0.0, 1.0);
    msn::forward(model, input);  // warm-up
    const int reps = std::max(1, o.n / 20);
    const auto t0 = std::chrono::steady_clock::now();
    double acc = 0;
    for (int i = 0; i < reps; ++i) acc += msn::forward(model, input).probability;
    const double sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << json{{"bench", "msn"}, {"forwards", reps},
                      {"per_forward_ms", 1000.0 * sec / reps}, {"checksum", acc}}
                     .dump()
              << "\n";
  } else {
    throw std::invalid_argument("unknown bench target: " + which);
  }
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"masktrack: online mask-selection video instance tracking"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  int exit_code = 0;
  std::function<int()> action;

  // --- synth ---
  auto* synth_cmd = app.add_subcommand("synth", "synthetic video generation");
  synth_cmd->require_subcommand(1);

  auto gen_opts = std::make_shared<SynthGenOpts>();
  auto* gen = synth_cmd->add_subcommand("gen", "generate scenes, frames and ground truth");
  gen->add_option("--preset", gen_opts->preset, "late10 | bench | pairs");
  gen->add_option("--scenes", gen_opts->scenes_file, "scene config JSON (overrides --preset)");
  gen->add_option("--videos", gen_opts->videos, "number of videos for bench/pairs presets");
  gen->add_option("--seed", gen_opts->seed, "global seed");
  gen->add_option("--out", gen_opts->out, "output directory")->required();
  gen->set_config("--config");
  gen->callback([&action, gen_opts, gen]() { action = [=]() { return run_synth_gen(*gen_opts, gen); }; });

  auto deg_opts = std::make_shared<SynthDegradeOpts>();
  auto* deg = synth_cmd->add_subcommand("degrade", "derive a noisy proposal stream");
  deg->add_option("--scene", deg_opts->scene_dir, "scene directory from synth gen")->required();
  deg->add_option("--out", deg_opts->out, "proposal stream JSON")->required();
  deg->add_option("--preset", deg_opts->preset, "none | late10 | bench");
  deg->add_option("--seed", deg_opts->seed, "noise seed");
  deg->add_option("--p-miss", deg_opts->p_miss, "detection dropout probability");
  deg->add_option("--p-spurious", deg_opts->p_spurious, "spurious blobs per frame (Poisson)");
  deg->add_option("--p-classflip", deg_opts->p_classflip, "class flip probability");
  deg->add_option("--boundary", deg_opts->boundary, "boundary perturbation level in [0,1]");
  deg->add_option("--score-base", deg_opts->score_base, "score model base factor");
  deg->add_option("--score-sigma", deg_opts->score_sigma, "score model noise sigma");
  deg->set_config("--config");
  deg->callback([&action, deg_opts, deg]() { action = [=]() { return run_synth_degrade(*deg_opts, deg); }; });

  // --- msn ---
  auto* msn_cmd = app.add_subcommand("msn", "mask selection network");
  msn_cmd->require_subcommand(1);

  auto prep_opts = std::make_shared<PrepareDataOpts>();
  auto* prep = msn_cmd->add_subcommand("prepare-data", "synthesize training pairs");
  prep->add_option("--scene", prep_opts->scene_dir, "reuse an existing scene directory");
  prep->add_option("--videos", prep_opts->videos, "pair-preset videos when no --scene");
  prep->add_option("--out", prep_opts->out, "pair sample file")->required();
  prep->add_option("--pairs-per-mask", prep_opts->pairs_per_mask, "degraded pairs per mask");
  prep->add_option("--margin", prep_opts->margin, "ambiguity margin on the IoU gap");
  prep->add_option("--strength", prep_opts->strength, "degradation strength");
  prep->add_option("--min-area", prep_opts->min_area, "skip masks smaller than this");
  prep->add_option("--seed", prep_opts->seed, "generation seed");
  prep->set_config("--config");
  prep->callback([&action, prep_opts, prep]() { action = [=]() { return run_prepare_data(*prep_opts, prep); }; });

  auto train_opts = std::make_shared<TrainOpts>();
  auto* tr = msn_cmd->add_subcommand("train", "train the selector");
  tr->add_option("--data", train_opts->data, "pair sample file")->required();
  tr->add_option("--out", train_opts->out, "model output path")->required();
  tr->add_option("--history", train_opts->history, "write per-epoch stats JSON");
  tr->add_option("--arch", train_opts->arch, "reduced | toy | full");
  tr->add_option("--epochs", train_opts->epochs, "max epochs");
  tr->add_option("--batch", train_opts->batch, "batch size");
  tr->add_option("--lr", train_opts->lr, "learning rate");
  tr->add_option("--val-fraction", train_opts->val_fraction, "validation split fraction");
  tr->add_option("--stop-at", train_opts->stop_at, "early-stop validation accuracy (<0 off)");
  tr->add_flag("--no-shuffle-order", train_opts->no_shuffle_order,
               "disable random (A,B)/(B,A) presentation");
  tr->add_option("--seed", train_opts->seed, "training seed");
  tr->set_config("--config");
  tr->callback([&action, train_opts, tr]() { action = [=]() { return run_train(*train_opts, tr); }; });

  auto meval_opts = std::make_shared<MsnEvalOpts>();
  auto* meval = msn_cmd->add_subcommand("eval", "pair accuracy of a trained model");
  meval->add_option("--data", meval_opts->data, "pair sample file")->required();
  meval->add_option("--model", meval_opts->model, "model path")->required();
  meval->add_option("--out", meval_opts->out, "write the accuracy JSON here too");
  meval->set_config("--config");
  meval->callback([&action, meval_opts, meval]() { action = [=]() { return run_msn_eval(*meval_opts, meval); }; });

  // --- track ---
  auto* track_cmd = app.add_subcommand("track", "stage-2 online tracking");
  track_cmd->require_subcommand(1);

  auto track_opts = std::make_shared<TrackOpts>();
  auto* trun = track_cmd->add_subcommand("run", "run the tracker over a proposal stream");
  trun->add_option("--scene", track_opts->scene_dir, "scene directory (frames + ground truth)")
      ->required();
  trun->add_option("--proposals", track_opts->proposals, "proposal stream JSON")->required();
  trun->add_option("--direction", track_opts->direction, "fwd | bwd | both");
  trun->add_option("--selector", track_opts->selector,
                   "msn | heuristic | oracle | seg | prop");
  trun->add_option("--model", track_opts->model, "MSN weights (selector=msn)");
  trun->add_option("--propagator", track_opts->propagator, "shift | oracle");
  trun->add_option("--prop-erode", track_opts->prop_erode, "oracle propagator erosion level");
  trun->add_option("--prop-jitter", track_opts->prop_jitter, "oracle propagator jitter level");
  trun->add_option("--radius", track_opts->radius, "shift propagator search radius");
  trun->add_option("--score-threshold", track_opts->score_threshold, "detection score cut");
  trun->add_option("--iou-floor", track_opts->iou_floor, "association IoU floor");
  trun->add_option("--max-objects", track_opts->max_objects, "active track cap");
  trun->add_option("--tau", track_opts->tau, "same-class intersection tolerance");
  trun->add_option("--patience", track_opts->patience, "empty frames before retirement (<0 off)");
  trun->add_option("--jobs", track_opts->jobs, "videos processed in parallel");
  trun->add_option("--seed", track_opts->seed, "propagation noise seed");
  trun->add_option("--out", track_opts->out, "output directory")->required();
  trun->set_config("--config");
  trun->callback([&action, track_opts, trun]() { action = [=]() { return run_track(*track_opts, trun); }; });

  // --- merge ---
  auto merge_opts = std::make_shared<MergeOpts>();
  auto* mrg = app.add_subcommand("merge", "combine forward and backward passes");
  mrg->add_option("--fwd", merge_opts->fwd, "forward result file")->required();
  mrg->add_option("--bwd", merge_opts->bwd, "backward result file")->required();
  mrg->add_option("--out", merge_opts->out, "merged result file")->required();
  mrg->add_option("--report", merge_opts->report, "merge diagnostic JSON");
  mrg->add_option("--merge-iou", merge_opts->merge_iou, "pass-association IoU floor");
  mrg->add_option("--scene", merge_opts->scene_dir, "scene dir (images for the selector)");
  mrg->add_option("--selector", merge_opts->selector,
                  "none | msn | heuristic | oracle | seg | prop for dual-coverage frames");
  mrg->add_option("--model", merge_opts->model, "MSN weights (selector=msn)");
  mrg->add_option("--gt", merge_opts->gt, "annotation file providing category names");
  mrg->add_flag("--no-link-humans", merge_opts->no_link_humans,
                "skip rider-class/person fragment linking");
  mrg->set_config("--config");
  mrg->callback([&action, merge_opts, mrg]() { action = [=]() { return run_merge(*merge_opts, mrg); }; });

  // --- eval ---
  auto eval_opts = std::make_shared<EvalOpts>();
  auto* ev = app.add_subcommand("eval", "VIS-style evaluation");
  ev->add_option("--pred", eval_opts->pred, "result file")->required();
  ev->add_option("--gt", eval_opts->gt, "annotation file")->required();
  ev->add_option("--out", eval_opts->out, "report JSON");
  ev->set_config("--config");
  ev->callback([&action, eval_opts, ev]() { action = [=]() { return run_eval(*eval_opts, ev); }; });

  // --- render ---
  auto render_opts = std::make_shared<RenderOpts>();
  auto* rd = app.add_subcommand("render", "overlay tracks onto frames");
  rd->add_option("--scene", render_opts->scene_dir, "scene directory")->required();
  rd->add_option("--results", render_opts->results, "result file")->required();
  rd->add_option("--out", render_opts->out, "output directory")->required();
  rd->set_config("--config");
  rd->callback([&action, render_opts, rd]() { action = [=]() { return run_render(*render_opts, rd); }; });

  // --- bench ---
  auto* bench_cmd = app.add_subcommand("bench", "micro-benchmarks");
  bench_cmd->require_subcommand(1);
  for (const std::string which : {"hungarian", "rle", "msn"}) {
    auto opts = std::make_shared<BenchOpts>();
    auto* b = bench_cmd->add_subcommand(which, "benchmark " + which);
    b->add_option("--n", opts->n, "problem size / repetition count");
    b->add_option("--seed", opts->seed, "seed");
    b->callback([&action, opts, which]() { action = [=]() { return run_bench(which, *opts); }; });
  }

  try {
    // CLI11's vector overload consumes a reversed argument list.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    exit_code = app.exit(e);
    return exit_code;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    return action ? action() : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "config"}}.dump() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "runtime"}}.dump() << "\n";
    return 1;
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

}  // namespace masktrack::cli
